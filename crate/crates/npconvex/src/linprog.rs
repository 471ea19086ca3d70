//! Exact solvers for the tiny linear programs the pipeline needs:
//! penalty programs over generator weights and linear objectives over
//! box-and-halfspace polytopes.
//!
//! Problem sizes here are single digits of variables and at most a few
//! dozen constraints, so exhaustive enumeration of basic solutions /
//! vertices beats an iterative simplex: it is exact up to one linear
//! solve, deterministic (lexicographic scan, first strict improvement
//! kept), and has no pivoting edge cases.

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
}

/// Residual tolerance for "this candidate satisfies the constraints".
const FEAS_TOL: f64 = 1e-9;
/// Nonnegativity slack allowed on basic variables.
const NONNEG_TOL: f64 = 1e-11;
/// A candidate must beat the incumbent by this much to replace it.
const IMPROVE_TOL: f64 = 1e-12;

/// Solves `min c·λ  s.t.  A λ = b, λ ≥ 0` exactly by enumerating column
/// subsets of size ≤ rows. Every basic feasible solution is visited, so
/// the optimum (or infeasibility) is certain for consistent inputs.
pub fn lp_eq_nonneg(cost: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let m = cost.len();
    let d = a.len();
    debug_assert!(a.iter().all(|row| row.len() == m));
    let scale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));

    let mut best: Option<(f64, Vec<f64>)> = None;
    let max_k = d.min(m);
    for k in 0..=max_k {
        for subset in Combinations::new(m, k) {
            // Solve the d×k system A_S x = b; skip rank-deficient or
            // inconsistent subsets (a smaller subset covers the former).
            let mut aug: Vec<Vec<f64>> = (0..d)
                .map(|r| {
                    let mut row: Vec<f64> = subset.iter().map(|&c| a[r][c]).collect();
                    row.push(b[r]);
                    row
                })
                .collect();
            let Some(sol) = solve_overdetermined(&mut aug, k, scale) else {
                continue;
            };
            if sol.iter().any(|&v| v < -NONNEG_TOL) {
                continue;
            }
            let mut x = vec![0.0; m];
            for (slot, &col) in subset.iter().enumerate() {
                x[col] = sol[slot].max(0.0);
            }
            let value: f64 = x.iter().zip(cost).map(|(xi, ci)| xi * ci).sum();
            let better = match &best {
                None => true,
                Some((v, _)) => value < v - IMPROVE_TOL * v.abs().max(1.0),
            };
            if better {
                best = Some((value, x));
            }
        }
    }
    match best {
        Some((value, x)) => LpOutcome::Optimal { value, x },
        None => LpOutcome::Infeasible,
    }
}

/// Gaussian elimination on a d×(k+1) augmented system with partial
/// pivoting. Returns the unique solution when the coefficient block has
/// full column rank and the system is consistent, else `None`.
fn solve_overdetermined(aug: &mut [Vec<f64>], k: usize, scale: f64) -> Option<Vec<f64>> {
    let d = aug.len();
    if k > d {
        return None;
    }
    let mut row = 0;
    let mut pivots = Vec::with_capacity(k);
    for col in 0..k {
        let (pivot_row, pivot_val) = (row..d)
            .map(|r| (r, aug[r][col].abs()))
            .fold((row, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if pivot_val < 1e-12 * scale.max(1.0) {
            return None; // rank-deficient subset
        }
        aug.swap(row, pivot_row);
        for r in 0..d {
            if r != row {
                let factor = aug[r][col] / aug[row][col];
                if factor != 0.0 {
                    for c in col..=k {
                        aug[r][c] -= factor * aug[row][c];
                    }
                }
            }
        }
        pivots.push((row, col));
        row += 1;
        if row == d {
            break;
        }
    }
    if pivots.len() < k {
        return None;
    }
    // Remaining rows must have (near-)zero residual for consistency.
    for r in row..d {
        if aug[r][k].abs() > FEAS_TOL * scale.max(1.0) {
            return None;
        }
    }
    let mut sol = vec![0.0; k];
    for &(r, c) in &pivots {
        sol[c] = aug[r][k] / aug[r][c];
    }
    Some(sol)
}

/// A `≤` row `a·x ≤ b`.
#[derive(Clone, Debug)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

/// Solves `min c·x  s.t.  lo ≤ x ≤ hi, rows` exactly by enumerating the
/// vertices of the (bounded) polytope: every subset of n active
/// constraints drawn from rows and box faces. First strict improvement
/// in lexicographic scan order is kept, so ties resolve
/// deterministically.
pub fn lp_box_rows(cost: &[f64], rows: &[Halfspace], lo: &[f64], hi: &[f64]) -> LpOutcome {
    let n = cost.len();
    debug_assert!(rows.iter().all(|r| r.a.len() == n));
    // Constraint list: rows, then lo faces, then hi faces.
    let total = rows.len() + 2 * n;
    let constraint = |idx: usize| -> (Vec<f64>, f64) {
        if idx < rows.len() {
            (rows[idx].a.clone(), rows[idx].b)
        } else if idx < rows.len() + n {
            let i = idx - rows.len();
            let mut a = vec![0.0; n];
            a[i] = -1.0;
            (a, -lo[i])
        } else {
            let i = idx - rows.len() - n;
            let mut a = vec![0.0; n];
            a[i] = 1.0;
            (a, hi[i])
        }
    };

    let feasible = |x: &[f64]| -> bool {
        for i in 0..n {
            let span = (hi[i] - lo[i]).abs().max(1.0);
            if x[i] < lo[i] - FEAS_TOL * span || x[i] > hi[i] + FEAS_TOL * span {
                return false;
            }
        }
        for row in rows {
            let lhs: f64 = row.a.iter().zip(x).map(|(a, v)| a * v).sum();
            let scale = row
                .a
                .iter()
                .zip(x)
                .map(|(a, v)| (a * v).abs())
                .fold(row.b.abs().max(1.0), f64::max);
            if lhs > row.b + FEAS_TOL * scale {
                return false;
            }
        }
        true
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    for subset in Combinations::new(total, n) {
        let mut mat: Vec<Vec<f64>> = Vec::with_capacity(n);
        for &idx in &subset {
            let (a, b) = constraint(idx);
            let mut row = a;
            row.push(b);
            mat.push(row);
        }
        let Some(x) = solve_overdetermined(&mut mat, n, 1.0) else {
            continue;
        };
        if !feasible(&x) {
            continue;
        }
        let value: f64 = x.iter().zip(cost).map(|(xi, ci)| xi * ci).sum();
        let better = match &best {
            None => true,
            Some((v, _)) => value < v - IMPROVE_TOL * v.abs().max(1.0),
        };
        if better {
            best = Some((value, x));
        }
    }
    match best {
        Some((value, x)) => LpOutcome::Optimal { value, x },
        None => LpOutcome::Infeasible,
    }
}

/// Lexicographic k-subsets of {0, …, n−1}.
struct Combinations {
    n: usize,
    k: usize,
    state: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        let state = if k <= n {
            Some((0..k).collect())
        } else {
            None
        };
        Self { n, k, state }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.state.clone()?;
        // Advance to the next lexicographic subset.
        let mut next = current.clone();
        let mut i = self.k;
        loop {
            if i == 0 {
                self.state = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - (self.k - i) {
                next[i] += 1;
                for j in i + 1..self.k {
                    next[j] = next[j - 1] + 1;
                }
                self.state = Some(next);
                break;
            }
        }
        Some(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_enumerate_lexicographically() {
        let all: Vec<Vec<usize>> = Combinations::new(4, 2).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        let empty: Vec<Vec<usize>> = Combinations::new(3, 0).collect();
        assert_eq!(empty, vec![Vec::<usize>::new()]);
    }

    #[test]
    fn eq_nonneg_mixture_weights() {
        // q is the midpoint of two generator columns; the minimal-cost
        // representation is the even mixture.
        let a = vec![vec![2.0, 0.0, 1.0], vec![0.0, 2.0, 1.0]];
        let b = vec![1.0, 1.0];
        let cost = vec![0.3, 0.1, 0.5];
        match lp_eq_nonneg(&cost, &a, &b) {
            LpOutcome::Optimal { value, x } => {
                assert!((value - 0.2).abs() < 1e-12, "value = {value}");
                assert!((x[0] - 0.5).abs() < 1e-9 && (x[1] - 0.5).abs() < 1e-9);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn eq_nonneg_prefers_cheap_column() {
        // b is reachable either by column 2 alone (cost 0.5) or the
        // mixture of 0 and 1 (cost 0.05); the mixture wins.
        let a = vec![vec![2.0, 0.0, 1.0], vec![0.0, 2.0, 1.0]];
        let b = vec![1.0, 1.0];
        let cost = vec![0.05, 0.05, 0.5];
        match lp_eq_nonneg(&cost, &a, &b) {
            LpOutcome::Optimal { value, .. } => assert!((value - 0.05).abs() < 1e-12),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn eq_nonneg_detects_infeasible() {
        let a = vec![vec![1.0, 1.0]];
        let b = vec![-1.0];
        assert_eq!(lp_eq_nonneg(&[0.0, 0.0], &a, &b), LpOutcome::Infeasible);
    }

    #[test]
    fn eq_nonneg_handles_duplicate_columns() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let b = vec![1.0, 1.0];
        match lp_eq_nonneg(&[2.0, 3.0], &a, &b) {
            LpOutcome::Optimal { value, x } => {
                assert!((value - 2.0).abs() < 1e-12);
                assert!((x[0] - 1.0).abs() < 1e-9 && x[1].abs() < 1e-9);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn box_rows_matches_fractional_knapsack() {
        // max 3x₀ + x₁ s.t. x₀ + x₁ ≤ 1.2, x ∈ [0,1]² — fill the
        // valuable coordinate, then the remainder fractionally.
        let rows = vec![Halfspace {
            a: vec![1.0, 1.0],
            b: 1.2,
        }];
        match lp_box_rows(&[-3.0, -1.0], &rows, &[0.0, 0.0], &[1.0, 1.0]) {
            LpOutcome::Optimal { value, x } => {
                assert!((value + 3.2).abs() < 1e-12);
                assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 0.2).abs() < 1e-9);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn box_rows_epigraph_minimizes_max_affine() {
        // min t s.t. t ≥ x, t ≥ 1 − x, x ∈ [0,1], t ∈ [−10, 10]:
        // optimum t = 1/2 at the kink.
        let rows = vec![
            Halfspace {
                a: vec![1.0, -1.0],
                b: 0.0,
            },
            Halfspace {
                a: vec![-1.0, -1.0],
                b: -1.0,
            },
        ];
        match lp_box_rows(&[0.0, 1.0], &rows, &[0.0, -10.0], &[1.0, 10.0]) {
            LpOutcome::Optimal { value, x } => {
                assert!((value - 0.5).abs() < 1e-12);
                assert!((x[0] - 0.5).abs() < 1e-9);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn box_rows_detects_infeasible() {
        let rows = vec![Halfspace {
            a: vec![1.0],
            b: -0.5,
        }];
        assert_eq!(
            lp_box_rows(&[1.0], &rows, &[0.0], &[1.0]),
            LpOutcome::Infeasible
        );
    }
}
