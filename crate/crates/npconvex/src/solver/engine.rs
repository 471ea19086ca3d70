//! Certified minimization of structured convex functions over boxes.
//!
//! Every program the solver pipeline has to handle is of the form
//!
//! ```text
//! minimize obj(x)  subject to  con(x) ≤ limit,  x ∈ [lo, hi]^n,
//! ```
//!
//! where `obj` and `con` are each affine, log-sum-exp, or max-affine
//! descriptors obtained from a convex expectation. The dispatcher picks
//! the strongest available method:
//!
//! - affine/affine: an exact one-constraint greedy (fractional
//!   knapsack with general coefficient signs);
//! - log-sum-exp against affine (either role): an outer bisection on
//!   the constraint multiplier with an exact inner fixed point;
//! - max-affine against affine pieces: exact vertex-enumeration linear
//!   programming in small dimension;
//! - the remaining combinations: nested golden-section search (n ≤ 3)
//!   or projected descent (larger n), always followed by an attempt to
//!   produce a certified dual lower bound.
//!
//! Each result carries `value` (an achieved, feasible objective value)
//! and `lower` (a proven lower bound on the true minimum); callers
//! decide what gap they accept. Methods that cannot certify return a
//! lower bound of minus infinity rather than a fabricated one.

use crate::linprog::{lp_box_rows, Halfspace, LpOutcome};
use crate::risk::ConvexExpectation;

const GOLDEN_ITERS: usize = 70;
const BISECT_ITERS: usize = 140;
/// Relative slack used when classifying a constraint as satisfied
/// during engine-internal searches.
const ENGINE_FEAS_EPS: f64 = 1e-12;

/// A convex function of the atom-value vector, in one of the three
/// structured forms the pipeline produces. `sign` records whether the
/// function is monotone increasing (+1) or decreasing (−1) in every
/// coordinate, which the constrained search relies on.
#[derive(Clone, Debug)]
pub(crate) enum ConvexFn {
    Affine {
        a: Vec<f64>,
        b: f64,
    },
    LogSumExp {
        w: Vec<f64>,
        s: Vec<f64>,
        t: Vec<f64>,
    },
    MaxAffine {
        rows: Vec<(Vec<f64>, f64)>,
    },
}

impl ConvexFn {
    /// Descriptor of x ↦ ρ(offset·1 + sign·x).
    pub(crate) fn from_risk(rho: &ConvexExpectation, sign: f64, offset: f64) -> ConvexFn {
        let mu = rho.space().mu();
        match rho {
            ConvexExpectation::Linear(p) => ConvexFn::Affine {
                a: mu.iter().zip(p.values()).map(|(w, v)| sign * w * v).collect(),
                b: offset,
            },
            ConvexExpectation::Entropic(q0) => ConvexFn::LogSumExp {
                w: mu.iter().zip(q0.values()).map(|(w, v)| w * v).collect(),
                s: vec![sign; mu.len()],
                t: vec![offset; mu.len()],
            },
            ConvexExpectation::WorstCase(family) => ConvexFn::MaxAffine {
                rows: family
                    .iter()
                    .map(|p| {
                        (
                            mu.iter().zip(p.values()).map(|(w, v)| sign * w * v).collect(),
                            offset,
                        )
                    })
                    .collect(),
            },
            ConvexExpectation::FinitelyGenerated(gens) => ConvexFn::MaxAffine {
                rows: gens
                    .iter()
                    .map(|(q, c)| {
                        (
                            mu.iter().zip(q.values()).map(|(w, v)| sign * w * v).collect(),
                            offset - c,
                        )
                    })
                    .collect(),
            },
        }
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        match self {
            ConvexFn::Affine { a, b } => {
                a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b
            }
            ConvexFn::LogSumExp { w, s, t } => {
                let shift = w
                    .iter()
                    .zip(s)
                    .zip(t)
                    .zip(x)
                    .filter(|(((wi, _), _), _)| **wi > 0.0)
                    .map(|(((_, si), ti), xi)| si * xi + ti)
                    .fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = w
                    .iter()
                    .zip(s)
                    .zip(t)
                    .zip(x)
                    .filter(|(((wi, _), _), _)| **wi > 0.0)
                    .map(|(((wi, si), ti), xi)| wi * (si * xi + ti - shift).exp())
                    .sum();
                shift + sum.ln()
            }
            ConvexFn::MaxAffine { rows } => rows
                .iter()
                .map(|(a, b)| a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// One subgradient; the first maximizing row for max-affine.
    pub(crate) fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ConvexFn::Affine { a, .. } => a.clone(),
            ConvexFn::LogSumExp { .. } => self.softmax_gradient(x),
            ConvexFn::MaxAffine { rows } => {
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for (idx, (a, b)) in rows.iter().enumerate() {
                    let v = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b;
                    if v > best_val {
                        best_val = v;
                        best = idx;
                    }
                }
                rows[best].0.clone()
            }
        }
    }

    /// All extreme subgradients whose rows come within `tol` of the
    /// max; a single gradient for the smooth forms.
    pub(crate) fn subgradient_candidates(&self, x: &[f64], tol: f64) -> Vec<Vec<f64>> {
        match self {
            ConvexFn::MaxAffine { rows } => {
                let value = self.value(x);
                let tied: Vec<Vec<f64>> = rows
                    .iter()
                    .filter(|(a, b)| {
                        let v = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b;
                        v >= value - tol
                    })
                    .map(|(a, _)| a.clone())
                    .collect();
                if tied.is_empty() {
                    vec![self.subgradient(x)]
                } else {
                    tied
                }
            }
            _ => vec![self.subgradient(x)],
        }
    }

    fn softmax_gradient(&self, x: &[f64]) -> Vec<f64> {
        let ConvexFn::LogSumExp { w, s, t } = self else {
            unreachable!()
        };
        let shift = w
            .iter()
            .zip(s)
            .zip(t)
            .zip(x)
            .filter(|(((wi, _), _), _)| **wi > 0.0)
            .map(|(((_, si), ti), xi)| si * xi + ti)
            .fold(f64::NEG_INFINITY, f64::max);
        let terms: Vec<f64> = w
            .iter()
            .zip(s)
            .zip(t)
            .zip(x)
            .map(|(((wi, si), ti), xi)| {
                if *wi > 0.0 {
                    wi * (si * xi + ti - shift).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let z: f64 = terms.iter().sum();
        terms
            .iter()
            .zip(s)
            .map(|(term, si)| si * term / z)
            .collect()
    }

    pub(crate) fn is_smooth(&self) -> bool {
        !matches!(self, ConvexFn::MaxAffine { .. })
    }
}

/// A candidate minimizer with a proven lower bound on the true minimum.
/// `lower` is `NEG_INFINITY` when no certificate could be produced.
#[derive(Clone, Debug)]
pub(crate) struct CertifiedMin {
    pub x: Vec<f64>,
    pub value: f64,
    pub lower: f64,
}

impl CertifiedMin {
    pub(crate) fn gap(&self) -> f64 {
        self.value - self.lower
    }
}

#[derive(Clone, Debug)]
pub(crate) enum MinOutcome {
    Feasible(CertifiedMin),
    Infeasible,
}

/// Exact solution of `min c·x` subject to `a·x ≤ limit` over
/// `[lo, hi]^n`, with arbitrary coefficient signs, by the greedy
/// exchange argument: start from the unconstrained box minimizer and
/// buy constraint slack in increasing order of cost per unit, going
/// fractional on the marginal coordinate. Ties are broken by atom
/// index. Returns `None` when even the most favorable corner violates
/// the constraint.
pub(crate) fn lp_single_constraint_box(
    c: &[f64],
    a: &[f64],
    limit: f64,
    lo: f64,
    hi: f64,
) -> Option<(Vec<f64>, f64)> {
    let n = c.len();
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            if c[i] > 0.0 {
                lo
            } else if c[i] < 0.0 {
                hi
            } else if a[i] > 0.0 {
                lo
            } else {
                hi
            }
        })
        .collect();
    let lhs = |x: &[f64]| a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>();
    let slack = ENGINE_FEAS_EPS * limit.abs().max(1.0);
    let mut need = lhs(&x) - limit;
    if need <= slack {
        let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum::<f64>();
        return Some((x, value));
    }

    // Moves that reduce a·x: drop a coordinate sitting at hi with
    // aᵢ > 0, or raise one sitting at lo with aᵢ < 0. Each has
    // objective cost |cᵢ|/|aᵢ| per unit of reduction.
    let mut moves: Vec<(f64, usize)> = (0..n)
        .filter_map(|i| {
            if x[i] == hi && a[i] > 0.0 {
                Some(((-c[i]) / a[i], i))
            } else if x[i] == lo && a[i] < 0.0 {
                Some((c[i] / (-a[i]), i))
            } else {
                None
            }
        })
        .collect();
    moves.sort_by(|(r1, i1), (r2, i2)| r1.partial_cmp(r2).unwrap().then(i1.cmp(i2)));

    for (_, i) in moves {
        let reduction = a[i].abs() * (hi - lo);
        if reduction < need {
            x[i] = if x[i] == hi { lo } else { hi };
            need -= reduction;
        } else {
            let delta = need / a[i].abs();
            x[i] = if x[i] == hi { hi - delta } else { lo + delta };
            need = 0.0;
            break;
        }
    }
    if need > slack {
        return None;
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum::<f64>();
    Some((x, value))
}

/// Golden-section minimization of a convex (or unimodal) function on
/// `[lo, hi]`; returns the best probed point and its value.
pub(crate) fn golden_min(f: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Nested golden-section minimization over a full box. Partial minima
/// of a convex function are convex, so each level is a valid
/// one-dimensional search. Exponential in dimension; callers guard n.
pub(crate) fn nested_box_min(
    f: &impl Fn(&[f64]) -> f64,
    lo: f64,
    hi: f64,
    n: usize,
    iters: usize,
) -> (Vec<f64>, f64) {
    let mut x = vec![lo; n];
    let value = nested_level(f, lo, hi, 0, &mut x, iters);
    (x, value)
}

fn nested_level(
    f: &impl Fn(&[f64]) -> f64,
    lo: f64,
    hi: f64,
    k: usize,
    x: &mut Vec<f64>,
    iters: usize,
) -> f64 {
    let n = x.len();
    if k == n {
        return f(x);
    }
    let (xk, _) = golden_min(
        &mut |v| {
            x[k] = v;
            let mut scratch = x.clone();
            nested_level(f, lo, hi, k + 1, &mut scratch, iters)
        },
        lo,
        hi,
        iters,
    );
    x[k] = xk;
    // materialize the tail argmin for the chosen coordinate
    nested_level(f, lo, hi, k + 1, x, iters)
}

/// Nested golden-section minimization of `obj` over the box
/// intersected with `{con ≤ limit}`, for `con` monotone in every
/// coordinate (`con_increasing` gives the shared direction). The
/// feasible slice for each coordinate, given a feasible prefix, is an
/// interval found by bisection from the feasible side.
pub(crate) fn constrained_nested_min(
    obj: &impl Fn(&[f64]) -> f64,
    con: &impl Fn(&[f64]) -> f64,
    limit: f64,
    lo: f64,
    hi: f64,
    n: usize,
    con_increasing: bool,
) -> Option<(Vec<f64>, f64)> {
    let slack = ENGINE_FEAS_EPS * limit.abs().max(1.0);
    let corner = if con_increasing { lo } else { hi };
    let corner_x = vec![corner; n];
    if con(&corner_x) > limit + slack {
        return None;
    }
    let mut x = vec![corner; n];
    let value = constrained_level(obj, con, limit, lo, hi, 0, &mut x, con_increasing, slack);
    Some((x, value))
}

#[allow(clippy::too_many_arguments)]
fn constrained_level(
    obj: &impl Fn(&[f64]) -> f64,
    con: &impl Fn(&[f64]) -> f64,
    limit: f64,
    lo: f64,
    hi: f64,
    k: usize,
    x: &mut Vec<f64>,
    con_increasing: bool,
    slack: f64,
) -> f64 {
    let n = x.len();
    if k == n {
        return obj(x);
    }
    let corner = if con_increasing { lo } else { hi };
    // Feasible interval for x[k] given the prefix, with the remaining
    // coordinates parked at the constraint-minimizing corner. The
    // current prefix is extendable, so the corner end is feasible.
    let mut probe = x.clone();
    for item in probe.iter_mut().skip(k) {
        *item = corner;
    }
    let feasible_at = |probe: &mut Vec<f64>, v: f64| -> bool {
        probe[k] = v;
        con(probe) <= limit + slack
    };
    let far_end = if con_increasing { hi } else { lo };
    let (ilo, ihi) = if feasible_at(&mut probe, far_end) {
        (lo, hi)
    } else {
        let mut good = corner;
        let mut bad = far_end;
        for _ in 0..100 {
            let mid = 0.5 * (good + bad);
            if feasible_at(&mut probe, mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        if con_increasing {
            (lo, good)
        } else {
            (good, hi)
        }
    };

    let (xk, _) = golden_min(
        &mut |v| {
            x[k] = v;
            let mut scratch = x.clone();
            constrained_level(obj, con, limit, lo, hi, k + 1, &mut scratch, con_increasing, slack)
        },
        ilo,
        ihi,
        GOLDEN_ITERS.min(60),
    );
    x[k] = xk;
    constrained_level(obj, con, limit, lo, hi, k + 1, x, con_increasing, slack)
}

/// Projected subgradient descent over a box; used only as the
/// uncertified search when the structured methods do not apply.
pub(crate) fn projected_subgradient_min(
    value: &impl Fn(&[f64]) -> f64,
    subgrad: &impl Fn(&[f64]) -> Vec<f64>,
    start: &[f64],
    lo: f64,
    hi: f64,
    iters: usize,
    step0: f64,
) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut best = x.clone();
    let mut best_val = value(&x);
    for k in 0..iters {
        let g = subgrad(&x);
        let norm = g.iter().fold(0.0f64, |acc, gi| acc.max(gi.abs()));
        if norm <= 1e-14 {
            break;
        }
        let step = step0 / (1.0 + (k as f64).sqrt()) / norm;
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi = (*xi - step * gi).clamp(lo, hi);
        }
        let v = value(&x);
        if v < best_val {
            best_val = v;
            best.copy_from_slice(&x);
        }
    }
    (best, best_val)
}

/// Certified lower bound on `min over the box of F` from a point
/// `x`, its value, and a subgradient: convexity gives
/// `F(y) ≥ F(x) + g·(y−x)`, minimized over the box coordinatewise.
pub(crate) fn box_gradient_lower_bound(
    value_at_x: f64,
    x: &[f64],
    g: &[f64],
    lo: f64,
    hi: f64,
) -> f64 {
    let drop: f64 = x
        .iter()
        .zip(g)
        .map(|(xi, gi)| (gi * (lo - xi)).min(gi * (hi - xi)))
        .sum();
    value_at_x + drop
}

/// The best gradient lower bound over mixtures of extreme
/// subgradients of the objective and (scaled) constraint parts.
/// The bound is concave in the mixture weights, so a short nested
/// golden-section over each simplex suffices; candidate lists are
/// capped to keep this cheap.
fn mixed_subgradient_lower_bound(
    value_at_x: f64,
    x: &[f64],
    obj_cands: &[Vec<f64>],
    con_cands: &[Vec<f64>],
    lambda: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let combine = |theta: &[f64], phi: &[f64]| -> Vec<f64> {
        let n = x.len();
        let mut g = vec![0.0; n];
        for (weight, cand) in theta.iter().zip(obj_cands) {
            for i in 0..n {
                g[i] += weight * cand[i];
            }
        }
        for (weight, cand) in phi.iter().zip(con_cands) {
            for i in 0..n {
                g[i] += lambda * weight * cand[i];
            }
        }
        g
    };
    // weights over a k-simplex parametrized by stick breaking on
    // [0,1]^(k−1); k ≤ 3 keeps this a ≤ 4-level search
    let ko = obj_cands.len().min(3);
    let kc = con_cands.len().min(3);
    let dims = (ko - 1) + (kc - 1);
    let eval = |u: &[f64]| -> f64 {
        let theta = stick_weights(&u[..ko - 1]);
        let phi = stick_weights(&u[ko - 1..]);
        let g = combine(&theta, &phi);
        // maximize the bound = minimize its negation
        -box_gradient_lower_bound(value_at_x, x, &g, lo, hi)
    };
    if dims == 0 {
        return -eval(&[]);
    }
    let (_, neg_best) = nested_box_min(&eval, 0.0, 1.0, dims, 40);
    -neg_best
}

/// Stick-breaking map from `[0,1]^(k−1)` onto the k-simplex.
pub(crate) fn stick_weights(u: &[f64]) -> Vec<f64> {
    let k = u.len() + 1;
    let mut weights = Vec::with_capacity(k);
    let mut remaining = 1.0;
    for &ui in u {
        weights.push(remaining * ui);
        remaining *= 1.0 - ui;
    }
    weights.push(remaining);
    weights
}

/// Configuration for [`solve_box_min`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct EngineConfig {
    pub tol_feas: f64,
    /// Hard cap on dimension for the vertex-enumeration LP paths.
    pub lp_dim_cap: usize,
    /// Hard cap on dimension for nested golden-section search.
    pub golden_dim_cap: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tol_feas: 1e-9,
            lp_dim_cap: 6,
            golden_dim_cap: 3,
        }
    }
}

/// Minimize `obj` subject to `con ≤ limit` over `[lo, hi]^n`.
///
/// `con_increasing` states the shared monotonicity direction of the
/// constraint descriptor (true when it increases in every coordinate).
pub(crate) fn solve_box_min(
    obj: &ConvexFn,
    con: &ConvexFn,
    limit: f64,
    lo: f64,
    hi: f64,
    n: usize,
    con_increasing: bool,
    cfg: &EngineConfig,
) -> MinOutcome {
    let feas_slack = cfg.tol_feas * limit.abs().max(1.0);
    // feasibility of the most favorable corner
    let corner = vec![if con_increasing { lo } else { hi }; n];
    let con_min = con.value(&corner);
    if con_min > limit + feas_slack {
        return MinOutcome::Infeasible;
    }

    // If the box-unconstrained minimizer of obj already satisfies the
    // constraint, the problem splits from the constraint entirely.
    if let Some(free) = unconstrained_box_min(obj, lo, hi, n) {
        if con.value(&free.x) <= limit + feas_slack {
            return MinOutcome::Feasible(free);
        }
    }

    match (obj, con) {
        (ConvexFn::Affine { a: c, b: cb }, ConvexFn::Affine { a, b }) => {
            match lp_single_constraint_box(c, a, limit - b, lo, hi) {
                Some((x, value)) => MinOutcome::Feasible(CertifiedMin {
                    x,
                    value: value + cb,
                    lower: value + cb,
                }),
                None => MinOutcome::Infeasible,
            }
        }
        (ConvexFn::LogSumExp { w, s, t }, ConvexFn::Affine { a, b }) => {
            water_filling_lse_obj(w, s, t, a, limit - b, lo, hi, n)
        }
        (ConvexFn::Affine { a: c, b: cb }, ConvexFn::LogSumExp { w, s, t }) => {
            water_filling_lse_con(c, *cb, w, s, t, limit, lo, hi, n)
        }
        (ConvexFn::MaxAffine { .. } | ConvexFn::Affine { .. }, ConvexFn::MaxAffine { .. })
        | (ConvexFn::MaxAffine { .. }, ConvexFn::Affine { .. })
            if n <= cfg.lp_dim_cap =>
        {
            polyhedral_lp(obj, con, limit, lo, hi, n)
        }
        _ => general_search(obj, con, limit, lo, hi, n, con_increasing, cfg),
    }
}

/// Per-coordinate minimization of a structured convex function over a
/// box when that is exact: affine always, log-sum-exp always
/// (coordinatewise monotone), max-affine only when all rows agree in
/// sign per coordinate (otherwise `None` and callers fall back).
fn unconstrained_box_min(obj: &ConvexFn, lo: f64, hi: f64, n: usize) -> Option<CertifiedMin> {
    let x: Vec<f64> = match obj {
        ConvexFn::Affine { a, .. } => (0..n)
            .map(|i| if a[i] > 0.0 { lo } else { hi })
            .collect(),
        ConvexFn::LogSumExp { w, s, .. } => (0..n)
            .map(|i| {
                if w[i] <= 0.0 {
                    lo
                } else if s[i] > 0.0 {
                    lo
                } else {
                    hi
                }
            })
            .collect(),
        ConvexFn::MaxAffine { rows } => {
            let mut x = Vec::with_capacity(n);
            for i in 0..n {
                let all_nonneg = rows.iter().all(|(a, _)| a[i] >= 0.0);
                let all_nonpos = rows.iter().all(|(a, _)| a[i] <= 0.0);
                if all_nonneg {
                    x.push(lo);
                } else if all_nonpos {
                    x.push(hi);
                } else {
                    return None;
                }
            }
            x
        }
    };
    let value = obj.value(&x);
    Some(CertifiedMin {
        x,
        value,
        lower: value,
    })
}

/// min ln Σ wᵢ e^{sᵢxᵢ+tᵢ} s.t. a·x ≤ r over the box, solved exactly
/// by water-filling. The change of variables uᵢ = e^{sᵢxᵢ+tᵢ−m} turns
/// the objective into the linear mass Σ wᵢuᵢ and the budget into
/// Σ dᵢ ln uᵢ ≤ R with dᵢ = aᵢ/sᵢ, so the KKT system inverts per
/// coordinate to uᵢ(λ) = clamp(λ·(−dᵢ)/wᵢ) and the budget is monotone
/// in the multiplier; one bisection meets it to machine precision.
///
/// Multiplier bisection on the inner argmin is NOT used here: at the
/// critical multiplier the Lagrangian is flat along the diagonal
/// whenever the budget row is proportional to a probability (the
/// entropic case, always), and the argmin then jumps across the
/// boundary instead of landing on it. The water-filling point instead
/// minimizes the Lagrangian at the final multiplier exactly, so the
/// dual value there is a certified lower bound.
#[allow(clippy::too_many_arguments)]
fn water_filling_lse_obj(
    w: &[f64],
    s: &[f64],
    t: &[f64],
    a: &[f64],
    r: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> MinOutcome {
    let lse = ConvexFn::LogSumExp {
        w: w.to_vec(),
        s: s.to_vec(),
        t: t.to_vec(),
    };
    let residual = |x: &[f64]| a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() - r;

    // Exponent shift for numeric safety: every u stays in (0, 1].
    let mut shift = 0.0f64;
    for i in 0..n {
        if w[i] > 0.0 {
            shift = shift.max(s[i] * lo + t[i]).max(s[i] * hi + t[i]);
        }
    }

    // Coordinates coupling objective and budget; the rest go to
    // whichever side still cares about them.
    let mut x = vec![0.0; n];
    let mut coupled = vec![false; n];
    let mut act: Vec<usize> = Vec::new();
    let mut k_const = 0.0;
    let mut d = vec![0.0; n];
    let mut ulo = vec![0.0; n];
    let mut uhi = vec![0.0; n];
    for i in 0..n {
        if w[i] > 0.0 && s[i] != 0.0 {
            let e1 = (s[i] * lo + t[i] - shift).exp();
            let e2 = (s[i] * hi + t[i] - shift).exp();
            let top = e1.max(e2);
            if top > f64::MIN_POSITIVE {
                coupled[i] = true;
                act.push(i);
                ulo[i] = e1.min(e2).max(f64::MIN_POSITIVE);
                uhi[i] = top;
                d[i] = a[i] / s[i];
                continue;
            }
        } else if w[i] > 0.0 {
            k_const += w[i] * (t[i] - shift).exp();
        }
        x[i] = if a[i] > 0.0 { lo } else { hi };
    }

    // Unconstrained objective minimum with budget-friendly tie-breaks.
    let mut x0 = x.clone();
    for &i in &act {
        x0[i] = if s[i] > 0.0 { lo } else { hi };
    }
    if residual(&x0) <= 0.0 {
        let value = lse.value(&x0);
        return MinOutcome::Feasible(CertifiedMin {
            x: x0,
            value,
            lower: value,
        });
    }

    // Budget left to the coupled coordinates, mapped to u-space.
    let mut cap = r;
    for i in 0..n {
        if coupled[i] {
            cap -= a[i] * (shift - t[i]) / s[i];
        } else {
            cap -= a[i] * x[i];
        }
    }
    let g_most: f64 = act
        .iter()
        .map(|&i| {
            if d[i] < 0.0 {
                d[i] * uhi[i].ln()
            } else if d[i] > 0.0 {
                d[i] * ulo[i].ln()
            } else {
                0.0
            }
        })
        .sum();
    if g_most > cap {
        return MinOutcome::Infeasible;
    }

    let u_at = |i: usize, lam: f64| -> f64 {
        if d[i] < 0.0 {
            (lam * -d[i] / w[i]).clamp(ulo[i], uhi[i])
        } else {
            ulo[i]
        }
    };
    let g_at = |lam: f64| -> f64 {
        act.iter()
            .map(|&i| if d[i] == 0.0 { 0.0 } else { d[i] * u_at(i, lam).ln() })
            .sum()
    };

    let mut lam_lo = 0.0;
    let mut lam_hi = 1.0;
    while g_at(lam_hi) > cap {
        lam_lo = lam_hi;
        lam_hi *= 2.0;
        if !lam_hi.is_finite() {
            return MinOutcome::Infeasible;
        }
    }
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lam_lo + lam_hi);
        if g_at(mid) <= cap {
            lam_hi = mid;
        } else {
            lam_lo = mid;
        }
    }

    let mut z_act = 0.0;
    for &i in &act {
        let ui = u_at(i, lam_hi);
        z_act += w[i] * ui;
        x[i] = if ui <= ulo[i] {
            if s[i] > 0.0 { lo } else { hi }
        } else if ui >= uhi[i] {
            if s[i] > 0.0 { hi } else { lo }
        } else {
            (ui.ln() + shift - t[i]) / s[i]
        };
    }
    let value = lse.value(&x);
    // original-space multiplier: the u-space one rescaled by the mass
    let lambda = lam_hi / (k_const + z_act);
    let lower = value + lambda * residual(&x);
    MinOutcome::Feasible(CertifiedMin { x, value, lower })
}

/// min c·x + c0 s.t. ln Σ wᵢ e^{sᵢxᵢ+tᵢ} ≤ limit over the box: the
/// mirror water-filling. With uᵢ = e^{sᵢxᵢ+tᵢ−limit} the constraint
/// is the linear budget Σ wᵢuᵢ ≤ 1 and the objective becomes
/// Σ dᵢ ln uᵢ + const with dᵢ = cᵢ/sᵢ; per-coordinate KKT inversion
/// gives uᵢ(ν) = clamp(−dᵢ/(ν wᵢ)) and one monotone bisection on ν
/// meets the budget exactly (see water_filling_lse_obj for why this
/// beats multiplier bisection on the argmin).
#[allow(clippy::too_many_arguments)]
fn water_filling_lse_con(
    c: &[f64],
    c0: f64,
    w: &[f64],
    s: &[f64],
    t: &[f64],
    limit: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> MinOutcome {
    let lse = ConvexFn::LogSumExp {
        w: w.to_vec(),
        s: s.to_vec(),
        t: t.to_vec(),
    };
    let affine_val =
        |x: &[f64]| c.iter().zip(x).map(|(ci, xi)| ci * xi).sum::<f64>() + c0;

    // pure affine minimum over the box
    let x0: Vec<f64> = (0..n)
        .map(|i| if c[i] > 0.0 { lo } else { hi })
        .collect();
    if lse.value(&x0) <= limit {
        let value = affine_val(&x0);
        return MinOutcome::Feasible(CertifiedMin {
            x: x0,
            value,
            lower: value,
        });
    }

    let mut x = vec![0.0; n];
    let mut act: Vec<usize> = Vec::new();
    let mut k_const = 0.0;
    let mut d = vec![0.0; n];
    let mut ulo = vec![0.0; n];
    let mut uhi = vec![0.0; n];
    for i in 0..n {
        if w[i] > 0.0 && s[i] != 0.0 {
            let e1 = (s[i] * lo + t[i] - limit).exp();
            let e2 = (s[i] * hi + t[i] - limit).exp();
            let top = e1.max(e2);
            if top > f64::MIN_POSITIVE {
                act.push(i);
                ulo[i] = e1.min(e2).max(f64::MIN_POSITIVE);
                uhi[i] = top;
                d[i] = c[i] / s[i];
                continue;
            }
        } else if w[i] > 0.0 {
            k_const += w[i] * (t[i] - limit).exp();
        }
        x[i] = if c[i] > 0.0 { lo } else { hi };
    }

    let cap = 1.0 - k_const;
    let b_least: f64 = act.iter().map(|&i| w[i] * ulo[i]).sum();
    if b_least > cap {
        return MinOutcome::Infeasible;
    }
    // ν → 0 tops out every cost-negative coordinate; within budget
    // that means the constraint never binds for them
    let b_most: f64 = act
        .iter()
        .map(|&i| w[i] * if d[i] < 0.0 { uhi[i] } else { ulo[i] })
        .sum();
    if b_most <= cap {
        for &i in &act {
            let top = d[i] < 0.0;
            x[i] = if top == (s[i] > 0.0) { hi } else { lo };
        }
        let value = affine_val(&x);
        return MinOutcome::Feasible(CertifiedMin {
            x,
            value,
            lower: value,
        });
    }

    let u_at = |i: usize, nu: f64| -> f64 {
        if d[i] < 0.0 {
            (-d[i] / (nu * w[i])).clamp(ulo[i], uhi[i])
        } else {
            ulo[i]
        }
    };
    let budget = |nu: f64| -> f64 { act.iter().map(|&i| w[i] * u_at(i, nu)).sum() };

    let mut nu_lo = 0.0;
    let mut nu_hi = 1.0;
    while budget(nu_hi) > cap {
        nu_lo = nu_hi;
        nu_hi *= 2.0;
        if !nu_hi.is_finite() {
            return MinOutcome::Infeasible;
        }
    }
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (nu_lo + nu_hi);
        if budget(mid) <= cap {
            nu_hi = mid;
        } else {
            nu_lo = mid;
        }
    }

    let mut z_act = 0.0;
    for &i in &act {
        let ui = u_at(i, nu_hi);
        z_act += w[i] * ui;
        x[i] = if ui <= ulo[i] {
            if s[i] > 0.0 { lo } else { hi }
        } else if ui >= uhi[i] {
            if s[i] > 0.0 { hi } else { lo }
        } else {
            (ui.ln() + limit - t[i]) / s[i]
        };
    }
    let value = affine_val(&x);
    let lambda = nu_hi * (k_const + z_act);
    let lower = value + lambda * (lse.value(&x) - limit);
    MinOutcome::Feasible(CertifiedMin { x, value, lower })
}

/// Exact linear programming for all-polyhedral combinations: the
/// constraint rows become halfspaces, and a max-affine objective gets
/// an epigraph variable bounded by its box extremes.
fn polyhedral_lp(
    obj: &ConvexFn,
    con: &ConvexFn,
    limit: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> MinOutcome {
    let mut halfspaces: Vec<Halfspace> = Vec::new();
    match con {
        ConvexFn::Affine { a, b } => halfspaces.push(Halfspace {
            a: a.clone(),
            b: limit - b,
        }),
        ConvexFn::MaxAffine { rows } => {
            for (a, b) in rows {
                halfspaces.push(Halfspace {
                    a: a.clone(),
                    b: limit - b,
                });
            }
        }
        ConvexFn::LogSumExp { .. } => unreachable!("polyhedral path requires polyhedral parts"),
    }

    match obj {
        ConvexFn::Affine { a, b } => {
            let lob = vec![lo; n];
            let hib = vec![hi; n];
            match lp_box_rows(a, &halfspaces, &lob, &hib) {
                LpOutcome::Optimal { value, x } => MinOutcome::Feasible(CertifiedMin {
                    x,
                    value: value + b,
                    lower: value + b,
                }),
                LpOutcome::Infeasible => MinOutcome::Infeasible,
            }
        }
        ConvexFn::MaxAffine { rows } => {
            // epigraph variable t with box bounds from row extremes
            let mut t_lo = f64::INFINITY;
            let mut t_hi = f64::NEG_INFINITY;
            for (a, b) in rows {
                let row_min: f64 = a
                    .iter()
                    .map(|ai| (ai * lo).min(ai * hi))
                    .sum::<f64>()
                    + b;
                let row_max: f64 = a
                    .iter()
                    .map(|ai| (ai * lo).max(ai * hi))
                    .sum::<f64>()
                    + b;
                t_lo = t_lo.min(row_min);
                t_hi = t_hi.max(row_max);
            }
            let mut cost = vec![0.0; n + 1];
            cost[n] = 1.0;
            let mut all_rows: Vec<Halfspace> = rows
                .iter()
                .map(|(a, b)| {
                    let mut coeffs = a.clone();
                    coeffs.push(-1.0);
                    Halfspace { a: coeffs, b: -b }
                })
                .collect();
            for hs in &halfspaces {
                let mut coeffs = hs.a.clone();
                coeffs.push(0.0);
                all_rows.push(Halfspace {
                    a: coeffs,
                    b: hs.b,
                });
            }
            let mut lob = vec![lo; n];
            lob.push(t_lo);
            let mut hib = vec![hi; n];
            hib.push(t_hi);
            match lp_box_rows(&cost, &all_rows, &lob, &hib) {
                LpOutcome::Optimal { value, mut x } => {
                    x.truncate(n);
                    MinOutcome::Feasible(CertifiedMin {
                        x,
                        value,
                        lower: value,
                    })
                }
                LpOutcome::Infeasible => MinOutcome::Infeasible,
            }
        }
        ConvexFn::LogSumExp { .. } => unreachable!("polyhedral path requires polyhedral parts"),
    }
}

/// The remaining combinations: nested golden-section search when the
/// dimension allows it, otherwise projected subgradient descent, then
/// a dual lower-bound attempt via multiplier estimation and mixed
/// subgradients. The lower bound stays −∞ when nothing certifies.
#[allow(clippy::too_many_arguments)]
fn general_search(
    obj: &ConvexFn,
    con: &ConvexFn,
    limit: f64,
    lo: f64,
    hi: f64,
    n: usize,
    con_increasing: bool,
    cfg: &EngineConfig,
) -> MinOutcome {
    let obj_f = |x: &[f64]| obj.value(x);
    let con_f = |x: &[f64]| con.value(x);

    let primal = if n <= cfg.golden_dim_cap {
        constrained_nested_min(&obj_f, &con_f, limit, lo, hi, n, con_increasing)
    } else {
        // penalized descent with an outer multiplier sweep, keeping the
        // best feasible iterate
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut lambda = 1.0;
        for _ in 0..24 {
            let value = |x: &[f64]| obj.value(x) + lambda * (con.value(x) - limit).max(0.0);
            let subgrad = |x: &[f64]| {
                let mut g = obj.subgradient(x);
                if con.value(x) > limit {
                    for (gi, ci) in g.iter_mut().zip(con.subgradient(x)) {
                        *gi += lambda * ci;
                    }
                }
                g
            };
            let start = vec![if con_increasing { lo } else { hi }; n];
            let (x, _) = projected_subgradient_min(&value, &subgrad, &start, lo, hi, 4000, hi - lo);
            if con.value(&x) <= limit + cfg.tol_feas * limit.abs().max(1.0) {
                let v = obj.value(&x);
                if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                    best = Some((x, v));
                }
            }
            lambda *= 2.0;
        }
        best
    };

    let Some((x_hat, value)) = primal else {
        return MinOutcome::Infeasible;
    };

    // Multiplier estimate from interior coordinates; λ = 0 when the
    // constraint is inactive at the candidate.
    let margin = 1e-6 * (hi - lo);
    let active = con.value(&x_hat) >= limit - 1e-7 * limit.abs().max(1.0);
    let mut lambda_candidates = vec![0.0];
    if active {
        let go = obj.subgradient(&x_hat);
        let gc = con.subgradient(&x_hat);
        for i in 0..n {
            if x_hat[i] > lo + margin && x_hat[i] < hi - margin && gc[i].abs() > 1e-12 {
                let lam = -go[i] / gc[i];
                if lam.is_finite() && lam > 0.0 {
                    lambda_candidates.push(lam);
                }
            }
        }
        if lambda_candidates.len() == 1 {
            // vertex solution: probe a geometric grid
            for lam in [0.25, 0.5, 1.0, 2.0, 4.0] {
                lambda_candidates.push(lam);
            }
        }
    }
    lambda_candidates.truncate(8);

    let tie_tol = 1e-9 * (1.0 + value.abs());
    let mut lower = f64::NEG_INFINITY;
    for &lambda in &lambda_candidates {
        let lagrangian = |x: &[f64]| obj.value(x) + lambda * (con.value(x) - limit);
        let q_lower = if obj.is_smooth() && con.is_smooth() {
            // descend on the smooth Lagrangian, then bound via its
            // gradient over the box
            let subgrad = |x: &[f64]| {
                let mut g = obj.subgradient(x);
                for (gi, ci) in g.iter_mut().zip(con.subgradient(x)) {
                    *gi += lambda * ci;
                }
                g
            };
            let (xm, vm) = if n <= cfg.golden_dim_cap {
                nested_box_min(&lagrangian, lo, hi, n, GOLDEN_ITERS.min(60))
            } else {
                projected_subgradient_min(&lagrangian, &subgrad, &x_hat, lo, hi, 4000, hi - lo)
            };
            let g = subgrad(&xm);
            box_gradient_lower_bound(vm, &xm, &g, lo, hi)
        } else if n <= cfg.golden_dim_cap {
            let (xm, vm) = nested_box_min(&lagrangian, lo, hi, n, GOLDEN_ITERS.min(60));
            let obj_cands = obj.subgradient_candidates(&xm, tie_tol);
            let con_cands = con.subgradient_candidates(&xm, tie_tol);
            mixed_subgradient_lower_bound(vm, &xm, &obj_cands, &con_cands, lambda, lo, hi)
        } else {
            // no certified inner minimization available
            f64::NEG_INFINITY
        };
        if q_lower > lower {
            lower = q_lower;
        }
    }

    MinOutcome::Feasible(CertifiedMin {
        x: x_hat,
        value,
        lower,
    })
}
