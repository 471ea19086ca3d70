//! Convex expectations ρ, their penalty functions ρ*, and certification
//! of the defining axioms and the dual representation
//!
//! ```text
//! ρ(X) = sup_P ( E_P[X] − ρ*(P) ),    ρ*(P) = sup_X ( E_P[X] − ρ(X) ).
//! ```
//!
//! Four variants cover the instances the solver accepts: linear and
//! entropic expectations (the closed-form penalties), worst-case over a
//! finite family (penalty 0 on the convex hull, +∞ outside), and
//! finitely-generated functionals whose penalty is the least convex
//! penalty consistent with the generators, computed by a small linear
//! program.

use serde::Serialize;
use thiserror::Error;

use crate::linprog::{lp_eq_nonneg, LpOutcome};
use crate::space::{
    expectation_slices, kl_divergence_slices, DensityVector, ExtendedReal, FiniteProbSpace,
    RandomVariable, SpaceError,
};

/// Target accuracy of `penalty_numeric` on smooth penalties.
pub const DEFAULT_TOL_PEN: f64 = 1e-7;
/// Iteration cap for `penalty_numeric`.
pub const DEFAULT_PENALTY_MAX_ITER: usize = 100_000;
/// Per-atom density match tolerance when deciding `q = p` for the
/// linear penalty, relative to `max(1, |pᵢ|, |qᵢ|)`.
const LINEAR_MATCH_TOL: f64 = 1e-9;

/// The value of a penalty function at one measure; always ≥ −ρ(0).
pub type PenaltyValue = ExtendedReal;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("worst-case family must be nonempty")]
    EmptyFamily,
    #[error("generator list must be nonempty")]
    EmptyGenerators,
    #[error("generator {index} has negative penalty {value}; penalties must be ≥ 0")]
    NegativeGeneratorPenalty { index: usize, value: f64 },
    #[error("space dimension {n} exceeds the grid limit {max} for this certification")]
    DimensionTooLarge { n: usize, max: usize },
    #[error("supergradient ascent stalled without a convergence or divergence certificate (cap {max_iter} iterations); best lower bound {best_lower_bound}")]
    Indeterminate {
        max_iter: usize,
        best_lower_bound: f64,
    },
}

/// A convex expectation: monotone, translation-invariant, convex.
#[derive(Clone, Debug)]
pub enum ConvexExpectation {
    /// ρ(X) = E_P[X].
    Linear(DensityVector),
    /// ρ(X) = ln E_{Q₀}[e^X], penalty = KL(·‖Q₀).
    Entropic(DensityVector),
    /// ρ(X) = max over the family of E_P[X]; penalty 0 on the convex
    /// hull of the family, +∞ outside.
    WorstCase(Vec<DensityVector>),
    /// ρ(X) = maxᵢ (E_{Qᵢ}[X] − cᵢ) with cᵢ ≥ 0. The normalization
    /// min cᵢ = 0 is not forced; ρ(0) = −min cᵢ is permitted and
    /// reported by [`ConvexExpectation::rho_zero`].
    FinitelyGenerated(Vec<(DensityVector, f64)>),
}

impl ConvexExpectation {
    pub fn linear(p: DensityVector) -> Self {
        ConvexExpectation::Linear(p)
    }

    pub fn entropic(q0: DensityVector) -> Self {
        ConvexExpectation::Entropic(q0)
    }

    pub fn worst_case(family: Vec<DensityVector>) -> Result<Self, RiskError> {
        let first = family.first().ok_or(RiskError::EmptyFamily)?;
        for member in &family[1..] {
            if !member.space().same_space(first.space()) {
                return Err(SpaceError::DimensionMismatch {
                    left: first.space().n(),
                    right: member.space().n(),
                }
                .into());
            }
        }
        Ok(ConvexExpectation::WorstCase(family))
    }

    pub fn finitely_generated(generators: Vec<(DensityVector, f64)>) -> Result<Self, RiskError> {
        let first = generators.first().ok_or(RiskError::EmptyGenerators)?.0.space().clone();
        for (index, (density, c)) in generators.iter().enumerate() {
            if !density.space().same_space(&first) {
                return Err(SpaceError::DimensionMismatch {
                    left: first.n(),
                    right: density.space().n(),
                }
                .into());
            }
            if !c.is_finite() || *c < 0.0 {
                return Err(RiskError::NegativeGeneratorPenalty {
                    index,
                    value: *c,
                });
            }
        }
        Ok(ConvexExpectation::FinitelyGenerated(generators))
    }

    pub fn space(&self) -> &FiniteProbSpace {
        match self {
            ConvexExpectation::Linear(p) => p.space(),
            ConvexExpectation::Entropic(q0) => q0.space(),
            ConvexExpectation::WorstCase(family) => family[0].space(),
            ConvexExpectation::FinitelyGenerated(gens) => gens[0].0.space(),
        }
    }

    /// ρ(0); zero for all variants except FinitelyGenerated with
    /// min cᵢ > 0, where it equals −min cᵢ.
    pub fn rho_zero(&self) -> f64 {
        match self {
            ConvexExpectation::FinitelyGenerated(gens) => {
                -gens.iter().map(|(_, c)| *c).fold(f64::INFINITY, f64::min)
            }
            _ => 0.0,
        }
    }

    pub fn evaluate(&self, x: &RandomVariable) -> Result<f64, RiskError> {
        if !x.space().same_space(self.space()) {
            return Err(SpaceError::DimensionMismatch {
                left: self.space().n(),
                right: x.space().n(),
            }
            .into());
        }
        Ok(self.evaluate_slice(x.values()))
    }

    /// Slice-level evaluation for internal hot paths.
    pub(crate) fn evaluate_slice(&self, x: &[f64]) -> f64 {
        let mu = self.space().mu();
        match self {
            ConvexExpectation::Linear(p) => expectation_slices(mu, p.values(), x),
            ConvexExpectation::Entropic(q0) => log_sum_exp(mu, q0.values(), x),
            ConvexExpectation::WorstCase(family) => family
                .iter()
                .map(|p| expectation_slices(mu, p.values(), x))
                .fold(f64::NEG_INFINITY, f64::max),
            ConvexExpectation::FinitelyGenerated(gens) => gens
                .iter()
                .map(|(q, c)| expectation_slices(mu, q.values(), x) - c)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// One supergradient of X ↦ ρ(X) at `x`, as atom-wise partial
    /// derivatives (μ factors included). For the max variants the first
    /// maximizing member is used, which keeps every caller
    /// deterministic.
    pub(crate) fn subgradient_slice(&self, x: &[f64]) -> Vec<f64> {
        let mu = self.space().mu();
        match self {
            ConvexExpectation::Linear(p) => {
                mu.iter().zip(p.values()).map(|(w, v)| w * v).collect()
            }
            ConvexExpectation::Entropic(q0) => {
                let shift = x
                    .iter()
                    .zip(q0.values())
                    .filter(|(_, q)| **q > 0.0)
                    .map(|(v, _)| *v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let terms: Vec<f64> = mu
                    .iter()
                    .zip(q0.values())
                    .zip(x)
                    .map(|((w, q), v)| if *q > 0.0 { w * q * (v - shift).exp() } else { 0.0 })
                    .collect();
                let z: f64 = terms.iter().sum();
                terms.into_iter().map(|t| t / z).collect()
            }
            ConvexExpectation::WorstCase(family) => {
                let best = argmax_by(family.iter(), |p| expectation_slices(mu, p.values(), x));
                mu.iter()
                    .zip(family[best].values())
                    .map(|(w, v)| w * v)
                    .collect()
            }
            ConvexExpectation::FinitelyGenerated(gens) => {
                let best = argmax_by(gens.iter(), |(q, c)| {
                    expectation_slices(mu, q.values(), x) - c
                });
                mu.iter()
                    .zip(gens[best].0.values())
                    .map(|(w, v)| w * v)
                    .collect()
            }
        }
    }

    /// The measure attaining ρ(X) in the dual representation, as a
    /// density: the softmax density for Entropic, the reference for
    /// Linear, the first maximizing member for the max variants.
    pub(crate) fn representation_maximizer(&self, x: &[f64]) -> DensityVector {
        match self {
            ConvexExpectation::Linear(p) => p.clone(),
            ConvexExpectation::Entropic(q0) => {
                let mu = self.space().mu();
                let shift = x
                    .iter()
                    .zip(q0.values())
                    .filter(|(_, q)| **q > 0.0)
                    .map(|(v, _)| *v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut values: Vec<f64> = q0
                    .values()
                    .iter()
                    .zip(x)
                    .map(|(q, v)| if *q > 0.0 { q * (v - shift).exp() } else { 0.0 })
                    .collect();
                let z: f64 = values
                    .iter()
                    .zip(mu)
                    .map(|(v, w)| v * w)
                    .sum();
                for v in &mut values {
                    *v /= z;
                }
                DensityVector::new(self.space().clone(), values)
                    .expect("softmax density is normalized by construction")
            }
            ConvexExpectation::WorstCase(family) => {
                let mu = self.space().mu();
                let best = argmax_by(family.iter(), |p| expectation_slices(mu, p.values(), x));
                family[best].clone()
            }
            ConvexExpectation::FinitelyGenerated(gens) => {
                let mu = self.space().mu();
                let best = argmax_by(gens.iter(), |(q, c)| {
                    expectation_slices(mu, q.values(), x) - c
                });
                gens[best].0.clone()
            }
        }
    }

    /// Closed-form / linear-program penalty ρ*(q).
    pub fn penalty(&self, q: &DensityVector) -> Result<PenaltyValue, RiskError> {
        if !q.space().same_space(self.space()) {
            return Err(SpaceError::DimensionMismatch {
                left: self.space().n(),
                right: q.space().n(),
            }
            .into());
        }
        let mu = self.space().mu();
        Ok(match self {
            ConvexExpectation::Linear(p) => {
                let matches = q
                    .values()
                    .iter()
                    .zip(p.values())
                    .all(|(qi, pi)| (qi - pi).abs() <= LINEAR_MATCH_TOL * qi.abs().max(pi.abs()).max(1.0));
                if matches {
                    ExtendedReal::Finite(0.0)
                } else {
                    ExtendedReal::PosInf
                }
            }
            ConvexExpectation::Entropic(q0) => {
                kl_divergence_slices(mu, q.values(), q0.values())
            }
            ConvexExpectation::WorstCase(family) => {
                let (a, b) = mixture_system(family.iter().map(|d| d.values()), q.values());
                match lp_eq_nonneg(&vec![0.0; family.len()], &a, &b) {
                    LpOutcome::Optimal { .. } => ExtendedReal::Finite(0.0),
                    LpOutcome::Infeasible => ExtendedReal::PosInf,
                }
            }
            ConvexExpectation::FinitelyGenerated(gens) => {
                let costs: Vec<f64> = gens.iter().map(|(_, c)| *c).collect();
                let (a, b) = mixture_system(gens.iter().map(|(d, _)| d.values()), q.values());
                match lp_eq_nonneg(&costs, &a, &b) {
                    LpOutcome::Optimal { value, .. } => ExtendedReal::Finite(value),
                    LpOutcome::Infeasible => ExtendedReal::PosInf,
                }
            }
        })
    }

    /// Numeric cross-validation of the penalty: maximizes the concave
    /// function X ↦ E_Q[X] − ρ(X) by supergradient ascent from X = 0.
    ///
    /// Ascent iterates are exact evaluations, so the running best is
    /// always a valid lower bound on ρ*(Q). Divergence (+∞) is declared
    /// when the iterate norm exceeds `r_div` while the objective is
    /// still climbing. Smooth penalties (Linear, Entropic) reach
    /// `tol_pen`; polyhedral ones may legitimately return the
    /// indeterminate error at the iteration cap.
    pub fn penalty_numeric(
        &self,
        q: &DensityVector,
        config: &PenaltyNumericConfig,
    ) -> Result<PenaltyValue, RiskError> {
        if !q.space().same_space(self.space()) {
            return Err(SpaceError::DimensionMismatch {
                left: self.space().n(),
                right: q.space().n(),
            }
            .into());
        }
        let mu = self.space().mu();
        let n = mu.len();
        let target: Vec<f64> = mu.iter().zip(q.values()).map(|(w, v)| w * v).collect();
        let max_density = q
            .values()
            .iter()
            .chain(self.reference_density_values())
            .fold(0.0f64, |acc, &v| acc.max(v));
        let r_div = config.r_div_factor * (1.0 + max_density);

        let objective = |x: &[f64]| -> f64 {
            let e: f64 = target.iter().zip(x).map(|(t, v)| t * v).sum();
            e - self.evaluate_slice(x)
        };

        // Smooth penalties (the entropic objective is 1-smooth, the
        // linear one is affine) admit a guaranteed-ascent unit step;
        // polyhedral ones only ever return a certified value when a
        // zero supergradient shows up.
        let smooth = matches!(
            self,
            ConvexExpectation::Linear(_) | ConvexExpectation::Entropic(_)
        );

        let mut x = vec![0.0; n];
        let mut best = objective(&x);
        let mut step = 1.0;
        let mut streak = 0usize;
        let mut trial = vec![0.0; n];

        for _ in 0..config.max_iter {
            let rho_grad = self.subgradient_slice(&x);
            let grad: Vec<f64> = target
                .iter()
                .zip(&rho_grad)
                .map(|(t, g)| t - g)
                .collect();
            let grad_norm = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
            if grad_norm <= (config.tol_pen * 1e-3).min(1e-10) {
                return Ok(ExtendedReal::Finite(best));
            }
            for i in 0..n {
                trial[i] = x[i] + step * grad[i];
            }
            let value = objective(&trial);
            if value > best {
                best = value;
                x.copy_from_slice(&trial);
                streak += 1;
                if streak >= 20 {
                    step *= 2.0;
                    streak = 0;
                }
                let norm = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                if norm > r_div {
                    return Ok(ExtendedReal::PosInf);
                }
            } else {
                streak = 0;
                step *= 0.5;
                if step < 1e-14 {
                    if smooth {
                        return Ok(ExtendedReal::Finite(best));
                    }
                    break;
                }
            }
        }
        Err(RiskError::Indeterminate {
            max_iter: config.max_iter,
            best_lower_bound: best,
        })
    }

    fn reference_density_values(&self) -> impl Iterator<Item = &f64> {
        let slices: Vec<&[f64]> = match self {
            ConvexExpectation::Linear(p) => vec![p.values()],
            ConvexExpectation::Entropic(q0) => vec![q0.values()],
            ConvexExpectation::WorstCase(family) => {
                family.iter().map(|d| d.values()).collect()
            }
            ConvexExpectation::FinitelyGenerated(gens) => {
                gens.iter().map(|(d, _)| d.values()).collect()
            }
        };
        slices.into_iter().flatten()
    }

    /// Property-checks the three defining axioms on seeded random draws.
    pub fn certify_axioms(&self, trials: usize, seed: u64) -> AxiomReport {
        let n = self.space().n();
        certify_axioms_fn(|x| self.evaluate_slice(x), n, trials, seed)
    }

    /// Grid certification of the dual representation at one point:
    /// computes `max over a simplex grid of E_Q[X] − ρ*(Q)`, augmented
    /// with the variant's own reference densities, and checks it matches
    /// `ρ(X)` within `grid_step·(max X − min X) + 1e-6`.
    ///
    /// Variants whose penalty needs a linear program per grid point are
    /// re-gridded to a documented budget; the report carries the step
    /// actually used and the corresponding bound.
    pub fn certify_representation(
        &self,
        x: &RandomVariable,
        grid_step: f64,
    ) -> Result<RepresentationReport, RiskError> {
        if !x.space().same_space(self.space()) {
            return Err(SpaceError::DimensionMismatch {
                left: self.space().n(),
                right: x.space().n(),
            }
            .into());
        }
        let n = self.space().n();
        if n > 4 {
            return Err(RiskError::DimensionTooLarge { n, max: 4 });
        }
        let point_cap: u64 = match self {
            ConvexExpectation::WorstCase(_) | ConvexExpectation::FinitelyGenerated(_) => 300_000,
            _ => 20_000_000,
        };
        let mut s = (1.0 / grid_step).round().max(2.0) as u64;
        while simplex_grid_size(s, n) > point_cap && s > 2 {
            s = (s * 4) / 5;
        }
        let used_step = 1.0 / s as f64;

        let mu = self.space().mu();
        let evaluate_value = self.evaluate_slice(x.values());
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut counts = vec![0u64; n];
        counts[0] = s;
        loop {
            // density values from grid probabilities kᵢ/s
            let density: Vec<f64> = counts
                .iter()
                .zip(mu)
                .map(|(k, w)| (*k as f64 / s as f64) / w)
                .collect();
            if let ExtendedReal::Finite(pen) = self.penalty_slice_unchecked(&density) {
                let value = expectation_slices(mu, &density, x.values()) - pen;
                if best.as_ref().map_or(true, |(v, _)| value > *v) {
                    best = Some((value, density));
                }
            }
            if !next_composition(&mut counts) {
                break;
            }
        }
        // The reference measures of the variant are always feasible dual
        // points, and they may sit at irrational coordinates no grid node
        // reaches (a Linear penalty is finite only at p itself). Folding
        // them into the candidate set keeps the certificate a genuine
        // lower bound on the sup while making it exact at the anchor.
        let anchors: Vec<&[f64]> = match self {
            ConvexExpectation::Linear(p) => vec![p.values()],
            ConvexExpectation::Entropic(q0) => vec![q0.values()],
            ConvexExpectation::WorstCase(family) => {
                family.iter().map(|d| d.values()).collect()
            }
            ConvexExpectation::FinitelyGenerated(gens) => {
                gens.iter().map(|(d, _)| d.values()).collect()
            }
        };
        for density in anchors {
            if let ExtendedReal::Finite(pen) = self.penalty_slice_unchecked(density) {
                let value = expectation_slices(mu, density, x.values()) - pen;
                if best.as_ref().map_or(true, |(v, _)| value > *v) {
                    best = Some((value, density.to_vec()));
                }
            }
        }
        let range = x.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - x.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let bound = used_step * range + 1e-6;
        // A polyhedral penalty domain can in principle miss every grid
        // point; report that as a failed certification instead of a max
        // over an empty set.
        let (max_value, maximizer) = match best {
            Some(pair) => pair,
            None => {
                return Ok(RepresentationReport {
                    requested_step: grid_step,
                    used_step,
                    bound,
                    grid_max: f64::NEG_INFINITY,
                    evaluate_value,
                    deviation: f64::INFINITY,
                    maximizer_density: Vec::new(),
                    pass: false,
                })
            }
        };
        let deviation = (max_value - evaluate_value).abs();
        Ok(RepresentationReport {
            requested_step: grid_step,
            used_step,
            bound,
            grid_max: max_value,
            evaluate_value,
            deviation,
            maximizer_density: maximizer,
            pass: deviation <= bound,
        })
    }

    /// Penalty evaluation on a raw density slice that is already known
    /// to live on this space; used by grid loops where constructing a
    /// `DensityVector` per point would dominate the cost.
    pub(crate) fn penalty_slice_unchecked(&self, q_values: &[f64]) -> ExtendedReal {
        let mu = self.space().mu();
        match self {
            ConvexExpectation::Linear(p) => {
                let matches = q_values
                    .iter()
                    .zip(p.values())
                    .all(|(qi, pi)| (qi - pi).abs() <= LINEAR_MATCH_TOL * qi.abs().max(pi.abs()).max(1.0));
                if matches {
                    ExtendedReal::Finite(0.0)
                } else {
                    ExtendedReal::PosInf
                }
            }
            ConvexExpectation::Entropic(q0) => kl_divergence_slices(mu, q_values, q0.values()),
            ConvexExpectation::WorstCase(family) => {
                let (a, b) = mixture_system(family.iter().map(|d| d.values()), q_values);
                match lp_eq_nonneg(&vec![0.0; family.len()], &a, &b) {
                    LpOutcome::Optimal { .. } => ExtendedReal::Finite(0.0),
                    LpOutcome::Infeasible => ExtendedReal::PosInf,
                }
            }
            ConvexExpectation::FinitelyGenerated(gens) => {
                let costs: Vec<f64> = gens.iter().map(|(_, c)| *c).collect();
                let (a, b) = mixture_system(gens.iter().map(|(d, _)| d.values()), q_values);
                match lp_eq_nonneg(&costs, &a, &b) {
                    LpOutcome::Optimal { value, .. } => ExtendedReal::Finite(value),
                    LpOutcome::Infeasible => ExtendedReal::PosInf,
                }
            }
        }
    }
}

/// Configuration for [`ConvexExpectation::penalty_numeric`].
#[derive(Clone, Debug)]
pub struct PenaltyNumericConfig {
    pub tol_pen: f64,
    pub max_iter: usize,
    /// Divergence radius factor: the bound is `r_div_factor·(1 + max density)`.
    pub r_div_factor: f64,
}

impl Default for PenaltyNumericConfig {
    fn default() -> Self {
        Self {
            tol_pen: DEFAULT_TOL_PEN,
            max_iter: DEFAULT_PENALTY_MAX_ITER,
            r_div_factor: 1e6,
        }
    }
}

/// Equality system `Σⱼ λⱼ·(generator j) = q, Σⱼ λⱼ = 1` for the hull /
/// penalty programs.
fn mixture_system<'a>(
    generators: impl Iterator<Item = &'a [f64]>,
    q: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let columns: Vec<&[f64]> = generators.collect();
    let n = q.len();
    let mut a = Vec::with_capacity(n + 1);
    for i in 0..n {
        a.push(columns.iter().map(|col| col[i]).collect());
    }
    a.push(vec![1.0; columns.len()]);
    let mut b = q.to_vec();
    b.push(1.0);
    (a, b)
}

/// `ln Σᵢ μᵢ·q₀ᵢ·e^{xᵢ}` with max-shift so |x| up to ~700 cannot
/// overflow.
pub(crate) fn log_sum_exp(mu: &[f64], q0: &[f64], x: &[f64]) -> f64 {
    let shift = x
        .iter()
        .zip(q0)
        .filter(|(_, q)| **q > 0.0)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = mu
        .iter()
        .zip(q0)
        .zip(x)
        .filter(|((_, q), _)| **q > 0.0)
        .map(|((w, q), v)| w * q * (v - shift).exp())
        .sum();
    shift + sum.ln()
}

fn argmax_by<T>(items: impl Iterator<Item = T>, mut f: impl FnMut(&T) -> f64) -> usize {
    let mut best_idx = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (idx, item) in items.enumerate() {
        let val = f(&item);
        if val > best_val {
            best_val = val;
            best_idx = idx;
        }
    }
    best_idx
}

/// Number of compositions of s into n nonnegative parts: C(s+n−1, n−1).
pub(crate) fn simplex_grid_size(s: u64, n: usize) -> u64 {
    let mut size: u64 = 1;
    for i in 1..n as u64 {
        size = size.saturating_mul(s + i) / i;
    }
    size
}

/// Advances a composition of s into `counts.len()` nonnegative parts to
/// its successor; returns false after the last composition. Start from
/// `[s, 0, …, 0]`; the final composition is `[0, …, 0, s]`.
pub(crate) fn next_composition(counts: &mut [u64]) -> bool {
    let n = counts.len();
    let i = counts
        .iter()
        .position(|&k| k > 0)
        .expect("composition total is positive");
    if i == n - 1 {
        return false;
    }
    let v = counts[i];
    counts[i] = 0;
    counts[0] = v - 1;
    counts[i + 1] += 1;
    true
}

/// One axiom's verdict over the trial set.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyResult {
    pub pass: bool,
    pub failures: usize,
    pub first_counterexample: Option<String>,
    pub worst_violation: f64,
}

impl PropertyResult {
    fn new() -> Self {
        Self {
            pass: true,
            failures: 0,
            first_counterexample: None,
            worst_violation: 0.0,
        }
    }

    fn record(&mut self, violation: f64, tol: f64, describe: impl FnOnce() -> String) {
        if violation > self.worst_violation {
            self.worst_violation = violation;
        }
        if violation > tol {
            self.pass = false;
            self.failures += 1;
            if self.first_counterexample.is_none() {
                self.first_counterexample = Some(describe());
            }
        }
    }
}

/// Trial-based certification of monotonicity, translation invariance,
/// and convexity.
#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub trials: usize,
    pub seed: u64,
    pub monotonicity: PropertyResult,
    pub invariance: PropertyResult,
    pub convexity: PropertyResult,
    pub pass: bool,
}

/// Axiom certification over an arbitrary functional; the extension
/// point for user-supplied variants and for deliberately corrupted
/// evaluators in tests.
pub fn certify_axioms_fn(
    eval: impl Fn(&[f64]) -> f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> AxiomReport {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    const TOL: f64 = 1e-9;

    let mut monotonicity = PropertyResult::new();
    let mut invariance = PropertyResult::new();
    let mut convexity = PropertyResult::new();

    for trial in 0..trials {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| v - rng.random_range(0.0..3.0))
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c: f64 = rng.random_range(-3.0..3.0);
        let lambda: f64 = rng.random_range(0.0..1.0);

        let rho_x = eval(&x);
        let rho_y = eval(&y);
        monotonicity.record(rho_y - rho_x, TOL, || {
            format!("trial {trial}: X ≥ Y but ρ(X) = {rho_x} < ρ(Y) = {rho_y}")
        });

        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let rho_shifted = eval(&shifted);
        invariance.record((rho_shifted - rho_x - c).abs(), TOL, || {
            format!(
                "trial {trial}: ρ(X+{c}) = {rho_shifted}, ρ(X)+c = {}",
                rho_x + c
            )
        });

        let mix: Vec<f64> = x
            .iter()
            .zip(&w)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        let rho_mix = eval(&mix);
        let rho_w = eval(&w);
        convexity.record(
            rho_mix - (lambda * rho_x + (1.0 - lambda) * rho_w),
            TOL,
            || {
                format!(
                    "trial {trial}: ρ(λX+(1−λ)W) = {rho_mix} > λρ(X)+(1−λ)ρ(W) = {}",
                    lambda * rho_x + (1.0 - lambda) * rho_w
                )
            },
        );
    }

    let pass = monotonicity.pass && invariance.pass && convexity.pass;
    AxiomReport {
        trials,
        seed,
        monotonicity,
        invariance,
        convexity,
        pass,
    }
}

/// Result of the representation-grid certification.
#[derive(Clone, Debug, Serialize)]
pub struct RepresentationReport {
    pub requested_step: f64,
    pub used_step: f64,
    pub bound: f64,
    pub grid_max: f64,
    pub evaluate_value: f64,
    pub deviation: f64,
    pub maximizer_density: Vec<f64>,
    pub pass: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::FiniteProbSpace;
    use std::f64::consts::E;

    fn half_half() -> FiniteProbSpace {
        FiniteProbSpace::from_weights(vec![0.5, 0.5]).unwrap()
    }

    fn dens(space: &FiniteProbSpace, values: Vec<f64>) -> DensityVector {
        DensityVector::new(space.clone(), values).unwrap()
    }

    fn rv(space: &FiniteProbSpace, values: Vec<f64>) -> RandomVariable {
        RandomVariable::new(space.clone(), values).unwrap()
    }

    #[test]
    fn linear_evaluate_is_expectation() {
        let space = half_half();
        let rho = ConvexExpectation::linear(dens(&space, vec![1.2, 0.8]));
        let x = rv(&space, vec![3.0, 5.0]);
        let value = rho.evaluate(&x).unwrap();
        assert!((value - (0.5 * 1.2 * 3.0 + 0.5 * 0.8 * 5.0)).abs() < 1e-15);
    }

    #[test]
    fn entropic_evaluate_reference_values() {
        let space = half_half();
        let rho = ConvexExpectation::entropic(dens(&space, vec![1.5, 0.5]));
        let value = rho.evaluate(&rv(&space, vec![0.0, 1.0])).unwrap();
        let expected = ((3.0 + E) / 4.0).ln();
        assert!((value - expected).abs() < 1e-14, "got {value}, want {expected}");

        // translation invariance on constants
        let shifted = rho.evaluate(&rv(&space, vec![2.5, 3.5])).unwrap();
        assert!((shifted - (expected + 2.5)).abs() < 1e-13);

        let constant = rho.evaluate(&rv(&space, vec![-4.0, -4.0])).unwrap();
        assert!((constant + 4.0).abs() < 1e-14);
    }

    #[test]
    fn entropic_evaluate_uneven_weights() {
        let space =
            FiniteProbSpace::from_weights(vec![(E - 2.0) / (E - 1.0), 1.0 / (E - 1.0)]).unwrap();
        let rho = ConvexExpectation::entropic(dens(&space, vec![1.0, 1.0]));
        let value = rho.evaluate(&rv(&space, vec![0.0, 1.0])).unwrap();
        assert!((value - 2.0f64.ln()).abs() < 1e-14, "got {value}");
    }

    #[test]
    fn entropic_evaluate_is_overflow_safe() {
        let space = half_half();
        let rho = ConvexExpectation::entropic(dens(&space, vec![1.5, 0.5]));
        let value = rho.evaluate(&rv(&space, vec![1000.0, 999.0])).unwrap();
        let expected = 1000.0 + (0.5 * 1.5 + 0.5 * 0.5 * (-1.0f64).exp()).ln();
        assert!(value.is_finite());
        assert!((value - expected).abs() < 1e-10);
    }

    #[test]
    fn worst_case_evaluate_takes_the_max() {
        let space = half_half();
        let rho = ConvexExpectation::worst_case(vec![
            dens(&space, vec![1.6, 0.4]),
            dens(&space, vec![0.4, 1.6]),
        ])
        .unwrap();
        let value = rho.evaluate(&rv(&space, vec![1.0, 0.0])).unwrap();
        assert!((value - 0.8).abs() < 1e-15);
    }

    #[test]
    fn finitely_generated_evaluate_and_rho_zero() {
        let space = half_half();
        let rho = ConvexExpectation::finitely_generated(vec![
            (dens(&space, vec![1.6, 0.4]), 0.2),
            (dens(&space, vec![0.4, 1.6]), 0.5),
        ])
        .unwrap();
        assert!((rho.rho_zero() + 0.2).abs() < 1e-15);
        let value = rho.evaluate(&rv(&space, vec![0.0, 0.0])).unwrap();
        assert!((value + 0.2).abs() < 1e-15);
        let value = rho.evaluate(&rv(&space, vec![0.0, 1.0])).unwrap();
        // max(0.5*0.4 - 0.2, 0.5*1.6 - 0.5) = max(0.0, 0.3)
        assert!((value - 0.3).abs() < 1e-15);
    }

    #[test]
    fn finitely_generated_rejects_negative_penalty() {
        let space = half_half();
        let err = ConvexExpectation::finitely_generated(vec![(
            dens(&space, vec![1.0, 1.0]),
            -0.1,
        )])
        .unwrap_err();
        assert!(matches!(
            err,
            RiskError::NegativeGeneratorPenalty { index: 0, .. }
        ));
    }

    #[test]
    fn linear_penalty_indicator() {
        let space = half_half();
        let p = dens(&space, vec![1.2, 0.8]);
        let rho = ConvexExpectation::linear(p.clone());
        assert_eq!(rho.penalty(&p).unwrap(), ExtendedReal::Finite(0.0));
        let other = dens(&space, vec![1.0, 1.0]);
        assert_eq!(rho.penalty(&other).unwrap(), ExtendedReal::PosInf);
    }

    #[test]
    fn entropic_penalty_is_kl() {
        let space = half_half();
        let q0 = dens(&space, vec![1.5, 0.5]);
        let rho = ConvexExpectation::entropic(q0.clone());
        assert_eq!(rho.penalty(&q0).unwrap(), ExtendedReal::Finite(0.0));

        // Fenchel-Young holds with equality at the softmax density.
        let x = rv(&space, vec![0.0, 1.0]);
        let q_star = rho.representation_maximizer(x.values());
        let pen = rho.penalty(&q_star).unwrap().finite().unwrap();
        let gap = crate::space::expectation(&q_star, &x).unwrap() - pen
            - rho.evaluate(&x).unwrap();
        assert!(gap.abs() < 1e-13, "Fenchel-Young gap {gap}");

        // frozen closed form: KL = e/(3+e) - ln((3+e)/4)
        let expected = E / (3.0 + E) - ((3.0 + E) / 4.0).ln();
        assert!((pen - expected).abs() < 1e-14);
    }

    #[test]
    fn worst_case_penalty_is_hull_indicator() {
        let space = half_half();
        let rho = ConvexExpectation::worst_case(vec![
            dens(&space, vec![1.6, 0.4]),
            dens(&space, vec![0.4, 1.6]),
        ])
        .unwrap();
        let inside = dens(&space, vec![1.0, 1.0]);
        assert_eq!(rho.penalty(&inside).unwrap(), ExtendedReal::Finite(0.0));
        let outside = dens(&space, vec![1.8, 0.2]);
        assert_eq!(rho.penalty(&outside).unwrap(), ExtendedReal::PosInf);
    }

    #[test]
    fn finitely_generated_penalty_solves_the_mixture_program() {
        let space = half_half();
        let rho = ConvexExpectation::finitely_generated(vec![
            (dens(&space, vec![1.6, 0.4]), 0.0),
            (dens(&space, vec![0.4, 1.6]), 1.0),
        ])
        .unwrap();
        let mid = dens(&space, vec![1.0, 1.0]);
        let pen = rho.penalty(&mid).unwrap().finite().unwrap();
        assert!((pen - 0.5).abs() < 1e-12);
        let vertex = dens(&space, vec![1.6, 0.4]);
        let pen = rho.penalty(&vertex).unwrap().finite().unwrap();
        assert!(pen.abs() < 1e-12);
        let outside = dens(&space, vec![1.8, 0.2]);
        assert_eq!(rho.penalty(&outside).unwrap(), ExtendedReal::PosInf);
    }

    #[test]
    fn penalty_numeric_matches_entropic_closed_form() {
        let space =
            FiniteProbSpace::from_weights(vec![(E - 2.0) / (E - 1.0), 1.0 / (E - 1.0)]).unwrap();
        let rho = ConvexExpectation::entropic(dens(&space, vec![1.0, 1.0]));
        let q = dens(&space, vec![E / (E - 1.0), 1.0 / (E - 1.0)]);
        let closed = rho.penalty(&q).unwrap().finite().unwrap();
        let numeric = rho
            .penalty_numeric(&q, &PenaltyNumericConfig::default())
            .unwrap()
            .finite()
            .unwrap();
        assert!(
            (numeric - closed).abs() < 1e-6,
            "numeric {numeric} vs closed {closed}"
        );
    }

    #[test]
    fn penalty_numeric_detects_linear_divergence() {
        let space = half_half();
        let rho = ConvexExpectation::linear(dens(&space, vec![1.2, 0.8]));
        let q = dens(&space, vec![1.0, 1.0]);
        assert_eq!(
            rho.penalty_numeric(&q, &PenaltyNumericConfig::default())
                .unwrap(),
            ExtendedReal::PosInf
        );
        let same = dens(&space, vec![1.2, 0.8]);
        assert_eq!(
            rho.penalty_numeric(&same, &PenaltyNumericConfig::default())
                .unwrap(),
            ExtendedReal::Finite(0.0)
        );
    }

    #[test]
    fn penalty_numeric_polyhedral_interior_is_indeterminate_with_tight_bound() {
        let space = half_half();
        let rho = ConvexExpectation::worst_case(vec![
            dens(&space, vec![1.6, 0.4]),
            dens(&space, vec![0.4, 1.6]),
        ])
        .unwrap();
        let mid = dens(&space, vec![1.0, 1.0]);
        match rho.penalty_numeric(&mid, &PenaltyNumericConfig::default()) {
            Err(RiskError::Indeterminate {
                best_lower_bound, ..
            }) => {
                // true value is 0 and ascent never overstates it
                assert!(best_lower_bound.abs() < 1e-12);
            }
            other => panic!("expected indeterminate outcome, got {other:?}"),
        }
    }

    #[test]
    fn axioms_pass_for_all_variants() {
        let space = half_half();
        let variants = vec![
            ConvexExpectation::linear(dens(&space, vec![1.2, 0.8])),
            ConvexExpectation::entropic(dens(&space, vec![1.5, 0.5])),
            ConvexExpectation::worst_case(vec![
                dens(&space, vec![1.6, 0.4]),
                dens(&space, vec![0.4, 1.6]),
            ])
            .unwrap(),
            ConvexExpectation::finitely_generated(vec![
                (dens(&space, vec![1.6, 0.4]), 0.0),
                (dens(&space, vec![0.4, 1.6]), 0.7),
            ])
            .unwrap(),
        ];
        for rho in variants {
            let report = rho.certify_axioms(1000, 7);
            assert!(report.pass, "axioms failed: {report:?}");
        }
    }

    #[test]
    fn corrupted_functional_fails_invariance_only() {
        let space = half_half();
        let rho = ConvexExpectation::entropic(dens(&space, vec![1.5, 0.5]));
        let corrupted = |x: &[f64]| {
            rho.evaluate_slice(x) + 0.01 * x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        let report = certify_axioms_fn(corrupted, 2, 1000, 7);
        assert!(!report.pass);
        assert!(report.monotonicity.pass);
        assert!(!report.invariance.pass);
        assert!(report.invariance.failures > 0);
        assert!(report.invariance.first_counterexample.is_some());
        // adding a convex function keeps convexity
        assert!(report.convexity.pass);
    }

    #[test]
    fn representation_certifies_entropic_and_finds_softmax() {
        let space = half_half();
        let rho = ConvexExpectation::entropic(dens(&space, vec![1.5, 0.5]));
        let x = rv(&space, vec![0.0, 1.0]);
        let report = rho.certify_representation(&x, 1e-3).unwrap();
        assert!(report.pass, "{report:?}");
        assert!((report.used_step - 1e-3).abs() < 1e-12);
        assert!(report.deviation <= 1e-3 + 1e-6);
        // maximizer close to the softmax density (6/(3+e), 2e/(3+e))
        let expected = [6.0 / (3.0 + E), 2.0 * E / (3.0 + E)];
        for (got, want) in report.maximizer_density.iter().zip(expected) {
            assert!((got - want).abs() < 1e-2, "{report:?}");
        }
    }

    #[test]
    fn representation_is_exact_for_linear_on_grid() {
        let space = half_half();
        let rho = ConvexExpectation::linear(dens(&space, vec![1.2, 0.8]));
        let x = rv(&space, vec![2.0, -1.0]);
        let report = rho.certify_representation(&x, 1e-3).unwrap();
        assert!(report.pass);
        assert!(report.deviation < 1e-12);
        assert!((report.maximizer_density[0] - 1.2).abs() < 1e-12);
        assert!((report.maximizer_density[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn representation_coarsens_lp_variants_to_budget() {
        let space = FiniteProbSpace::from_weights(vec![0.25, 0.25, 0.5]).unwrap();
        let rho = ConvexExpectation::worst_case(vec![
            dens(&space, vec![1.6, 0.8, 0.8]),
            dens(&space, vec![0.4, 1.2, 1.2]),
        ])
        .unwrap();
        let x = rv(&space, vec![1.0, 0.0, -1.0]);
        let report = rho.certify_representation(&x, 1e-3).unwrap();
        assert!(report.used_step > 1e-3);
        assert!(
            simplex_grid_size((1.0 / report.used_step).round() as u64, 3) <= 300_000
        );
        // the maximizing vertex (probabilities 0.4, 0.2, 0.4) lies on the
        // coarsened grid, so the certificate still passes
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn representation_refuses_large_dimensions() {
        let space = FiniteProbSpace::from_weights(vec![0.2; 5]).unwrap();
        let rho = ConvexExpectation::linear(dens(&space, vec![1.0; 5]));
        let x = rv(&space, vec![0.0; 5]);
        match rho.certify_representation(&x, 1e-2) {
            Err(RiskError::DimensionTooLarge { n: 5, max: 4 }) => {}
            other => panic!("expected dimension refusal, got {other:?}"),
        }
    }

    #[test]
    fn composition_iterator_counts_and_sums() {
        let mut counts = vec![3u64, 0, 0];
        let mut seen = 0;
        loop {
            assert_eq!(counts.iter().sum::<u64>(), 3);
            seen += 1;
            if !next_composition(&mut counts) {
                break;
            }
        }
        assert_eq!(seen, 10);
        assert_eq!(simplex_grid_size(3, 3), 10);
        assert_eq!(counts, vec![0, 0, 3]);
    }

    #[test]
    fn evaluate_rejects_mismatched_spaces() {
        let space = half_half();
        let other = FiniteProbSpace::from_weights(vec![0.2, 0.3, 0.5]).unwrap();
        let rho = ConvexExpectation::linear(dens(&space, vec![1.0, 1.0]));
        let x = rv(&other, vec![0.0, 1.0, 2.0]);
        assert!(rho.evaluate(&x).is_err());
    }
}
