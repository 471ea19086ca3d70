//! The generalized Neyman-Pearson pipeline: primal solve, α*
//! refinement, least-favorable pair search, and threshold-test
//! construction, each stage carrying its own optimality certificate.
//!
//! The problem solved is
//!
//! ```text
//! β = inf { ρ₂(k₂ − X) : k₁ ≤ X ≤ k₂,  ρ₁(X) ≤ α }
//! ```
//!
//! for convex expectations ρ₁, ρ₂ on a finite probability space. The
//! pipeline then finds the least-favorable pair (P*, Q*), the refined
//! significance level α*, the threshold constant z, and the randomized
//! threshold test
//!
//! ```text
//! X* = k₂·1{z·H > G} + B·1{z·H = G} + k₁·1{z·H < G},
//! ```
//!
//! where G, H are the densities of P*, Q*. Every stage verifies a
//! duality identity; a solve whose identities all hold within
//! tolerance is `Verified`, anything else is reported `Unverified`
//! with the failing checks named, never silently accepted.

mod engine;
mod stages;

pub use stages::{
    construct_threshold_test, find_p_star, find_q_star, inner_sup_box_linear, refine_alpha_star,
    solve_primal, support_function, verify_threshold_form, InnerSup, PStarOutcome, PrimalSolution,
    QStarOutcome, RefineOutcome, SupportValue, ThresholdAtomCheck, ThresholdClass,
    ThresholdReport, ThresholdTest,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::risk::{ConvexExpectation, RiskError};
use crate::space::{DensityVector, FiniteProbSpace, RandomVariable, SpaceError};

/// Default optimality tolerance for stage certificates.
pub const DEFAULT_TOL_OPT: f64 = 1e-8;
/// Default one-sided feasibility tolerance.
pub const DEFAULT_TOL_FEAS: f64 = 1e-9;
/// Default relative equality band for likelihood-ratio comparisons.
pub const DEFAULT_TAU_EQ: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("box is empty or inverted: k1 = {k1}, k2 = {k2} (need k1 < k2)")]
    InvalidBox { k1: f64, k2: f64 },
    #[error("problem is infeasible: the significance level alpha = {alpha} lies below rho1(k1·1) = {rho1_at_k1}, so no test satisfies the constraint")]
    Infeasible { rho1_at_k1: f64, alpha: f64 },
    #[error("gamma = {gamma} is outside the achievable range [{k1}, {k2}] of E_Q*[X]; upstream stage produced an inconsistent value")]
    GammaOutOfRange { gamma: f64, k1: f64, k2: f64 },
    #[error("internal consistency failure in stage {stage}: {message}")]
    Pipeline { stage: &'static str, message: String },
}

/// The testing problem: two convex expectations, a box, and a
/// significance level.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    space: FiniteProbSpace,
    rho1: ConvexExpectation,
    rho2: ConvexExpectation,
    k1: f64,
    k2: f64,
    alpha: f64,
}

impl ProblemSpec {
    pub fn new(
        space: FiniteProbSpace,
        rho1: ConvexExpectation,
        rho2: ConvexExpectation,
        k1: f64,
        k2: f64,
        alpha: f64,
    ) -> Result<Self, SolverError> {
        if !rho1.space().same_space(&space) {
            return Err(SpaceError::DimensionMismatch {
                left: space.n(),
                right: rho1.space().n(),
            }
            .into());
        }
        if !rho2.space().same_space(&space) {
            return Err(SpaceError::DimensionMismatch {
                left: space.n(),
                right: rho2.space().n(),
            }
            .into());
        }
        if !(k1.is_finite() && k2.is_finite() && k1 < k2) {
            return Err(SolverError::InvalidBox { k1, k2 });
        }
        if !alpha.is_finite() {
            return Err(SolverError::Pipeline {
                stage: "spec",
                message: format!("alpha must be finite, got {alpha}"),
            });
        }
        Ok(Self {
            space,
            rho1,
            rho2,
            k1,
            k2,
            alpha,
        })
    }

    pub fn space(&self) -> &FiniteProbSpace {
        &self.space
    }
    pub fn rho1(&self) -> &ConvexExpectation {
        &self.rho1
    }
    pub fn rho2(&self) -> &ConvexExpectation {
        &self.rho2
    }
    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn k2(&self) -> f64 {
        self.k2
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// ρ₁ at the two constant tests bounding the box.
    pub fn constraint_range(&self) -> (f64, f64) {
        let n = self.space.n();
        let lo = self.rho1.evaluate_slice(&vec![self.k1; n]);
        let hi = self.rho1.evaluate_slice(&vec![self.k2; n]);
        (lo, hi)
    }

    /// True when the significance constraint excludes every test.
    pub fn is_infeasible(&self, tol_feas: f64) -> bool {
        let (lo, _) = self.constraint_range();
        lo > self.alpha + tol_feas * self.alpha.abs().max(1.0)
    }

    /// True when every box test satisfies the constraint, so the
    /// significance level never binds.
    pub fn is_constraint_vacuous(&self) -> bool {
        let (_, hi) = self.constraint_range();
        self.alpha >= hi
    }

    /// The box is flagged nonstandard when it is not of the usual
    /// randomized-test form 0 ≤ k₁ < k₂.
    pub fn nonstandard_box(&self) -> bool {
        self.k1 < 0.0
    }
}

/// A randomized test: atom values clamped into the box on
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    x: RandomVariable,
}

impl TestFunction {
    pub fn new(
        space: FiniteProbSpace,
        values: Vec<f64>,
        k1: f64,
        k2: f64,
    ) -> Result<Self, SpaceError> {
        let clamped = values.into_iter().map(|v| v.clamp(k1, k2)).collect();
        Ok(Self {
            x: RandomVariable::new(space, clamped)?,
        })
    }

    pub fn values(&self) -> &[f64] {
        self.x.values()
    }

    pub fn random_variable(&self) -> &RandomVariable {
        &self.x
    }

    pub fn space(&self) -> &FiniteProbSpace {
        self.x.space()
    }
}

/// Solver tolerances and iteration caps.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
pub struct SolverConfig {
    pub tol_opt: f64,
    pub tol_feas: f64,
    pub tau_eq: f64,
    pub max_outer_iter: usize,
    pub max_inner_iter: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_opt: DEFAULT_TOL_OPT,
            tol_feas: DEFAULT_TOL_FEAS,
            tau_eq: DEFAULT_TAU_EQ,
            max_outer_iter: 100_000,
            max_inner_iter: 100_000,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub(crate) fn engine(&self) -> engine::EngineConfig {
        engine::EngineConfig {
            tol_feas: self.tol_feas,
            ..engine::EngineConfig::default()
        }
    }

    /// The gap at which a stage certificate is accepted.
    pub(crate) fn certificate_tol(&self) -> f64 {
        10.0 * self.tol_opt
    }
}

/// Whether every stage certificate held.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SolutionStatus {
    Verified,
    Unverified { reasons: Vec<String> },
}

impl SolutionStatus {
    pub fn is_verified(&self) -> bool {
        matches!(self, SolutionStatus::Verified)
    }
}

/// Residuals and certificate gaps from each stage of a solve.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    /// Certificate gap of the primal minimization.
    pub primal_gap: f64,
    /// Certificate gap of the α* refinement program.
    pub refine_gap: f64,
    /// Certificate gap of the support-function solve at Q*.
    pub support_gap: f64,
    /// |k₂ − g(Q*) − β|, the zero-duality-gap residual.
    pub saddle_residual: f64,
    /// |h(P*) − (k₂ − α*)|, the dual-side optimality residual.
    pub dual_residual: f64,
    /// |E_{P*}[k₂ − X*] − inner sup value|, dual attainment.
    pub dual_attainment_residual: f64,
    /// |E_{Q*}[X*] − γ| after threshold construction.
    pub budget_residual: f64,
    /// ρ₁(X*) − α*, positive values mean constraint slack was used.
    pub alpha_star_excess: f64,
    /// ρ₂(k₂ − X*) − β for the constructed threshold test.
    pub beta_excess: f64,
    /// Worst per-atom residual from threshold-form verification.
    pub threshold_max_residual: f64,
    pub constraint_vacuous: bool,
    pub nonstandard_box: bool,
    /// Free-text notes from stages (fallbacks taken, checks skipped).
    pub stage_notes: Vec<String>,
}

/// The full solver output for one problem.
#[derive(Clone, Debug)]
pub struct NpSolution {
    pub x_star: TestFunction,
    pub beta: f64,
    pub alpha_star: f64,
    pub gamma: f64,
    pub q_star: DensityVector,
    pub p_star: DensityVector,
    pub z: f64,
    /// B values on the equality event, by atom index.
    pub boundary_randomization: BTreeMap<usize, f64>,
    pub duality_gap: f64,
    pub diagnostics: Diagnostics,
    pub status: SolutionStatus,
}

/// |k₂ − saddle value − β|: the Lagrangian duality residual that must
/// vanish at a least-favorable pair.
pub fn duality_gap(k2: f64, saddle_value: f64, beta: f64) -> f64 {
    (k2 - saddle_value - beta).abs()
}

/// Runs the full pipeline and assembles the certified solution.
///
/// Stage certificates that fail to close within `10·tol_opt` do not
/// abort the solve; they are collected into an `Unverified` status so
/// callers can still inspect the candidate solution alongside the
/// precise list of unmet identities. Hard errors are reserved for
/// infeasible or structurally invalid inputs.
pub fn solve(spec: &ProblemSpec, config: &SolverConfig) -> Result<NpSolution, SolverError> {
    let (rho1_at_k1, _) = spec.constraint_range();
    if spec.is_infeasible(config.tol_feas) {
        return Err(SolverError::Infeasible {
            rho1_at_k1,
            alpha: spec.alpha(),
        });
    }

    let mut reasons: Vec<String> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    let cert_tol = config.certificate_tol();

    let primal = solve_primal(spec, config)?;
    if primal.gap > cert_tol {
        reasons.push(format!(
            "primal certificate gap {:.3e} exceeds {:.3e}",
            primal.gap, cert_tol
        ));
    }
    let beta = primal.beta;

    let refine = refine_alpha_star(spec, &primal.x_star, beta, primal.gap, config)?;
    if refine.gap > cert_tol {
        reasons.push(format!(
            "alpha* refinement certificate gap {:.3e} exceeds {:.3e}",
            refine.gap, cert_tol
        ));
    }
    let alpha_star = refine.alpha_star;

    let q_outcome = find_q_star(spec, alpha_star, beta, config)?;
    if let Some(note) = &q_outcome.note {
        notes.push(note.clone());
    }
    let saddle_residual = duality_gap(spec.k2(), q_outcome.saddle_value, beta);
    if saddle_residual > cert_tol {
        reasons.push(format!(
            "saddle failure: |k2 - g(Q*) - beta| = {:.3e} exceeds {:.3e}",
            saddle_residual, cert_tol
        ));
    }
    let gamma = q_outcome.gamma;

    let p_outcome = find_p_star(spec, &q_outcome.q_star, gamma, alpha_star, config)?;
    if let Some(note) = &p_outcome.note {
        notes.push(note.clone());
    }
    if p_outcome.dual_residual > cert_tol {
        reasons.push(format!(
            "dual-side failure: |h(P*) - (k2 - alpha*)| = {:.3e} exceeds {:.3e}",
            p_outcome.dual_residual, cert_tol
        ));
    }

    let threshold = construct_threshold_test(
        &p_outcome.p_star,
        &q_outcome.q_star,
        gamma,
        spec.k1(),
        spec.k2(),
        config,
    )?;

    // invariants of the assembled solution
    let x_star = threshold.x_star.clone();
    let rho2_at_test = spec
        .rho2()
        .evaluate_slice(&k2_minus(spec.k2(), x_star.values()));
    let beta_excess = rho2_at_test - beta;
    if beta_excess > config.tol_opt {
        reasons.push(format!(
            "threshold test misses beta: rho2(k2 - X*) - beta = {:.3e} exceeds {:.3e}",
            beta_excess, config.tol_opt
        ));
    }
    let rho1_at_test = spec.rho1().evaluate_slice(x_star.values());
    let alpha_star_excess = rho1_at_test - alpha_star;
    if alpha_star_excess > config.tol_feas * alpha_star.abs().max(1.0) {
        reasons.push(format!(
            "threshold test exceeds alpha*: rho1(X*) - alpha* = {:.3e}",
            alpha_star_excess
        ));
    }
    let budget_residual = (crate::space::expectation(&q_outcome.q_star, x_star.random_variable())?
        - gamma)
        .abs();
    if budget_residual > config.tol_opt {
        reasons.push(format!(
            "saddle consistency: |E_Q*[X*] - gamma| = {:.3e} exceeds {:.3e}",
            budget_residual, config.tol_opt
        ));
    }

    // dual attainment: E_{P*}[k2 - X*] must equal the inner sup value
    let w_star = k2_minus(spec.k2(), x_star.values());
    let e_p_w = crate::space::expectation(
        &p_outcome.p_star,
        &RandomVariable::new(spec.space().clone(), w_star)?,
    )?;
    let dual_attainment_residual = (e_p_w - p_outcome.inner_sup_value).abs();
    if dual_attainment_residual > cert_tol {
        reasons.push(format!(
            "dual attainment: |E_P*[k2 - X*] - inner sup| = {:.3e} exceeds {:.3e}",
            dual_attainment_residual, cert_tol
        ));
    }

    let form = verify_threshold_form(
        &x_star,
        &p_outcome.p_star,
        &q_outcome.q_star,
        threshold.z,
        spec.k1(),
        spec.k2(),
        config,
    )?;
    if !form.pass {
        reasons.push(format!(
            "threshold form violated on atoms {:?} (max residual {:.3e})",
            form.failing_atoms(),
            form.max_residual
        ));
    }

    let diagnostics = Diagnostics {
        primal_gap: primal.gap,
        refine_gap: refine.gap,
        support_gap: q_outcome.support_gap,
        saddle_residual,
        dual_residual: p_outcome.dual_residual,
        dual_attainment_residual,
        budget_residual,
        alpha_star_excess,
        beta_excess,
        threshold_max_residual: form.max_residual,
        constraint_vacuous: spec.is_constraint_vacuous(),
        nonstandard_box: spec.nonstandard_box(),
        stage_notes: notes,
    };

    let status = if reasons.is_empty() {
        SolutionStatus::Verified
    } else {
        SolutionStatus::Unverified { reasons }
    };

    Ok(NpSolution {
        x_star,
        beta,
        alpha_star,
        gamma,
        q_star: q_outcome.q_star,
        p_star: p_outcome.p_star,
        z: threshold.z,
        boundary_randomization: threshold.boundary_randomization,
        duality_gap: saddle_residual,
        diagnostics,
        status,
    })
}

pub(crate) fn k2_minus(k2: f64, values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| k2 - v).collect()
}
