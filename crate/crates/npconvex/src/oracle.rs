//! Brute-force grid verification, independent of the solver's
//! analytic machinery.
//!
//! The oracles re-solve tiny instances by exhaustive enumeration: the
//! primal program over a uniform grid of test functions, and the Q*
//! saddle objective over a simplex grid of alternative measures. They
//! share nothing with the pipeline beyond the definitions of the
//! objectives themselves, which is what makes agreement meaningful.
//!
//! Enumeration is lexicographic and ties keep the first hit, so every
//! oracle result is deterministic. Work is bounded by an evaluation
//! budget; exceeding it is a refusal, never a silent truncation.

use serde::Serialize;
use thiserror::Error;

use crate::risk::{next_composition, simplex_grid_size, ConvexExpectation, RiskError};
use crate::solver::{
    inner_sup_box_linear, solve, support_function, NpSolution, ProblemSpec, SolverConfig,
    SolverError, TestFunction,
};
use crate::space::{DensityVector, ExtendedReal, SpaceError};

/// Default cap on oracle grid evaluations.
pub const DEFAULT_BUDGET: u64 = 100_000_000;
/// Largest dimension the primal oracle will enumerate.
pub const PRIMAL_DIM_CAP: usize = 4;
/// Largest dimension the measure-side oracle will enumerate.
pub const MEASURE_DIM_CAP: usize = 3;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("grid {field} = {value} is too coarse; need at least 2 points")]
    InvalidGrid { field: &'static str, value: usize },
    #[error("the oracle enumerates at most {max} atoms, got {n}")]
    DimensionTooLarge { n: usize, max: usize },
    #[error("the requested grid needs {required} evaluations, over the budget of {budget}; coarsen the grid or raise NPCONVEX_BUDGET")]
    BudgetExceeded { required: u64, budget: u64 },
}

/// Grid resolutions for the two enumeration axes.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridSpec {
    /// Points per atom across [k₁, k₂] for test-function grids.
    pub test_resolution: usize,
    /// Steps of the probability simplex grid (spacing 1/s).
    pub simplex_resolution: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            test_resolution: 41,
            simplex_resolution: 400,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.test_resolution < 2 {
            return Err(OracleError::InvalidGrid {
                field: "test_resolution",
                value: self.test_resolution,
            });
        }
        if self.simplex_resolution < 2 {
            return Err(OracleError::InvalidGrid {
                field: "simplex_resolution",
                value: self.simplex_resolution,
            });
        }
        Ok(())
    }
}

/// The largest density value among the measures defining `rho`; a
/// valid (if coarse) Lipschitz constant for ρ-based objectives in the
/// sup norm, since every representation density integrates to one.
fn density_sup(rho: &ConvexExpectation) -> f64 {
    let max_of = |d: &DensityVector| d.values().iter().fold(0.0f64, |a, v| a.max(*v));
    match rho {
        ConvexExpectation::Linear(p) => max_of(p),
        ConvexExpectation::Entropic(q0) => max_of(q0),
        ConvexExpectation::WorstCase(family) => {
            family.iter().map(max_of).fold(0.0, f64::max)
        }
        ConvexExpectation::FinitelyGenerated(gens) => {
            gens.iter().map(|(q, _)| max_of(q)).fold(0.0, f64::max)
        }
    }
}

/// Grid minimum of the primal program.
#[derive(Clone, Debug)]
pub struct OraclePrimal {
    pub value: f64,
    pub argmin: TestFunction,
    /// Guaranteed bound: value ≤ true β + error_bound.
    pub error_bound: f64,
    /// The Lipschitz constant used for the bound.
    pub lipschitz: f64,
    pub evaluations: u64,
    pub feasible_points: u64,
}

/// Enumerates every test function on the uniform mⁿ grid, filters by
/// ρ₁(X) ≤ α, and returns the minimal ρ₂(k₂ − X).
///
/// Soundness of the error bound: rounding the true minimizer down to
/// the grid atomwise stays feasible (ρ₁ is monotone) and moves ρ₂ by
/// at most L·(k₂ − k₁)/(m − 1).
pub fn oracle_primal(
    spec: &ProblemSpec,
    grid: &GridSpec,
    budget: u64,
) -> Result<OraclePrimal, OracleError> {
    grid.validate()?;
    let n = spec.space().n();
    if n > PRIMAL_DIM_CAP {
        return Err(OracleError::DimensionTooLarge {
            n,
            max: PRIMAL_DIM_CAP,
        });
    }
    let m = grid.test_resolution;
    let required = (m as u64)
        .checked_pow(n as u32)
        .unwrap_or(u64::MAX);
    if required > budget {
        return Err(OracleError::BudgetExceeded { required, budget });
    }

    let (k1, k2) = (spec.k1(), spec.k2());
    let step = 1.0 / (m - 1) as f64;
    let levels: Vec<f64> = (0..m).map(|i| k1 + (i as f64 * step) * (k2 - k1)).collect();
    let alpha_slack = spec.alpha() + 1e-12 * spec.alpha().abs().max(1.0);

    let mut idx = vec![0usize; n];
    let mut x = vec![levels[0]; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut feasible_points = 0u64;
    loop {
        if spec.rho1().evaluate_slice(&x) <= alpha_slack {
            feasible_points += 1;
            let y: Vec<f64> = x.iter().map(|v| k2 - v).collect();
            let value = spec.rho2().evaluate_slice(&y);
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, x.clone()));
            }
        }
        // odometer: last atom fastest, so enumeration is lexicographic
        let mut k = n;
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < m {
                x[k] = levels[idx[k]];
                break;
            }
            idx[k] = 0;
            x[k] = levels[0];
            if k == 0 {
                k = usize::MAX;
                break;
            }
        }
        if k == usize::MAX {
            break;
        }
    }

    let Some((value, argmin)) = best else {
        let (rho1_at_k1, _) = spec.constraint_range();
        return Err(SolverError::Infeasible {
            rho1_at_k1,
            alpha: spec.alpha(),
        }
        .into());
    };
    let lipschitz = density_sup(spec.rho2()).max(1.0);
    Ok(OraclePrimal {
        value,
        argmin: TestFunction::new(spec.space().clone(), argmin, k1, k2)?,
        error_bound: lipschitz * (k2 - k1) * step,
        lipschitz,
        evaluations: required,
        feasible_points,
    })
}

/// Grid minimum of the Q* saddle objective.
#[derive(Clone, Debug)]
pub struct OracleQStar {
    pub value: f64,
    pub argmin: DensityVector,
    /// Coarse first-order estimate of the grid error, reported and
    /// not relied on by any guarantee.
    pub error_bound: f64,
    pub evaluations: u64,
}

/// Enumerates probability vectors on the simplex grid {counts/s},
/// evaluating g(Q) = sup {E_Q[X] : ρ₁(X) ≤ α*} + ρ₂*(Q) for each, and
/// returns the grid minimizer. Points with infinite penalty are
/// skipped.
pub fn oracle_q_star(
    spec: &ProblemSpec,
    alpha_star: f64,
    grid: &GridSpec,
    budget: u64,
) -> Result<OracleQStar, OracleError> {
    grid.validate()?;
    let n = spec.space().n();
    if n > MEASURE_DIM_CAP {
        return Err(OracleError::DimensionTooLarge {
            n,
            max: MEASURE_DIM_CAP,
        });
    }
    let s = grid.simplex_resolution as u64;
    let required = simplex_grid_size(s, n);
    if required > budget {
        return Err(OracleError::BudgetExceeded { required, budget });
    }

    let config = SolverConfig::default();
    let mu = spec.space().mu().to_vec();
    let mut counts = vec![0u64; n];
    counts[0] = s;
    let mut best: Option<(f64, DensityVector)> = None;
    let mut evaluations = 0u64;
    loop {
        evaluations += 1;
        let density: Vec<f64> = counts
            .iter()
            .zip(&mu)
            .map(|(&c, m)| (c as f64 / s as f64) / m)
            .collect();
        let q = DensityVector::new(spec.space().clone(), density)?;
        if let ExtendedReal::Finite(pen) = spec.rho2().penalty(&q)? {
            let sigma = support_function(spec, alpha_star, &q, &config)?;
            let g = sigma.value + pen;
            if best.as_ref().is_none_or(|(b, _)| g < *b) {
                best = Some((g, q));
            }
        }
        if !next_composition(&mut counts) {
            break;
        }
    }

    let Some((value, argmin)) = best else {
        return Err(OracleError::Risk(RiskError::Indeterminate {
            max_iter: 0,
            best_lower_bound: f64::NEG_INFINITY,
        }));
    };
    let lip = grid_objective_lipschitz(spec.rho2(), spec.k1(), spec.k2(), s);
    Ok(OracleQStar {
        value,
        argmin,
        error_bound: lip * (n as f64) / s as f64,
        evaluations,
    })
}

/// A coarse Lipschitz estimate of g(Q) in probability coordinates,
/// restricted to the grid (probabilities are multiples of 1/s, so the
/// entropic log-slope is evaluated no closer to the boundary than
/// that).
fn grid_objective_lipschitz(rho: &ConvexExpectation, k1: f64, k2: f64, s: u64) -> f64 {
    let support_part = k1.abs().max(k2.abs());
    let penalty_part = match rho {
        ConvexExpectation::Linear(_) | ConvexExpectation::WorstCase(_) => 0.0,
        ConvexExpectation::Entropic(q0) => {
            let min_ref = q0
                .probabilities()
                .into_iter()
                .filter(|p| *p > 0.0)
                .fold(f64::INFINITY, f64::min);
            1.0 + (s as f64 / min_ref.max(f64::MIN_POSITIVE)).ln().abs()
        }
        ConvexExpectation::FinitelyGenerated(gens) => gens
            .iter()
            .map(|(_, c)| *c)
            .fold(0.0, f64::max),
    };
    support_part + penalty_part
}

/// Atomwise comparison of a solver density against an oracle argmin,
/// in probability coordinates.
#[derive(Clone, Debug, Serialize)]
pub struct DensityCheck {
    pub solver_probabilities: Vec<f64>,
    pub oracle_probabilities: Vec<f64>,
    pub oracle_value: f64,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Outcome of an independent re-derivation of a solve.
#[derive(Clone, Debug, Serialize)]
pub struct CrossCheckReport {
    pub atoms: usize,
    pub solver_beta: f64,
    pub solver_verified: bool,
    pub duality_gap: f64,
    pub oracle_value: f64,
    pub oracle_error_bound: f64,
    pub value_gap: f64,
    pub value_tolerance: f64,
    pub value_pass: bool,
    /// Present when ρ₂ has a strictly convex penalty (unique Q*).
    pub q_check: Option<DensityCheck>,
    /// Present when ρ₁ has a strictly convex penalty (unique P*).
    pub p_check: Option<DensityCheck>,
    pub pass: bool,
    pub notes: Vec<String>,
}

fn strictly_convex_penalty(rho: &ConvexExpectation) -> bool {
    matches!(rho, ConvexExpectation::Entropic(_))
}

/// Runs the solver and both oracles on one instance and compares.
///
/// Discrepancies are report content, never errors: this function is
/// itself the test harness. Argmin comparisons only run for strictly
/// convex penalties, where the minimizer is unique; elsewhere the
/// value comparison is the meaningful one and a note records the skip.
pub fn cross_check(
    spec: &ProblemSpec,
    config: &SolverConfig,
    grid: &GridSpec,
    budget: u64,
) -> Result<(CrossCheckReport, NpSolution), OracleError> {
    let solution = solve(spec, config)?;
    let oracle = oracle_primal(spec, grid, budget)?;
    let mut notes = Vec::new();

    let value_gap = (solution.beta - oracle.value).abs();
    let value_tolerance = oracle.error_bound + config.tol_opt;
    let value_pass = value_gap <= value_tolerance;

    let n = spec.space().n();
    let prob_tol = 2.0 / grid.simplex_resolution as f64 + 1e-6;

    let q_check = if !strictly_convex_penalty(spec.rho2()) {
        notes.push(
            "rho2 penalty is not strictly convex; Q* is not unique, so the argmin \
             comparison is skipped"
                .to_string(),
        );
        None
    } else if n > MEASURE_DIM_CAP {
        notes.push(format!(
            "Q* oracle skipped: {n} atoms exceeds the measure-side cap of {MEASURE_DIM_CAP}"
        ));
        None
    } else {
        let oq = oracle_q_star(spec, solution.alpha_star, grid, budget)?;
        let solver_p = solution.q_star.probabilities();
        let oracle_p = oq.argmin.probabilities();
        let max_abs_diff = solver_p
            .iter()
            .zip(&oracle_p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Some(DensityCheck {
            pass: max_abs_diff <= prob_tol,
            solver_probabilities: solver_p,
            oracle_probabilities: oracle_p,
            oracle_value: oq.value,
            max_abs_diff,
            tolerance: prob_tol,
        })
    };

    let p_check = if !strictly_convex_penalty(spec.rho1()) {
        notes.push(
            "rho1 penalty is not strictly convex; P* is not unique, so the argmin \
             comparison is skipped"
                .to_string(),
        );
        None
    } else if n > MEASURE_DIM_CAP {
        notes.push(format!(
            "P* oracle skipped: {n} atoms exceeds the measure-side cap of {MEASURE_DIM_CAP}"
        ));
        None
    } else {
        let op = oracle_p_star(spec, &solution, grid, budget)?;
        let solver_p = solution.p_star.probabilities();
        let oracle_p = op.argmin.probabilities();
        let max_abs_diff = solver_p
            .iter()
            .zip(&oracle_p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Some(DensityCheck {
            pass: max_abs_diff <= prob_tol,
            solver_probabilities: solver_p,
            oracle_probabilities: oracle_p,
            oracle_value: op.value,
            max_abs_diff,
            tolerance: prob_tol,
        })
    };

    let pass = value_pass
        && q_check.as_ref().map_or(true, |c| c.pass)
        && p_check.as_ref().map_or(true, |c| c.pass);
    let report = CrossCheckReport {
        atoms: n,
        solver_beta: solution.beta,
        solver_verified: solution.status.is_verified(),
        duality_gap: solution.duality_gap,
        oracle_value: oracle.value,
        oracle_error_bound: oracle.error_bound,
        value_gap,
        value_tolerance,
        value_pass,
        q_check,
        p_check,
        pass,
        notes,
    };
    Ok((report, solution))
}

/// Simplex-grid minimizer of the P-side objective
/// h(P) = sup {E_P[W] : 0 ≤ W ≤ k₂−k₁, E_Q*[W] ≤ k₂−γ} + ρ₁*(P),
/// conditioned on the solver's (Q*, γ).
fn oracle_p_star(
    spec: &ProblemSpec,
    solution: &NpSolution,
    grid: &GridSpec,
    budget: u64,
) -> Result<OracleQStar, OracleError> {
    let n = spec.space().n();
    let s = grid.simplex_resolution as u64;
    let required = simplex_grid_size(s, n);
    if required > budget {
        return Err(OracleError::BudgetExceeded { required, budget });
    }
    let (k1, k2) = (spec.k1(), spec.k2());
    let bound = k2 - solution.gamma.clamp(k1, k2);
    let mu = spec.space().mu().to_vec();
    let mut counts = vec![0u64; n];
    counts[0] = s;
    let mut best: Option<(f64, DensityVector)> = None;
    let mut evaluations = 0u64;
    loop {
        evaluations += 1;
        let density: Vec<f64> = counts
            .iter()
            .zip(&mu)
            .map(|(&c, m)| (c as f64 / s as f64) / m)
            .collect();
        let p = DensityVector::new(spec.space().clone(), density)?;
        if let ExtendedReal::Finite(pen) = spec.rho1().penalty(&p)? {
            let inner = inner_sup_box_linear(&p, &solution.q_star, bound, 0.0, k2 - k1)?;
            let h = inner.value + pen;
            if best.as_ref().is_none_or(|(b, _)| h < *b) {
                best = Some((h, p));
            }
        }
        if !next_composition(&mut counts) {
            break;
        }
    }
    let Some((value, argmin)) = best else {
        return Err(OracleError::Risk(RiskError::Indeterminate {
            max_iter: 0,
            best_lower_bound: f64::NEG_INFINITY,
        }));
    };
    let lip = grid_objective_lipschitz(spec.rho1(), k1, k2, s);
    Ok(OracleQStar {
        value,
        argmin,
        error_bound: lip * (n as f64) / s as f64,
        evaluations,
    })
}
