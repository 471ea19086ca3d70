//! The individual pipeline stages, each exposed on its own so callers
//! can replay or audit any step of a solve.

use serde::Serialize;
use std::collections::BTreeMap;

use super::engine::{self, ConvexFn, MinOutcome};
use super::{k2_minus, ProblemSpec, SolverConfig, SolverError, TestFunction};
use crate::risk::ConvexExpectation;
use crate::space::{
    expectation_slices, likelihood_ratio_partition, DensityVector, ExtendedReal,
};

/// Relative tolerance for declaring representation rows tied when
/// hunting for mixture candidates of a polyhedral expectation.
const TIE_TOL: f64 = 1e-9;
/// Golden-section iterations per level of the mixture fallback.
const MIXTURE_ITERS: usize = 48;

/// Output of the primal minimization.
#[derive(Clone, Debug)]
pub struct PrimalSolution {
    pub x_star: TestFunction,
    pub beta: f64,
    /// Certificate gap: achieved value minus proven lower bound.
    pub gap: f64,
}

/// Minimizes ρ₂(k₂ − X) over the feasible tests {k₁ ≤ X ≤ k₂,
/// ρ₁(X) ≤ α}.
pub fn solve_primal(
    spec: &ProblemSpec,
    config: &SolverConfig,
) -> Result<PrimalSolution, SolverError> {
    let obj = ConvexFn::from_risk(spec.rho2(), -1.0, spec.k2());
    let con = ConvexFn::from_risk(spec.rho1(), 1.0, 0.0);
    match engine::solve_box_min(
        &obj,
        &con,
        spec.alpha(),
        spec.k1(),
        spec.k2(),
        spec.space().n(),
        true,
        &config.engine(),
    ) {
        MinOutcome::Feasible(m) => Ok(PrimalSolution {
            beta: m.value,
            gap: m.gap(),
            x_star: TestFunction::new(spec.space().clone(), m.x, spec.k1(), spec.k2())?,
        }),
        MinOutcome::Infeasible => {
            let (rho1_at_k1, _) = spec.constraint_range();
            Err(SolverError::Infeasible {
                rho1_at_k1,
                alpha: spec.alpha(),
            })
        }
    }
}

/// Output of the significance-refinement stage.
#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub alpha_star: f64,
    pub x_refined: TestFunction,
    pub gap: f64,
}

/// Minimizes ρ₁(X) over the near-optimal tests {ρ₂(k₂ − X) ≤ β + s},
/// producing the effective significance level α* actually needed by
/// an optimal test. Any returned test keeps ρ₂(k₂ − X) within
/// 2·tol_opt of β.
///
/// The slack s exists only so that β's own numeric error can never
/// cut the true optimum out of the feasible set; it is sized from the
/// primal certificate gap `beta_gap` and capped at tol_opt. Keeping s
/// far below tol_opt matters: every s spent here surfaces later as a
/// deficit between γ and the threshold-test budget.
pub fn refine_alpha_star(
    spec: &ProblemSpec,
    x_primal: &TestFunction,
    beta: f64,
    beta_gap: f64,
    config: &SolverConfig,
) -> Result<RefineOutcome, SolverError> {
    let obj = ConvexFn::from_risk(spec.rho1(), 1.0, 0.0);
    let con = ConvexFn::from_risk(spec.rho2(), -1.0, spec.k2());
    let mut slack = (1e-3 * config.tol_opt).max(1e-12 * (1.0 + beta.abs()));
    if beta_gap.is_finite() {
        slack = slack.max(2.0 * beta_gap);
    }
    let limit = beta + slack.min(config.tol_opt);
    let m = match engine::solve_box_min(
        &obj,
        &con,
        limit,
        spec.k1(),
        spec.k2(),
        spec.space().n(),
        false,
        &config.engine(),
    ) {
        MinOutcome::Feasible(m) => m,
        MinOutcome::Infeasible => {
            return Err(SolverError::Pipeline {
                stage: "refine_alpha_star",
                message: format!(
                    "the near-optimal set at beta = {beta} is empty, but X = k2 always attains rho2(0) <= beta"
                ),
            });
        }
    };
    // The primal solution is itself feasible here; never report a
    // worse alpha* than it achieves.
    let rho1_at_primal = spec.rho1().evaluate_slice(x_primal.values());
    if rho1_at_primal < m.value {
        return Ok(RefineOutcome {
            alpha_star: rho1_at_primal,
            x_refined: x_primal.clone(),
            gap: (rho1_at_primal - m.lower).max(0.0),
        });
    }
    Ok(RefineOutcome {
        alpha_star: m.value,
        gap: m.gap(),
        x_refined: TestFunction::new(spec.space().clone(), m.x, spec.k1(), spec.k2())?,
    })
}

/// A certified support-function value sup {E_Q[X] : ρ₁(X) ≤ α*} over
/// the box.
#[derive(Clone, Debug)]
pub struct SupportValue {
    pub value: f64,
    pub maximizer: TestFunction,
    pub gap: f64,
}

/// Computes the support function of the α*-feasible test set in the
/// direction of the density `q`.
pub fn support_function(
    spec: &ProblemSpec,
    alpha_star: f64,
    q: &DensityVector,
    config: &SolverConfig,
) -> Result<SupportValue, SolverError> {
    spec.space().check_same(q.space())?;
    let a: Vec<f64> = spec
        .space()
        .mu()
        .iter()
        .zip(q.values())
        .map(|(m, v)| -(m * v))
        .collect();
    let obj = ConvexFn::Affine { a, b: 0.0 };
    let con = ConvexFn::from_risk(spec.rho1(), 1.0, 0.0);
    match engine::solve_box_min(
        &obj,
        &con,
        alpha_star,
        spec.k1(),
        spec.k2(),
        spec.space().n(),
        true,
        &config.engine(),
    ) {
        MinOutcome::Feasible(m) => Ok(SupportValue {
            value: -m.value,
            gap: m.gap(),
            maximizer: TestFunction::new(spec.space().clone(), m.x, spec.k1(), spec.k2())?,
        }),
        MinOutcome::Infeasible => Err(SolverError::Pipeline {
            stage: "support_function",
            message: format!(
                "the alpha* = {alpha_star} test set is empty, yet alpha* was refined from a feasible test"
            ),
        }),
    }
}

/// Output of the Q* search.
#[derive(Clone, Debug)]
pub struct QStarOutcome {
    pub q_star: DensityVector,
    /// Support value of the feasible set at Q*; the budget the
    /// threshold test must meet.
    pub gamma: f64,
    /// g(Q*) = σ(Q*) + ρ₂*(Q*), which must equal k₂ − β at a
    /// least-favorable Q*.
    pub saddle_value: f64,
    pub support_gap: f64,
    pub note: Option<String>,
}

/// Finds the least-favorable alternative Q* by minimizing
/// g(Q) = σ_{𝒳_{α*}}(Q) + ρ₂*(Q).
///
/// The first candidate comes from the first-order conditions: the
/// maximizing density in the dual representation of ρ₂ at k₂ − X̃,
/// where X̃ re-solves the primal at level α*. If ρ₂ is polyhedral and
/// several generators are tied at k₂ − X̃, the candidate set is
/// extended by a golden-section search over mixtures of the tied
/// generators; the best candidate by saddle residual wins.
pub fn find_q_star(
    spec: &ProblemSpec,
    alpha_star: f64,
    beta: f64,
    config: &SolverConfig,
) -> Result<QStarOutcome, SolverError> {
    let obj = ConvexFn::from_risk(spec.rho2(), -1.0, spec.k2());
    let con = ConvexFn::from_risk(spec.rho1(), 1.0, 0.0);
    let m = match engine::solve_box_min(
        &obj,
        &con,
        alpha_star,
        spec.k1(),
        spec.k2(),
        spec.space().n(),
        true,
        &config.engine(),
    ) {
        MinOutcome::Feasible(m) => m,
        MinOutcome::Infeasible => {
            return Err(SolverError::Pipeline {
                stage: "find_q_star",
                message: format!("primal re-solve at alpha* = {alpha_star} is infeasible"),
            });
        }
    };
    let y = k2_minus(spec.k2(), &m.x);
    let base = spec.rho2().representation_maximizer(&y);

    let assess = |q: &DensityVector| -> Result<Option<(SupportValue, f64)>, SolverError> {
        let pen = match spec.rho2().penalty(q)? {
            ExtendedReal::Finite(v) => v,
            _ => return Ok(None),
        };
        let sigma = support_function(spec, alpha_star, q, config)?;
        let g = sigma.value + pen;
        Ok(Some((sigma, g)))
    };

    let mut note = None;
    let (mut best_q, mut best) = (base.clone(), assess(&base)?);
    let best_resid = match &best {
        Some((_, g)) => (spec.k2() - g - beta).abs(),
        None => f64::INFINITY,
    };

    if best_resid > config.certificate_tol() {
        if let Some(members) = tied_members(spec.rho2(), &y) {
            if members.len() >= 2 {
                let mixed = mixture_search(&members, |q| {
                    match assess(q) {
                        Ok(Some((_, g))) => (spec.k2() - g - beta).abs(),
                        _ => f64::INFINITY,
                    }
                })?;
                if let Some(q) = mixed {
                    let cand = assess(&q)?;
                    if let Some((_, g)) = &cand {
                        let resid = (spec.k2() - g - beta).abs();
                        if resid < best_resid {
                            best_q = q;
                            best = cand;
                            note = Some(format!(
                                "q* candidate taken from a mixture of {} tied generators",
                                members.len()
                            ));
                        }
                    }
                }
            }
        }
    }

    let Some((sigma, g)) = best else {
        return Err(SolverError::Pipeline {
            stage: "find_q_star",
            message: "representation maximizer has infinite penalty".into(),
        });
    };
    Ok(QStarOutcome {
        q_star: best_q,
        gamma: sigma.value,
        saddle_value: g,
        support_gap: sigma.gap,
        note,
    })
}

/// Output of the P* search.
#[derive(Clone, Debug)]
pub struct PStarOutcome {
    pub p_star: DensityVector,
    /// Value of the inner supremum sup {E_P*[k₂ − X] : X ∈ 𝒳^γ}.
    pub inner_sup_value: f64,
    /// |h(P*) − (k₂ − α*)|.
    pub dual_residual: f64,
    /// Certificate gap of the dual test-side program.
    pub gap: f64,
    pub note: Option<String>,
}

/// Finds the least-favorable null P* by minimizing
/// h(P) = sup {E_P[k₂ − X] : X ∈ 𝒳^γ} + ρ₁*(P),
/// whose optimal value is k₂ − α*.
///
/// The candidate is the representation maximizer of ρ₁ at the
/// solution of min ρ₁(X) subject to E_Q*[X] ≥ γ, with the same
/// tied-generator mixture fallback as the Q* search.
pub fn find_p_star(
    spec: &ProblemSpec,
    q_star: &DensityVector,
    gamma: f64,
    alpha_star: f64,
    config: &SolverConfig,
) -> Result<PStarOutcome, SolverError> {
    let (k1, k2) = (spec.k1(), spec.k2());
    let range_tol = 1e-9 * (k2 - k1).max(1.0);
    if gamma < k1 - range_tol || gamma > k2 + range_tol {
        return Err(SolverError::GammaOutOfRange { gamma, k1, k2 });
    }
    let gamma_c = gamma.clamp(k1, k2);

    let a: Vec<f64> = spec
        .space()
        .mu()
        .iter()
        .zip(q_star.values())
        .map(|(m, v)| -(m * v))
        .collect();
    let obj = ConvexFn::from_risk(spec.rho1(), 1.0, 0.0);
    let con = ConvexFn::Affine { a, b: 0.0 };
    let m = match engine::solve_box_min(
        &obj,
        &con,
        -gamma_c,
        k1,
        k2,
        spec.space().n(),
        false,
        &config.engine(),
    ) {
        MinOutcome::Feasible(m) => m,
        MinOutcome::Infeasible => {
            return Err(SolverError::Pipeline {
                stage: "find_p_star",
                message: format!(
                    "E_Q*[X] >= {gamma_c} is infeasible over the box, but X = k2 attains E = k2"
                ),
            });
        }
    };
    let base = spec.rho1().representation_maximizer(&m.x);
    let target = k2 - alpha_star;

    let assess = |p: &DensityVector| -> Result<Option<(f64, f64)>, SolverError> {
        let pen = match spec.rho1().penalty(p)? {
            ExtendedReal::Finite(v) => v,
            _ => return Ok(None),
        };
        let inner = inner_sup_box_linear(p, q_star, k2 - gamma_c, 0.0, k2 - k1)?;
        Ok(Some((inner.value, inner.value + pen)))
    };

    let mut note = None;
    let (mut best_p, mut best) = (base.clone(), assess(&base)?);
    let mut best_resid = match &best {
        Some((_, h)) => (h - target).abs(),
        None => f64::INFINITY,
    };

    if best_resid > config.certificate_tol() {
        if let Some(members) = tied_members(spec.rho1(), &m.x) {
            if members.len() >= 2 {
                let mixed = mixture_search(&members, |p| {
                    match assess(p) {
                        Ok(Some((_, h))) => (h - target).abs(),
                        _ => f64::INFINITY,
                    }
                })?;
                if let Some(p) = mixed {
                    let cand = assess(&p)?;
                    if let Some((_, h)) = &cand {
                        let resid = (h - target).abs();
                        if resid < best_resid {
                            best_p = p;
                            best = cand;
                            best_resid = resid;
                            note = Some(format!(
                                "p* candidate taken from a mixture of {} tied generators",
                                members.len()
                            ));
                        }
                    }
                }
            }
        }
    }

    let Some((inner_value, _)) = best else {
        return Err(SolverError::Pipeline {
            stage: "find_p_star",
            message: "representation maximizer has infinite penalty".into(),
        });
    };
    Ok(PStarOutcome {
        p_star: best_p,
        inner_sup_value: inner_value,
        dual_residual: best_resid,
        gap: m.gap(),
        note,
    })
}

/// The generators of a polyhedral expectation whose representation
/// rows are tied (within `TIE_TOL`, relatively) at `x`; `None` for the
/// smooth variants.
fn tied_members(rho: &ConvexExpectation, x: &[f64]) -> Option<Vec<DensityVector>> {
    let mu = rho.space().mu();
    let scored: Vec<(DensityVector, f64)> = match rho {
        ConvexExpectation::WorstCase(family) => family
            .iter()
            .map(|q| (q.clone(), expectation_slices(mu, q.values(), x)))
            .collect(),
        ConvexExpectation::FinitelyGenerated(gens) => gens
            .iter()
            .map(|(q, c)| (q.clone(), expectation_slices(mu, q.values(), x) - c))
            .collect(),
        _ => return None,
    };
    let max = scored
        .iter()
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let band = TIE_TOL * max.abs().max(1.0);
    Some(
        scored
            .into_iter()
            .filter(|(_, v)| *v >= max - band)
            .map(|(q, _)| q)
            .collect(),
    )
}

/// Golden-section search over mixtures of up to three tied generator
/// densities, minimizing `score`. Returns the best mixture found.
fn mixture_search(
    members: &[DensityVector],
    score: impl Fn(&DensityVector) -> f64,
) -> Result<Option<DensityVector>, SolverError> {
    let take = members.len().min(3);
    let dims = take - 1;
    if dims == 0 {
        return Ok(None);
    }
    let space = members[0].space().clone();
    let n = space.n();
    let mix = |u: &[f64]| -> DensityVector {
        let theta = engine::stick_weights(u);
        let mut values = vec![0.0; n];
        for (w, q) in theta.iter().zip(&members[..take]) {
            for (acc, v) in values.iter_mut().zip(q.values()) {
                *acc += w * v;
            }
        }
        DensityVector::new(space.clone(), values).expect("mixture of densities is a density")
    };
    let (u, _) = engine::nested_box_min(&|u: &[f64]| score(&mix(u)), 0.0, 1.0, dims, MIXTURE_ITERS);
    Ok(Some(mix(&u)))
}

/// Value and maximizer of the knapsack-style inner supremum
/// sup {E_P[W] : lo ≤ W ≤ hi, E_Q[W] ≤ bound} over atom values `W`.
#[derive(Clone, Debug)]
pub struct InnerSup {
    pub value: f64,
    pub maximizer: Vec<f64>,
}

/// Solves the inner supremum exactly by the greedy exchange argument.
/// A negative `bound` is treated as zero budget, returning W ≡ lo.
pub fn inner_sup_box_linear(
    p: &DensityVector,
    q: &DensityVector,
    bound: f64,
    lo: f64,
    hi: f64,
) -> Result<InnerSup, SolverError> {
    p.space().check_same(q.space())?;
    let mu = p.space().mu();
    let c: Vec<f64> = mu.iter().zip(p.values()).map(|(m, v)| -(m * v)).collect();
    let a: Vec<f64> = mu.iter().zip(q.values()).map(|(m, v)| m * v).collect();
    let budget = bound.max(lo * a.iter().sum::<f64>());
    match engine::lp_single_constraint_box(&c, &a, budget, lo, hi) {
        Some((w, neg_value)) => Ok(InnerSup {
            value: -neg_value,
            maximizer: w,
        }),
        None => Ok(InnerSup {
            value: lo * mu.iter().zip(p.values()).map(|(m, v)| m * v).sum::<f64>(),
            maximizer: vec![lo; mu.len()],
        }),
    }
}

/// The constructed randomized threshold test.
#[derive(Clone, Debug)]
pub struct ThresholdTest {
    pub z: f64,
    /// B value per atom of the equality event {z·H = G}.
    pub boundary_randomization: BTreeMap<usize, f64>,
    pub x_star: TestFunction,
}

/// Builds the randomized threshold test matching the budget
/// E_Q*[X*] = γ.
///
/// Candidate thresholds are the likelihood ratios Gᵢ/Hᵢ (plus zero);
/// each candidate z brackets the budgets [F_lower(z), F_upper(z)]
/// reachable by varying the value B on the equality event. The
/// largest bracketing candidate is selected, so the equality event
/// sits as high in the likelihood-ratio order as possible, and B is
/// solved from the budget and snapped to k₁ or k₂ within τ_eq.
pub fn construct_threshold_test(
    p_star: &DensityVector,
    q_star: &DensityVector,
    gamma: f64,
    k1: f64,
    k2: f64,
    config: &SolverConfig,
) -> Result<ThresholdTest, SolverError> {
    p_star.space().check_same(q_star.space())?;
    let range_tol = 1e-9 * (k2 - k1).max(1.0);
    if gamma < k1 - range_tol || gamma > k2 + range_tol {
        return Err(SolverError::GammaOutOfRange { gamma, k1, k2 });
    }
    let gamma_c = gamma.clamp(k1, k2);

    let space = p_star.space();
    let g = p_star.values();
    let h = q_star.values();
    let qm: Vec<f64> = space.mu().iter().zip(h).map(|(m, v)| m * v).collect();

    let mut candidates = vec![0.0];
    for i in 0..h.len() {
        if h[i] > 0.0 {
            candidates.push(g[i] / h[i]);
        }
    }
    candidates.sort_by(|x, y| x.partial_cmp(y).expect("ratios are finite"));
    candidates.dedup();

    let width = k2 - k1;
    let eps = config.tau_eq * width;
    let mut chosen: Option<(f64, f64, f64)> = None;
    for &z in &candidates {
        let mut mass_lt = 0.0;
        let mut mass_eq = 0.0;
        for i in 0..h.len() {
            if h[i] > 0.0 {
                let r = g[i] / h[i];
                if r < z {
                    mass_lt += qm[i];
                } else if r == z {
                    mass_eq += qm[i];
                }
            }
        }
        let f_lower = k1 + width * mass_lt;
        let f_upper = f_lower + width * mass_eq;
        if f_lower <= gamma_c + eps && gamma_c <= f_upper + eps {
            chosen = Some((z, f_lower, mass_eq));
        }
    }
    let Some((z, f_lower, mass_eq)) = chosen else {
        return Err(SolverError::Pipeline {
            stage: "construct_threshold_test",
            message: format!(
                "no threshold candidate brackets gamma = {gamma_c}; the candidate budgets should cover [{k1}, {k2}]"
            ),
        });
    };

    let mut b = if mass_eq > 0.0 {
        (k1 + (gamma_c - f_lower) / mass_eq).clamp(k1, k2)
    } else {
        k1
    };
    if (b - k1).abs() <= config.tau_eq * width {
        b = k1;
    } else if (b - k2).abs() <= config.tau_eq * width {
        b = k2;
    }

    let mut values = vec![0.0; h.len()];
    let mut boundary = BTreeMap::new();
    for i in 0..h.len() {
        if h[i] > 0.0 {
            let r = g[i] / h[i];
            values[i] = if r < z {
                k2
            } else if r == z {
                boundary.insert(i, b);
                b
            } else {
                k1
            };
        } else if g[i] > 0.0 {
            values[i] = k1;
        } else {
            boundary.insert(i, b);
            values[i] = b;
        }
    }

    Ok(ThresholdTest {
        z,
        boundary_randomization: boundary,
        x_star: TestFunction::new(space.clone(), values, k1, k2)?,
    })
}

/// Which side of the threshold an atom falls on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdClass {
    Greater,
    Equal,
    Less,
}

/// Per-atom threshold-form check.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdAtomCheck {
    pub index: usize,
    pub class: ThresholdClass,
    pub value: f64,
    pub residual: f64,
}

/// Result of checking a test against the threshold form at (z, P*, Q*).
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdReport {
    pub atoms: Vec<ThresholdAtomCheck>,
    pub max_residual: f64,
    /// Absolute residual tolerance the check was run at.
    pub tolerance: f64,
    pub pass: bool,
}

impl ThresholdReport {
    pub fn failing_atoms(&self) -> Vec<usize> {
        let tol = self.tolerance;
        self.atoms
            .iter()
            .filter(|a| a.residual > tol)
            .map(|a| a.index)
            .collect()
    }
}

/// Verifies that a test has the threshold form: X = k₂ where
/// z·H > G, X = k₁ where z·H < G, and anything in the box on the
/// equality event. Residuals are measured against τ_eq·(k₂ − k₁).
pub fn verify_threshold_form(
    x: &TestFunction,
    p_star: &DensityVector,
    q_star: &DensityVector,
    z: f64,
    k1: f64,
    k2: f64,
    config: &SolverConfig,
) -> Result<ThresholdReport, SolverError> {
    x.space().check_same(p_star.space())?;
    let partition = likelihood_ratio_partition(p_star, q_star, z, config.tau_eq)?;
    let tol = config.tau_eq * (k2 - k1).max(1.0);
    let mut atoms = Vec::with_capacity(x.values().len());
    for (&i, class, target) in partition
        .greater
        .iter()
        .map(|i| (i, ThresholdClass::Greater, Some(k2)))
        .chain(
            partition
                .less
                .iter()
                .map(|i| (i, ThresholdClass::Less, Some(k1))),
        )
        .chain(
            partition
                .equal
                .iter()
                .map(|i| (i, ThresholdClass::Equal, None)),
        )
    {
        let value = x.values()[i];
        let residual = match target {
            Some(t) => (value - t).abs(),
            None => 0.0,
        };
        atoms.push(ThresholdAtomCheck {
            index: i,
            class,
            value,
            residual,
        });
    }
    atoms.sort_by_key(|a| a.index);
    let max_residual = atoms.iter().map(|a| a.residual).fold(0.0, f64::max);
    Ok(ThresholdReport {
        pass: max_residual <= tol,
        tolerance: tol,
        atoms,
        max_residual,
    })
}
