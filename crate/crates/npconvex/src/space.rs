//! Finite probability spaces, densities, expectations, divergences, and
//! extended-real arithmetic.
//!
//! Everything downstream computes over a fixed finite space `(Ω, 2^Ω, μ)`
//! with strictly positive reference weights, so μ-a.e. statements are
//! pointwise statements. Measures absolutely continuous w.r.t. μ are
//! carried as Radon-Nikodym derivatives (`DensityVector`), matching the
//! `G_P = dP/dμ`, `H_Q = dQ/dμ` convention used throughout the solver.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Absolute tolerance for `Σ μᵢ = 1` at space construction.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Absolute tolerance for `E_μ[density] = 1` at density construction.
pub const DENSITY_NORM_TOL: f64 = 1e-10;
/// Default equality tolerance for the boundary event `{zH = G}`,
/// applied after normalizing by `max(|z·h|, |g|, 1)` per atom.
pub const DEFAULT_TAU_EQ: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("space must have at least one atom")]
    Empty,
    #[error("atom {index} has non-positive weight {weight}; zero-weight atoms are rejected at construction")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("weights sum to {sum}, expected 1 within {tol}")]
    WeightSum { sum: f64, tol: f64 },
    #[error("labels ({labels}) and weights ({weights}) have different lengths")]
    LabelMismatch { labels: usize, weights: usize },
    #[error("value at atom {index} is {value}, expected a finite number")]
    NonFinite { index: usize, value: f64 },
    #[error("density value at atom {index} is {value}, expected ≥ 0")]
    NegativeDensity { index: usize, value: f64 },
    #[error("density integrates to {integral} against μ, expected 1 within {tol}")]
    DensityNorm { integral: f64, tol: f64 },
    #[error("operands live on different spaces ({left} vs {right} atoms or unequal weights)")]
    DimensionMismatch { left: usize, right: usize },
}

#[derive(Debug)]
struct SpaceInner {
    labels: Vec<String>,
    mu: Vec<f64>,
}

/// A finite probability space: atom labels plus strictly positive
/// reference weights summing to one.
#[derive(Clone, Debug)]
pub struct FiniteProbSpace {
    inner: Arc<SpaceInner>,
}

impl FiniteProbSpace {
    pub fn new(labels: Vec<String>, mu: Vec<f64>) -> Result<Self, SpaceError> {
        if labels.len() != mu.len() {
            return Err(SpaceError::LabelMismatch {
                labels: labels.len(),
                weights: mu.len(),
            });
        }
        if mu.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (index, &weight) in mu.iter().enumerate() {
            if !weight.is_finite() || weight <= 0.0 {
                return Err(SpaceError::NonPositiveWeight { index, weight });
            }
        }
        let sum: f64 = mu.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(SpaceError::WeightSum {
                sum,
                tol: WEIGHT_SUM_TOL,
            });
        }
        Ok(Self {
            inner: Arc::new(SpaceInner { labels, mu }),
        })
    }

    /// Convenience constructor labeling atoms `"0", "1", …`.
    pub fn from_weights(mu: Vec<f64>) -> Result<Self, SpaceError> {
        let labels = (0..mu.len()).map(|i| i.to_string()).collect();
        Self::new(labels, mu)
    }

    pub fn n(&self) -> usize {
        self.inner.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.inner.mu
    }

    pub fn labels(&self) -> &[String] {
        &self.inner.labels
    }

    /// Two spaces are interchangeable when the weights agree exactly;
    /// labels are opaque identifiers and do not affect computation.
    pub fn same_space(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.mu == other.inner.mu
    }

    pub(crate) fn check_same(&self, other: &Self) -> Result<(), SpaceError> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(SpaceError::DimensionMismatch {
                left: self.n(),
                right: other.n(),
            })
        }
    }
}

impl PartialEq for FiniteProbSpace {
    fn eq(&self, other: &Self) -> bool {
        self.same_space(other)
    }
}

/// A Radon-Nikodym derivative dP/dμ: nonnegative atom values with
/// `E_μ[values] = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityVector {
    space: FiniteProbSpace,
    values: Vec<f64>,
}

impl DensityVector {
    pub fn new(space: FiniteProbSpace, values: Vec<f64>) -> Result<Self, SpaceError> {
        if values.len() != space.n() {
            return Err(SpaceError::DimensionMismatch {
                left: space.n(),
                right: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(SpaceError::NonFinite { index, value });
            }
            if value < 0.0 {
                return Err(SpaceError::NegativeDensity { index, value });
            }
        }
        let integral: f64 = values
            .iter()
            .zip(space.mu())
            .map(|(v, w)| v * w)
            .sum();
        if (integral - 1.0).abs() > DENSITY_NORM_TOL {
            return Err(SpaceError::DensityNorm {
                integral,
                tol: DENSITY_NORM_TOL,
            });
        }
        Ok(Self { space, values })
    }

    /// Builds the density from atom probabilities `P({ωᵢ})` by dividing
    /// out the μ weights.
    pub fn from_probabilities(space: FiniteProbSpace, probs: Vec<f64>) -> Result<Self, SpaceError> {
        if probs.len() != space.n() {
            return Err(SpaceError::DimensionMismatch {
                left: space.n(),
                right: probs.len(),
            });
        }
        let values = probs
            .iter()
            .zip(space.mu())
            .map(|(p, w)| p / w)
            .collect();
        Self::new(space, values)
    }

    pub fn space(&self) -> &FiniteProbSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Atom probabilities `μᵢ·Gᵢ` of the measure this density represents.
    pub fn probabilities(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.space.mu())
            .map(|(v, w)| v * w)
            .collect()
    }
}

/// A bounded random variable on the space: finite atom values.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomVariable {
    space: FiniteProbSpace,
    values: Vec<f64>,
}

impl RandomVariable {
    pub fn new(space: FiniteProbSpace, values: Vec<f64>) -> Result<Self, SpaceError> {
        if values.len() != space.n() {
            return Err(SpaceError::DimensionMismatch {
                left: space.n(),
                right: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(SpaceError::NonFinite { index, value });
            }
        }
        Ok(Self { space, values })
    }

    pub fn constant(space: FiniteProbSpace, c: f64) -> Result<Self, SpaceError> {
        let n = space.n();
        Self::new(space, vec![c; n])
    }

    pub fn space(&self) -> &FiniteProbSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A penalty-function value: finite or `+∞`. Negative infinity never
/// occurs because every penalty is bounded below by `−ρ(0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    /// The finite value, or `None` for `+∞`.
    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(*v),
            ExtendedReal::PosInf => None,
        }
    }

    /// Collapses to `f64` with `+∞` mapped to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        match self {
            ExtendedReal::Finite(v) => *v,
            ExtendedReal::PosInf => f64::INFINITY,
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PosInf => write!(f, "+inf"),
        }
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

/// `E_P[X] = Σᵢ μᵢ·G_{P,i}·xᵢ`, the linear functional every stage of the
/// pipeline is built from.
pub fn expectation(density: &DensityVector, x: &RandomVariable) -> Result<f64, SpaceError> {
    density.space().check_same(x.space())?;
    Ok(expectation_slices(
        density.space().mu(),
        density.values(),
        x.values(),
    ))
}

/// Slice-level expectation for internal hot paths; callers guarantee
/// equal lengths.
pub(crate) fn expectation_slices(mu: &[f64], density: &[f64], x: &[f64]) -> f64 {
    mu.iter()
        .zip(density)
        .zip(x)
        .map(|((w, g), v)| w * g * v)
        .sum()
}

/// Relative entropy of Q w.r.t. Q₀:
///
/// ```text
/// KL(Q ‖ Q₀) = Σᵢ μᵢ·q₀ᵢ·(qᵢ/q₀ᵢ)·ln(qᵢ/q₀ᵢ)
/// ```
///
/// with the conventions `0·ln 0 = 0` and `+∞` when `qᵢ > 0` on a
/// `q₀`-null atom (Q is not absolutely continuous w.r.t. Q₀ there).
pub fn kl_divergence(q: &DensityVector, q0: &DensityVector) -> Result<ExtendedReal, SpaceError> {
    q.space().check_same(q0.space())?;
    Ok(kl_divergence_slices(
        q.space().mu(),
        q.values(),
        q0.values(),
    ))
}

pub(crate) fn kl_divergence_slices(mu: &[f64], q: &[f64], q0: &[f64]) -> ExtendedReal {
    let mut total = 0.0;
    for i in 0..mu.len() {
        if q[i] == 0.0 {
            continue; // 0·ln 0 = 0
        }
        if q0[i] == 0.0 {
            return ExtendedReal::PosInf;
        }
        // μᵢ·q₀ᵢ·(qᵢ/q₀ᵢ)·ln(qᵢ/q₀ᵢ) = μᵢ·qᵢ·ln(qᵢ/q₀ᵢ)
        total += mu[i] * q[i] * (q[i] / q0[i]).ln();
    }
    ExtendedReal::Finite(total)
}

/// The three events of the randomized threshold test, as atom index sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LikelihoodRatioPartition {
    pub greater: Vec<usize>,
    pub equal: Vec<usize>,
    pub less: Vec<usize>,
}

/// Assigns atom `i` to `greater`/`equal`/`less` according to the sign of
/// `z·hᵢ − gᵢ`, with the equality band `|z·hᵢ − gᵢ| ≤ τ_eq·max(|z·hᵢ|, |gᵢ|, 1)`.
///
/// Exact equality is a measure-zero event in theory; floating point
/// requires the band.
pub fn likelihood_ratio_partition(
    g: &DensityVector,
    h: &DensityVector,
    z: f64,
    tau_eq: f64,
) -> Result<LikelihoodRatioPartition, SpaceError> {
    g.space().check_same(h.space())?;
    Ok(partition_slices(g.values(), h.values(), z, tau_eq))
}

pub(crate) fn partition_slices(
    g: &[f64],
    h: &[f64],
    z: f64,
    tau_eq: f64,
) -> LikelihoodRatioPartition {
    let mut partition = LikelihoodRatioPartition {
        greater: Vec::new(),
        equal: Vec::new(),
        less: Vec::new(),
    };
    for i in 0..g.len() {
        let zh = z * h[i];
        let diff = zh - g[i];
        let scale = zh.abs().max(g[i].abs()).max(1.0);
        if diff.abs() <= tau_eq * scale {
            partition.equal.push(i);
        } else if diff > 0.0 {
            partition.greater.push(i);
        } else {
            partition.less.push(i);
        }
    }
    partition
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn space_half_half() -> FiniteProbSpace {
        FiniteProbSpace::from_weights(vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn construction_rejects_bad_spaces() {
        assert!(matches!(
            FiniteProbSpace::from_weights(vec![]),
            Err(SpaceError::Empty)
        ));
        assert!(matches!(
            FiniteProbSpace::from_weights(vec![0.5, 0.0, 0.5]),
            Err(SpaceError::NonPositiveWeight { index: 1, .. })
        ));
        assert!(matches!(
            FiniteProbSpace::from_weights(vec![0.5, 0.6]),
            Err(SpaceError::WeightSum { .. })
        ));
    }

    #[test]
    fn construction_rejects_bad_densities() {
        let space = space_half_half();
        assert!(matches!(
            DensityVector::new(space.clone(), vec![-0.1, 2.1]),
            Err(SpaceError::NegativeDensity { index: 0, .. })
        ));
        assert!(matches!(
            DensityVector::new(space.clone(), vec![1.0, 1.5]),
            Err(SpaceError::DensityNorm { .. })
        ));
        assert!(DensityVector::new(space, vec![2.0, 0.0]).is_ok());
    }

    #[test]
    fn expectation_reference_measure_is_plain_mean() {
        let space = space_half_half();
        let d = DensityVector::new(space.clone(), vec![1.0, 1.0]).unwrap();
        let x = RandomVariable::new(space, vec![3.0, 5.0]).unwrap();
        assert_eq!(expectation(&d, &x).unwrap(), 4.0);
    }

    #[test]
    fn expectation_point_mass_picks_the_atom() {
        let space = space_half_half();
        let d = DensityVector::new(space.clone(), vec![2.0, 0.0]).unwrap();
        let x = RandomVariable::new(space, vec![3.0, 5.0]).unwrap();
        assert_eq!(expectation(&d, &x).unwrap(), 3.0);
    }

    #[test]
    fn expectation_least_favorable_q_density() {
        // E_{Q*}[I_{0}] for the density (2·3/(e+3), 2·e/(e+3)) equals
        // Q*({0}) = 3/(e+3) ≈ 0.524633.
        let space = space_half_half();
        let d = DensityVector::new(
            space.clone(),
            vec![2.0 * 3.0 / (E + 3.0), 2.0 * E / (E + 3.0)],
        )
        .unwrap();
        let x = RandomVariable::new(space, vec![1.0, 0.0]).unwrap();
        let got = expectation(&d, &x).unwrap();
        assert!((got - 3.0 / (E + 3.0)).abs() < 1e-15);
        assert!((got - 0.5246331135813284).abs() < 1e-15);
    }

    #[test]
    fn expectation_dimension_error() {
        let space2 = space_half_half();
        let space3 = FiniteProbSpace::from_weights(vec![0.2, 0.3, 0.5]).unwrap();
        let d = DensityVector::new(space2, vec![1.0, 1.0]).unwrap();
        let x = RandomVariable::new(space3, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            expectation(&d, &x),
            Err(SpaceError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kl_identity_is_zero() {
        let space = space_half_half();
        let q = DensityVector::new(space, vec![1.5, 0.5]).unwrap();
        assert_eq!(kl_divergence(&q, &q).unwrap(), ExtendedReal::Finite(0.0));
    }

    #[test]
    fn kl_matches_binary_entropy_formula() {
        // KL((2q, 2(1−q)) ‖ (3/2, 1/2)) on μ = (1/2, 1/2) equals
        // q ln q + (1−q) ln(1−q) − q ln 3 + 2 ln 2 at q = 3/(e+3).
        let space = space_half_half();
        let q = 3.0 / (E + 3.0);
        let qd = DensityVector::new(space.clone(), vec![2.0 * q, 2.0 * (1.0 - q)]).unwrap();
        let q0 = DensityVector::new(space, vec![1.5, 0.5]).unwrap();
        let expected =
            q * q.ln() + (1.0 - q) * (1.0 - q).ln() - q * 3f64.ln() + 2.0 * 2f64.ln();
        let got = kl_divergence(&qd, &q0).unwrap().finite().unwrap();
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn kl_two_atom_reduction_value() {
        // The two-interval piecewise-constant instance collapses to atoms
        // of mass (e−2)/(e−1) and 1/(e−1); KL of (e/(e−1), 1/(e−1))
        // against the unit density is (e²−2e)/(e−1)² − ln(e−1) ≈ 0.119978.
        let b = (E - 2.0) / (E - 1.0);
        let space = FiniteProbSpace::from_weights(vec![b, 1.0 - b]).unwrap();
        let q = DensityVector::new(space.clone(), vec![E / (E - 1.0), 1.0 / (E - 1.0)]).unwrap();
        let q0 = DensityVector::new(space, vec![1.0, 1.0]).unwrap();
        let expected = (E * E - 2.0 * E) / ((E - 1.0) * (E - 1.0)) - (E - 1.0).ln();
        let got = kl_divergence(&q, &q0).unwrap().finite().unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((got - 0.11997825804861606).abs() < 1e-12);
    }

    #[test]
    fn kl_infinite_off_support() {
        let space = space_half_half();
        let q = DensityVector::new(space.clone(), vec![1.0, 1.0]).unwrap();
        let q0 = DensityVector::new(space, vec![2.0, 0.0]).unwrap();
        assert_eq!(kl_divergence(&q, &q0).unwrap(), ExtendedReal::PosInf);
        // The reverse direction is finite: q vanishes where q0 does not.
        assert!(kl_divergence(&q0, &q).unwrap().is_finite());
    }

    #[test]
    fn partition_z_zero_all_less_for_positive_g() {
        let space = space_half_half();
        let g = DensityVector::new(space.clone(), vec![1.2, 0.8]).unwrap();
        let h = DensityVector::new(space, vec![0.4, 1.6]).unwrap();
        let p = likelihood_ratio_partition(&g, &h, 0.0, DEFAULT_TAU_EQ).unwrap();
        assert_eq!(p.less, vec![0, 1]);
        assert!(p.greater.is_empty() && p.equal.is_empty());
    }

    #[test]
    fn partition_equal_densities_at_unit_threshold() {
        let space = space_half_half();
        let g = DensityVector::new(space.clone(), vec![1.5, 0.5]).unwrap();
        let p = likelihood_ratio_partition(&g, &g, 1.0, DEFAULT_TAU_EQ).unwrap();
        assert_eq!(p.equal, vec![0, 1]);
    }

    #[test]
    fn partition_invariant_under_joint_positive_scaling() {
        // Only the ratios g/h matter: scaling both slices by the same
        // positive constant must not move any atom between events.
        // Includes an exact tie (atom 2), which stays in the band at
        // every scale because its difference is identically zero.
        let z = 1.3;
        let g = [1.2, 0.8, 1.3 * 0.6, 0.02];
        let h = [0.4, 1.6, 0.6, 0.9];
        let base = partition_slices(&g, &h, z, DEFAULT_TAU_EQ);
        assert_eq!(base.equal, vec![2]);
        for c in [1e-3, 0.25, 4.0, 1e3] {
            let gc: Vec<f64> = g.iter().map(|v| c * v).collect();
            let hc: Vec<f64> = h.iter().map(|v| c * v).collect();
            let scaled = partition_slices(&gc, &hc, z, DEFAULT_TAU_EQ);
            assert_eq!(scaled.greater, base.greater, "greater at c = {c}");
            assert_eq!(scaled.equal, base.equal, "equal at c = {c}");
            assert_eq!(scaled.less, base.less, "less at c = {c}");
        }
    }

    #[test]
    fn partition_least_favorable_pair_thresholds() {
        // G = (2e/(e+3), 6/(e+3)), H = (6/(e+3), 2e/(e+3)).
        // At z = 3/e exactly, z·h₁ = (3/e)(2e/(e+3)) = 6/(e+3) = g₁, so
        // atom 1 sits in the equality band; atom 0 has z·h₀ > g₀.
        let space = space_half_half();
        let g = DensityVector::new(space.clone(), vec![2.0 * E / (E + 3.0), 6.0 / (E + 3.0)])
            .unwrap();
        let h = DensityVector::new(space, vec![6.0 / (E + 3.0), 2.0 * E / (E + 3.0)]).unwrap();
        let p = likelihood_ratio_partition(&g, &h, 3.0 / E, DEFAULT_TAU_EQ).unwrap();
        assert_eq!(p.greater, vec![0]);
        assert_eq!(p.equal, vec![1]);
        assert!(p.less.is_empty());
        // Strictly inside the candidate interval (e/3, 3/e) atom 1 drops
        // to "less" while atom 0 stays in "greater".
        let g2 = DensityVector::new(
            space_half_half(),
            vec![2.0 * E / (E + 3.0), 6.0 / (E + 3.0)],
        )
        .unwrap();
        let h2 = DensityVector::new(
            space_half_half(),
            vec![6.0 / (E + 3.0), 2.0 * E / (E + 3.0)],
        )
        .unwrap();
        let p2 = likelihood_ratio_partition(&g2, &h2, 3.0 / E - 1e-6, DEFAULT_TAU_EQ).unwrap();
        assert_eq!(p2.greater, vec![0]);
        assert_eq!(p2.less, vec![1]);
        assert!(p2.equal.is_empty());
    }

    #[test]
    fn extended_real_ordering() {
        assert!(ExtendedReal::Finite(3.0) < ExtendedReal::PosInf);
        assert!(ExtendedReal::Finite(-1.0) < ExtendedReal::Finite(0.0));
        assert_eq!(ExtendedReal::PosInf, ExtendedReal::PosInf);
    }
}
