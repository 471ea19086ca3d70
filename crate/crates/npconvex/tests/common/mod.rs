//! Shared helpers for the integration suites: seeded random problem
//! instances over two or three atoms.

use npconvex::risk::ConvexExpectation;
use npconvex::solver::ProblemSpec;
use npconvex::space::{DensityVector, FiniteProbSpace, RandomVariable};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_space(rng: &mut ChaCha8Rng, n: usize) -> FiniteProbSpace {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    FiniteProbSpace::from_weights(raw.into_iter().map(|w| w / sum).collect()).unwrap()
}

pub fn random_density(rng: &mut ChaCha8Rng, space: &FiniteProbSpace) -> DensityVector {
    let raw: Vec<f64> = (0..space.n()).map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    DensityVector::from_probabilities(space.clone(), raw.into_iter().map(|p| p / sum).collect())
        .unwrap()
}

/// Draws an entropic or finitely generated expectation, the two
/// variants whose penalties exercise both the smooth and the
/// polyhedral saddle paths.
pub fn random_rho(rng: &mut ChaCha8Rng, space: &FiniteProbSpace) -> ConvexExpectation {
    if rng.random_bool(0.5) {
        ConvexExpectation::entropic(random_density(rng, space))
    } else {
        let count = rng.random_range(2..=3);
        let mut generators = Vec::with_capacity(count);
        for index in 0..count {
            let c = if index == 0 {
                0.0
            } else {
                rng.random_range(0.0..0.4)
            };
            generators.push((random_density(rng, space), c));
        }
        ConvexExpectation::finitely_generated(generators).unwrap()
    }
}

/// A feasible random instance on the unit box: the level is the null
/// expectation of a random test, so it always lies between ρ₁(k₁·1)
/// and ρ₁(k₂·1).
pub fn random_instance(rng: &mut ChaCha8Rng) -> ProblemSpec {
    let n = if rng.random_bool(0.5) { 2 } else { 3 };
    let space = random_space(rng, n);
    let rho1 = random_rho(rng, &space);
    let rho2 = random_rho(rng, &space);
    let probe: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let x = RandomVariable::new(space.clone(), probe).unwrap();
    let alpha = rho1.evaluate(&x).unwrap();
    ProblemSpec::new(space, rho1, rho2, 0.0, 1.0, alpha).unwrap()
}
