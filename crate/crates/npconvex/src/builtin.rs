//! Built-in example problems.
//!
//! Constants involving e are generated in code at full double
//! precision; documents produced from these instances never contain
//! hand-typed decimal approximations.

use std::f64::consts::E;

use crate::risk::ConvexExpectation;
use crate::solver::ProblemSpec;
use crate::space::{DensityVector, FiniteProbSpace};

/// A named example with a human-readable description.
#[derive(Clone, Debug)]
pub struct BuiltinExample {
    pub name: &'static str,
    pub comment: &'static str,
    pub spec: ProblemSpec,
}

/// Names accepted by [`example`], in presentation order.
pub const NAMES: [&str; 6] = ["ex21", "ex31", "ex32", "ex33", "ex41", "ex41_fine"];

/// Looks up a built-in instance. Returns `None` for unknown names;
/// the caller renders the valid list from [`NAMES`].
pub fn example(name: &str) -> Option<BuiltinExample> {
    let builder = match name {
        "ex21" => ex21,
        "ex31" => ex31,
        "ex32" => ex32,
        "ex33" => ex33,
        "ex41" => ex41,
        "ex41_fine" => ex41_fine,
        _ => return None,
    };
    Some(builder())
}

fn half_half() -> FiniteProbSpace {
    FiniteProbSpace::from_weights(vec![0.5, 0.5]).expect("two fair atoms")
}

fn dens(space: &FiniteProbSpace, values: Vec<f64>) -> DensityVector {
    DensityVector::new(space.clone(), values).expect("builtin density")
}

/// Point-mass hypotheses: the null sits on atom 0, the alternative on
/// atom 1. Every level α > 0 admits the perfect test I_{1}, and the
/// attained significance is exactly 0.
pub fn ex21() -> BuiltinExample {
    let space = half_half();
    let rho1 = ConvexExpectation::linear(dens(&space, vec![2.0, 0.0]));
    let rho2 = ConvexExpectation::linear(dens(&space, vec![0.0, 2.0]));
    BuiltinExample {
        name: "ex21",
        comment: "Point-mass pair: null on atom 0, alternative on atom 1; the indicator \
                  of atom 1 tests perfectly and the refined level alpha* is 0.",
        spec: ProblemSpec::new(space, rho1, rho2, 0.0, 1.0, 0.3).expect("builtin spec"),
    }
}

/// Linear null at level 1/2 against an entropic alternative whose
/// reference density is (1.5, 0.5).
pub fn ex31() -> BuiltinExample {
    let space = half_half();
    let rho1 = ConvexExpectation::linear(dens(&space, vec![1.0, 1.0]));
    let rho2 = ConvexExpectation::entropic(dens(&space, vec![1.5, 0.5]));
    BuiltinExample {
        name: "ex31",
        comment: "Mean constraint under the base measure at level 1/2 against an \
                  entropic alternative with reference density (1.5, 0.5).",
        spec: ProblemSpec::new(space, rho1, rho2, 0.0, 1.0, 0.5).expect("builtin spec"),
    }
}

/// Entropic null with reference density (0.5, 1.5) against the linear
/// alternative in the base measure, at level ln(e+3) − 2·ln 2.
pub fn ex32() -> BuiltinExample {
    let space = half_half();
    let rho1 = ConvexExpectation::entropic(dens(&space, vec![0.5, 1.5]));
    let rho2 = ConvexExpectation::linear(dens(&space, vec![1.0, 1.0]));
    BuiltinExample {
        name: "ex32",
        comment: "Entropic null with reference density (0.5, 1.5) against the linear \
                  alternative in the base measure; the optimal power deficit is 1/2.",
        spec: ProblemSpec::new(space, rho1, rho2, 0.0, 1.0, ((3.0 + E) / 4.0).ln())
            .expect("builtin spec"),
    }
}

/// Entropic null and entropic alternative; the optimal test is the
/// likelihood-ratio threshold at z = 3/e for the least favorable pair.
pub fn ex33() -> BuiltinExample {
    let space = half_half();
    let rho1 = ConvexExpectation::entropic(dens(&space, vec![0.5, 1.5]));
    let rho2 = ConvexExpectation::entropic(dens(&space, vec![1.5, 0.5]));
    BuiltinExample {
        name: "ex33",
        comment: "Entropic against entropic; the least favorable pair reuses the \
                  single-sided solutions and the threshold lands at z = 3/e.",
        spec: ProblemSpec::new(space, rho1, rho2, 0.0, 1.0, ((3.0 + E) / 4.0).ln())
            .expect("builtin spec"),
    }
}

fn ex41_pieces() -> (f64, f64, f64, f64) {
    let b = (E - 2.0) / (E - 1.0);
    let g_low = (E + 1.0) / (E - 1.0);
    let g_high = (3.0 - E) / (E - 1.0);
    let alpha = (3.0 - E) / ((E - 1.0) * (E - 1.0));
    (b, g_low, g_high, alpha)
}

/// Two-atom reduction of a piecewise-constant model on the unit
/// interval: the null density takes the value (e+1)/(e−1) on a piece
/// of mass (e−2)/(e−1) and (3−e)/(e−1) on the complementary piece of
/// mass 1/(e−1); the alternative is entropic with the base measure as
/// reference. The level makes the constraint active exactly at the
/// indicator of the second piece, so β = ln(e−1).
pub fn ex41() -> BuiltinExample {
    let (b, g_low, g_high, alpha) = ex41_pieces();
    let space = FiniteProbSpace::from_weights(vec![b, 1.0 - b]).expect("two-piece masses");
    let rho1 = ConvexExpectation::linear(dens(&space, vec![g_low, g_high]));
    let rho2 = ConvexExpectation::entropic(dens(&space, vec![1.0, 1.0]));
    BuiltinExample {
        name: "ex41",
        comment: "Two-atom reduction of a piecewise-constant model: densities constant \
                  on two intervals of mass (e-2)/(e-1) and 1/(e-1) collapse to two \
                  atoms without changing the problem.",
        spec: ProblemSpec::new(space, rho1, rho2, 0.0, 1.0, alpha).expect("builtin spec"),
    }
}

/// A 200-cell refinement of [`ex41`]: 84 equal cells inside the first
/// constant piece and 116 inside the second, so every cell carries one
/// density value. Exercises the solver at a dimension two orders of
/// magnitude above the hand-checked reduction; the value must agree.
pub fn ex41_fine() -> BuiltinExample {
    const LOW_CELLS: usize = 84;
    const HIGH_CELLS: usize = 116;
    let (b, g_low, g_high, alpha) = ex41_pieces();
    let mut weights = Vec::with_capacity(LOW_CELLS + HIGH_CELLS);
    weights.extend(std::iter::repeat_n(b / LOW_CELLS as f64, LOW_CELLS));
    weights.extend(std::iter::repeat_n((1.0 - b) / HIGH_CELLS as f64, HIGH_CELLS));
    // remove accumulated rounding so the weights sum to 1 exactly
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    let space = FiniteProbSpace::from_weights(weights).expect("refined masses");
    let mut g = Vec::with_capacity(LOW_CELLS + HIGH_CELLS);
    g.extend(std::iter::repeat_n(g_low, LOW_CELLS));
    g.extend(std::iter::repeat_n(g_high, HIGH_CELLS));
    let rho1 = ConvexExpectation::linear(dens(&space, g));
    let rho2 = ConvexExpectation::entropic(dens(&space, vec![1.0; LOW_CELLS + HIGH_CELLS]));
    BuiltinExample {
        name: "ex41_fine",
        comment: "200-cell refinement of ex41, split 84 + 116 so each cell lies inside \
                  one constant piece; the solve must reproduce the two-atom value.",
        spec: ProblemSpec::new(space, rho1, rho2, 0.0, 1.0, alpha).expect("builtin spec"),
    }
}
