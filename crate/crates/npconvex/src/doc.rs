//! Problem and solution documents: the JSON formats the CLI reads and
//! writes.
//!
//! Documents are plain serde structs with a `format_version` stamp.
//! Measure vectors are written as densities with respect to μ by
//! default; the `density_convention` field records which convention a
//! document uses so files stay self-describing, and probability-space
//! documents convert on load.
//!
//! Every real number in an emitted solution is rounded to 12
//! significant digits first. Parsing the emitted text recovers those
//! rounded doubles exactly, so documents round-trip losslessly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::{ConvexExpectation, RiskError};
use crate::solver::{NpSolution, ProblemSpec, SolverConfig, SolverError, SolutionStatus};
use crate::space::{DensityVector, FiniteProbSpace, SpaceError};

/// Version stamp carried by every document this build writes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocError {
    /// Syntax or type errors; the serde_json display carries the
    /// offending line and column.
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
    #[error("document has format_version {found}; this build reads version {expected}")]
    Version { found: u32, expected: u32 },
}

fn field_err(field: &'static str, message: impl Into<String>) -> DocError {
    DocError::Field {
        field,
        message: message.into(),
    }
}

/// How the measure vectors in a document are expressed.
#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityConvention {
    /// Per-atom values of dP/dμ.
    #[default]
    Densities,
    /// Per-atom probabilities P({ω}).
    Probabilities,
}

/// One sample point: a label and its μ weight.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDocument {
    pub label: String,
    pub mu: f64,
}

/// One generator of a finitely generated variant.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDocument {
    pub density: Vec<f64>,
    pub penalty: f64,
}

/// Declarative form of a convex expectation.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhoDocument {
    Linear { density: Vec<f64> },
    Entropic { reference_density: Vec<f64> },
    WorstCase { family: Vec<Vec<f64>> },
    FinitelyGenerated { generators: Vec<GeneratorDocument> },
}

/// Optional overrides for [`SolverConfig`]; unset fields keep their
/// defaults, and command-line flags take precedence over these.
#[derive(Clone, Debug, Default, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_opt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_feas: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_eq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SolverOverrides {
    pub fn apply(&self, base: SolverConfig) -> SolverConfig {
        SolverConfig {
            tol_opt: self.tol_opt.unwrap_or(base.tol_opt),
            tol_feas: self.tol_feas.unwrap_or(base.tol_feas),
            tau_eq: self.tau_eq.unwrap_or(base.tau_eq),
            seed: self.seed.unwrap_or(base.seed),
            ..base
        }
    }
}

/// A testing problem as a document: atoms, both convex expectations,
/// the box, and the significance level.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub atoms: Vec<AtomDocument>,
    /// States explicitly whether vectors below are dP/dμ values or
    /// probabilities, so weights and densities cannot be confused.
    #[serde(default)]
    pub density_convention: DensityConvention,
    pub rho1: RhoDocument,
    pub rho2: RhoDocument,
    pub k1: f64,
    pub k2: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOverrides>,
}

impl ProblemDocument {
    pub fn from_json_str(text: &str) -> Result<Self, DocError> {
        let doc: ProblemDocument = serde_json::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(DocError::Version {
                found: doc.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(doc)
    }

    pub fn to_json_string(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("document serialization");
        text.push('\n');
        text
    }

    /// Validates the document and builds the solver-side problem plus
    /// the effective solver configuration.
    pub fn to_spec(&self) -> Result<(ProblemSpec, SolverConfig), DocError> {
        if self.atoms.is_empty() {
            return Err(field_err("atoms", "at least one atom is required"));
        }
        let labels: Vec<String> = self.atoms.iter().map(|a| a.label.clone()).collect();
        let weights: Vec<f64> = self.atoms.iter().map(|a| a.mu).collect();
        let space = FiniteProbSpace::new(labels, weights)?;
        let rho1 = build_rho(&space, &self.rho1, self.density_convention, "rho1")?;
        let rho2 = build_rho(&space, &self.rho2, self.density_convention, "rho2")?;
        let spec = ProblemSpec::new(space, rho1, rho2, self.k1, self.k2, self.alpha)?;
        let config = self
            .solver
            .as_ref()
            .map_or_else(SolverConfig::default, |o| o.apply(SolverConfig::default()));
        Ok((spec, config))
    }

    /// Renders a solver-side problem back into a document.
    pub fn from_spec(
        spec: &ProblemSpec,
        convention: DensityConvention,
        comment: Option<String>,
    ) -> Self {
        let space = spec.space();
        let atoms = space
            .labels()
            .iter()
            .zip(space.mu())
            .map(|(label, &mu)| AtomDocument {
                label: label.clone(),
                mu: round_sig(mu),
            })
            .collect();
        ProblemDocument {
            format_version: FORMAT_VERSION,
            comment,
            atoms,
            density_convention: convention,
            rho1: rho_document(spec.rho1(), convention),
            rho2: rho_document(spec.rho2(), convention),
            k1: round_sig(spec.k1()),
            k2: round_sig(spec.k2()),
            alpha: round_sig(spec.alpha()),
            solver: None,
        }
    }
}

fn measure_vector(
    space: &FiniteProbSpace,
    values: &[f64],
    convention: DensityConvention,
    field: &'static str,
) -> Result<DensityVector, DocError> {
    if values.len() != space.n() {
        return Err(field_err(
            field,
            format!(
                "has {} entries but the document declares {} atoms",
                values.len(),
                space.n()
            ),
        ));
    }
    let built = match convention {
        DensityConvention::Densities => DensityVector::new(space.clone(), values.to_vec()),
        DensityConvention::Probabilities => {
            DensityVector::from_probabilities(space.clone(), values.to_vec())
        }
    };
    built.map_err(|e| field_err(field, e.to_string()))
}

fn build_rho(
    space: &FiniteProbSpace,
    doc: &RhoDocument,
    convention: DensityConvention,
    field: &'static str,
) -> Result<ConvexExpectation, DocError> {
    match doc {
        RhoDocument::Linear { density } => Ok(ConvexExpectation::linear(measure_vector(
            space, density, convention, field,
        )?)),
        RhoDocument::Entropic { reference_density } => Ok(ConvexExpectation::entropic(
            measure_vector(space, reference_density, convention, field)?,
        )),
        RhoDocument::WorstCase { family } => {
            let mut members = Vec::with_capacity(family.len());
            for row in family {
                members.push(measure_vector(space, row, convention, field)?);
            }
            ConvexExpectation::worst_case(members).map_err(|e| field_err(field, e.to_string()))
        }
        RhoDocument::FinitelyGenerated { generators } => {
            let mut pairs = Vec::with_capacity(generators.len());
            for g in generators {
                pairs.push((
                    measure_vector(space, &g.density, convention, field)?,
                    g.penalty,
                ));
            }
            ConvexExpectation::finitely_generated(pairs)
                .map_err(|e| field_err(field, e.to_string()))
        }
    }
}

fn rho_document(rho: &ConvexExpectation, convention: DensityConvention) -> RhoDocument {
    let render = |d: &DensityVector| -> Vec<f64> {
        let raw = match convention {
            DensityConvention::Densities => d.values().to_vec(),
            DensityConvention::Probabilities => d.probabilities(),
        };
        raw.into_iter().map(round_sig).collect()
    };
    match rho {
        ConvexExpectation::Linear(p) => RhoDocument::Linear { density: render(p) },
        ConvexExpectation::Entropic(q0) => RhoDocument::Entropic {
            reference_density: render(q0),
        },
        ConvexExpectation::WorstCase(family) => RhoDocument::WorstCase {
            family: family.iter().map(render).collect(),
        },
        ConvexExpectation::FinitelyGenerated(gens) => RhoDocument::FinitelyGenerated {
            generators: gens
                .iter()
                .map(|(q, c)| GeneratorDocument {
                    density: render(q),
                    penalty: round_sig(*c),
                })
                .collect(),
        },
    }
}

/// Diagnostics as written to disk. Certificate gaps may be absent:
/// a missing gap means the stage produced no finite lower bound.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsDocument {
    pub primal_gap: Option<f64>,
    pub refine_gap: Option<f64>,
    pub support_gap: Option<f64>,
    pub saddle_residual: f64,
    pub dual_residual: f64,
    pub dual_attainment_residual: f64,
    pub budget_residual: f64,
    pub alpha_star_excess: f64,
    pub beta_excess: f64,
    pub threshold_max_residual: f64,
    pub constraint_vacuous: bool,
    pub nonstandard_box: bool,
    pub stage_notes: Vec<String>,
}

/// Solver output as a document.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDocument {
    pub format_version: u32,
    pub status: SolutionStatus,
    pub atoms: Vec<String>,
    pub density_convention: DensityConvention,
    pub x_star: Vec<f64>,
    pub beta: f64,
    pub alpha_star: f64,
    pub gamma: f64,
    pub q_star: Vec<f64>,
    pub p_star: Vec<f64>,
    pub z: f64,
    /// Randomization values on the equality event, keyed by atom index.
    pub boundary_randomization: BTreeMap<usize, f64>,
    pub duality_gap: f64,
    pub diagnostics: DiagnosticsDocument,
    pub config: SolverConfig,
}

impl SolutionDocument {
    pub fn from_solution(
        solution: &NpSolution,
        config: &SolverConfig,
        convention: DensityConvention,
    ) -> Self {
        let space = solution.x_star.space();
        let diag = &solution.diagnostics;
        let measure = |d: &DensityVector| -> Vec<f64> {
            let raw = match convention {
                DensityConvention::Densities => d.values().to_vec(),
                DensityConvention::Probabilities => d.probabilities(),
            };
            raw.into_iter().map(round_sig).collect()
        };
        SolutionDocument {
            format_version: FORMAT_VERSION,
            status: solution.status.clone(),
            atoms: space.labels().to_vec(),
            density_convention: convention,
            x_star: solution
                .x_star
                .values()
                .iter()
                .copied()
                .map(round_sig)
                .collect(),
            beta: round_sig(solution.beta),
            alpha_star: round_sig(solution.alpha_star),
            gamma: round_sig(solution.gamma),
            q_star: measure(&solution.q_star),
            p_star: measure(&solution.p_star),
            z: round_sig(solution.z),
            boundary_randomization: solution
                .boundary_randomization
                .iter()
                .map(|(&i, &b)| (i, round_sig(b)))
                .collect(),
            duality_gap: round_sig(solution.duality_gap),
            diagnostics: DiagnosticsDocument {
                primal_gap: finite_gap(diag.primal_gap),
                refine_gap: finite_gap(diag.refine_gap),
                support_gap: finite_gap(diag.support_gap),
                saddle_residual: round_sig(diag.saddle_residual),
                dual_residual: round_sig(diag.dual_residual),
                dual_attainment_residual: round_sig(diag.dual_attainment_residual),
                budget_residual: round_sig(diag.budget_residual),
                alpha_star_excess: round_sig(diag.alpha_star_excess),
                beta_excess: round_sig(diag.beta_excess),
                threshold_max_residual: round_sig(diag.threshold_max_residual),
                constraint_vacuous: diag.constraint_vacuous,
                nonstandard_box: diag.nonstandard_box,
                stage_notes: diag.stage_notes.clone(),
            },
            config: config.clone(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, DocError> {
        let doc: SolutionDocument = serde_json::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(DocError::Version {
                found: doc.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(doc)
    }

    pub fn to_json_string(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("document serialization");
        text.push('\n');
        text
    }
}

/// Rounds to 12 significant digits; the printed shortest form of the
/// result parses back bit-for-bit.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("rounded float")
}

fn finite_gap(g: f64) -> Option<f64> {
    g.is_finite().then(|| round_sig(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve;
    use std::f64::consts::E;

    fn mixed_doc_text() -> String {
        r#"{
            "format_version": 1,
            "atoms": [
                {"label": "0", "mu": 0.5},
                {"label": "1", "mu": 0.5}
            ],
            "rho1": {"variant": "linear", "density": [1.0, 1.0]},
            "rho2": {"variant": "entropic", "reference_density": [1.5, 0.5]},
            "k1": 0.0,
            "k2": 1.0,
            "alpha": 0.5
        }"#
        .to_string()
    }

    #[test]
    fn problem_document_parses_and_solves() {
        let doc = ProblemDocument::from_json_str(&mixed_doc_text()).unwrap();
        let (spec, config) = doc.to_spec().unwrap();
        let solution = solve(&spec, &config).unwrap();
        assert!((solution.beta - ((3.0 + E) / 4.0).ln()).abs() <= 1e-8);
    }

    #[test]
    fn problem_document_round_trips() {
        let doc = ProblemDocument::from_json_str(&mixed_doc_text()).unwrap();
        let text = doc.to_json_string();
        let again = ProblemDocument::from_json_str(&text).unwrap();
        assert_eq!(doc, again);
        assert_eq!(text, again.to_json_string());
    }

    #[test]
    fn probability_convention_converts_on_load() {
        let text = r#"{
            "format_version": 1,
            "atoms": [
                {"label": "0", "mu": 0.5},
                {"label": "1", "mu": 0.5}
            ],
            "density_convention": "probabilities",
            "rho1": {"variant": "linear", "density": [0.5, 0.5]},
            "rho2": {"variant": "entropic", "reference_density": [0.75, 0.25]},
            "k1": 0.0,
            "k2": 1.0,
            "alpha": 0.5
        }"#;
        let doc = ProblemDocument::from_json_str(text).unwrap();
        let (spec, _) = doc.to_spec().unwrap();
        match spec.rho2() {
            ConvexExpectation::Entropic(q0) => {
                assert_eq!(q0.values(), &[1.5, 0.5]);
            }
            other => panic!("wrong variant: {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = "{\n  \"format_version\": 1,\n  \"atoms\": karma\n}";
        let err = ProblemDocument::from_json_str(text).unwrap_err();
        let message = err.to_string();
        assert!(
            message.contains("line 3"),
            "expected a positioned message, got: {message}"
        );
    }

    #[test]
    fn unknown_fields_and_bad_versions_are_rejected() {
        let text = mixed_doc_text().replace("\"alpha\"", "\"aplha\"");
        assert!(ProblemDocument::from_json_str(&text).is_err());
        let text = mixed_doc_text().replace(
            "\"format_version\": 1",
            "\"format_version\": 99",
        );
        match ProblemDocument::from_json_str(&text) {
            Err(DocError::Version { found: 99, expected: 1 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn negative_generator_penalty_is_a_validation_error() {
        let text = r#"{
            "format_version": 1,
            "atoms": [
                {"label": "0", "mu": 0.5},
                {"label": "1", "mu": 0.5}
            ],
            "rho1": {"variant": "linear", "density": [1.0, 1.0]},
            "rho2": {"variant": "finitely_generated", "generators": [
                {"density": [1.0, 1.0], "penalty": -0.25}
            ]},
            "k1": 0.0,
            "k2": 1.0,
            "alpha": 0.5
        }"#;
        let doc = ProblemDocument::from_json_str(text).unwrap();
        let err = doc.to_spec().unwrap_err();
        let message = err.to_string();
        assert!(message.contains("rho2"), "{message}");
        assert!(message.contains("negative penalty"), "{message}");
    }

    #[test]
    fn solver_overrides_apply_over_defaults() {
        let mut text = mixed_doc_text();
        text = text.replace(
            "\"alpha\": 0.5",
            "\"alpha\": 0.5, \"solver\": {\"tol_opt\": 1e-6, \"seed\": 9}",
        );
        let doc = ProblemDocument::from_json_str(&text).unwrap();
        let (_, config) = doc.to_spec().unwrap();
        assert_eq!(config.tol_opt, 1e-6);
        assert_eq!(config.seed, 9);
        assert_eq!(config.tol_feas, SolverConfig::default().tol_feas);
    }

    #[test]
    fn solution_document_round_trips_and_is_rounded() {
        let doc = ProblemDocument::from_json_str(&mixed_doc_text()).unwrap();
        let (spec, config) = doc.to_spec().unwrap();
        let solution = solve(&spec, &config).unwrap();
        let out = SolutionDocument::from_solution(&solution, &config, DensityConvention::default());
        let text = out.to_json_string();
        let again = SolutionDocument::from_json_str(&text).unwrap();
        assert_eq!(out, again);
        assert_eq!(text, again.to_json_string());
        // 12 significant digits: the stored beta is the rounded value
        assert_eq!(out.beta, round_sig(solution.beta));
        assert_ne!(out.beta, solution.beta);
    }

    #[test]
    fn round_sig_is_idempotent_and_shortest_printable() {
        for &x in &[
            std::f64::consts::PI,
            -1.0 / 3.0,
            1.5,
            0.0,
            3.0 / E,
            6.02e23,
            -2.5e-13,
        ] {
            let r = round_sig(x);
            assert_eq!(round_sig(r), r);
            let printed = serde_json::to_string(&r).unwrap();
            let reparsed: f64 = printed.parse().unwrap();
            assert_eq!(reparsed, r);
        }
    }
}
