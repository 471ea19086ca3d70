//! Python bindings: finite probability spaces, the four convex
//! expectation variants, problem specs, and the full solve pipeline.
//!
//! The module mirrors the Rust API shapes but speaks plain Python
//! lists and dicts at the boundary; every fallible constructor maps
//! its error to `ValueError`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use npconvex::builtin;
use npconvex::doc::{DensityConvention, ProblemDocument, SolutionDocument};
use npconvex::oracle::{cross_check, GridSpec, DEFAULT_BUDGET};
use npconvex::risk::ConvexExpectation as RustRho;
use npconvex::solver::{
    solve as rust_solve, NpSolution, ProblemSpec, SolverConfig, SolverError,
};
use npconvex::space::{
    expectation, kl_divergence, DensityVector, ExtendedReal, FiniteProbSpace, RandomVariable,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A finite probability space: atom labels plus strictly positive
/// weights summing to one.
#[pyclass(name = "Space", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpace {
    inner: FiniteProbSpace,
}

#[pymethods]
impl PySpace {
    #[new]
    #[pyo3(signature = (mu, labels = None))]
    fn new(mu: Vec<f64>, labels: Option<Vec<String>>) -> PyResult<Self> {
        let inner = match labels {
            Some(labels) => FiniteProbSpace::new(labels, mu),
            None => FiniteProbSpace::from_weights(mu),
        }
        .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Space(mu={:?})", self.inner.mu())
    }
}

impl PySpace {
    fn density(&self, values: Vec<f64>) -> PyResult<DensityVector> {
        DensityVector::new(self.inner.clone(), values).map_err(value_err)
    }

    fn variable(&self, values: Vec<f64>) -> PyResult<RandomVariable> {
        RandomVariable::new(self.inner.clone(), values).map_err(value_err)
    }
}

/// One of the four convex-expectation variants over a fixed space.
#[pyclass(name = "ConvexExpectation", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRho {
    inner: RustRho,
}

#[pymethods]
impl PyRho {
    /// The ordinary linear expectation of the measure with density `p`.
    #[staticmethod]
    fn linear(space: &PySpace, p: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: RustRho::linear(space.density(p)?),
        })
    }

    /// The entropic expectation `ln E_Q0[exp X]` with reference
    /// density `q0`.
    #[staticmethod]
    fn entropic(space: &PySpace, q0: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: RustRho::entropic(space.density(q0)?),
        })
    }

    /// The worst-case expectation over a finite family of densities.
    #[staticmethod]
    fn worst_case(space: &PySpace, family: Vec<Vec<f64>>) -> PyResult<Self> {
        let members = family
            .into_iter()
            .map(|row| space.density(row))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: RustRho::worst_case(members).map_err(value_err)?,
        })
    }

    /// The maximum of penalized expectations `E_Q[X] - c` over the
    /// given `(density, c)` generators.
    #[staticmethod]
    fn finitely_generated(space: &PySpace, generators: Vec<(Vec<f64>, f64)>) -> PyResult<Self> {
        let pairs = generators
            .into_iter()
            .map(|(row, c)| Ok((space.density(row)?, c)))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: RustRho::finitely_generated(pairs).map_err(value_err)?,
        })
    }

    /// Evaluates the expectation at a random variable given by its
    /// per-atom values.
    fn evaluate(&self, values: Vec<f64>) -> PyResult<f64> {
        let x = RandomVariable::new(self.inner.space().clone(), values).map_err(value_err)?;
        self.inner.evaluate(&x).map_err(value_err)
    }

    /// The penalty (convex conjugate) at a density; `None` encodes
    /// the value plus infinity.
    fn penalty(&self, density: Vec<f64>) -> PyResult<Option<f64>> {
        let q = DensityVector::new(self.inner.space().clone(), density).map_err(value_err)?;
        Ok(match self.inner.penalty(&q).map_err(value_err)? {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::PosInf => None,
        })
    }

    /// Property-checks monotonicity, translation invariance, and
    /// convexity on seeded random draws; returns overall pass.
    #[pyo3(signature = (trials = 1000, seed = 0))]
    fn certify_axioms(&self, trials: usize, seed: u64) -> bool {
        self.inner.certify_axioms(trials, seed).pass
    }

    fn __repr__(&self) -> String {
        let tag = match &self.inner {
            RustRho::Linear(_) => "linear",
            RustRho::Entropic(_) => "entropic",
            RustRho::WorstCase(_) => "worst_case",
            RustRho::FinitelyGenerated(_) => "finitely_generated",
        };
        format!("ConvexExpectation({tag}, n={})", self.inner.space().n())
    }
}

/// The full testing problem: a space, two convex expectations, the
/// box `[k1, k2]`, and the significance level `alpha`.
#[pyclass(name = "Problem", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProblem {
    inner: ProblemSpec,
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(
        space: &PySpace,
        rho1: &PyRho,
        rho2: &PyRho,
        k1: f64,
        k2: f64,
        alpha: f64,
    ) -> PyResult<Self> {
        let inner = ProblemSpec::new(
            space.inner.clone(),
            rho1.inner.clone(),
            rho2.inner.clone(),
            k1,
            k2,
            alpha,
        )
        .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn space(&self) -> PySpace {
        PySpace {
            inner: self.inner.space().clone(),
        }
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn k1(&self) -> f64 {
        self.inner.k1()
    }

    #[getter]
    fn k2(&self) -> f64 {
        self.inner.k2()
    }

    /// The problem as a JSON problem document.
    fn to_json(&self) -> String {
        ProblemDocument::from_spec(&self.inner, DensityConvention::Densities, None)
            .to_json_string()
    }

    /// Parses a JSON problem document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc = ProblemDocument::from_json_str(text).map_err(value_err)?;
        let (inner, _) = doc.to_spec().map_err(value_err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(n={}, k1={}, k2={}, alpha={})",
            self.inner.space().n(),
            self.inner.k1(),
            self.inner.k2(),
            self.inner.alpha()
        )
    }
}

/// A solved instance: the optimal randomized test, the least
/// favorable pair, and the certification status.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    inner: NpSolution,
    config: SolverConfig,
}

#[pymethods]
impl PySolution {
    /// Per-atom values of the optimal threshold test.
    #[getter]
    fn x_star(&self) -> Vec<f64> {
        self.inner.x_star.values().to_vec()
    }

    /// The optimal type-II risk `inf rho2(k2 - X)`.
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn alpha_star(&self) -> f64 {
        self.inner.alpha_star
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    /// Threshold constant of the likelihood-ratio test.
    #[getter]
    fn z(&self) -> f64 {
        self.inner.z
    }

    /// Density of the least favorable Q*.
    #[getter]
    fn q_star(&self) -> Vec<f64> {
        self.inner.q_star.values().to_vec()
    }

    /// Density of the least favorable P*.
    #[getter]
    fn p_star(&self) -> Vec<f64> {
        self.inner.p_star.values().to_vec()
    }

    /// Randomization values on the equality event, keyed by atom index.
    #[getter]
    fn boundary_randomization<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let dict = PyDict::new(py);
        for (&atom, &b) in &self.inner.boundary_randomization {
            dict.set_item(atom, b)?;
        }
        Ok(dict)
    }

    #[getter]
    fn duality_gap(&self) -> f64 {
        self.inner.duality_gap
    }

    /// True when every stage certificate closed.
    #[getter]
    fn verified(&self) -> bool {
        self.inner.status.is_verified()
    }

    /// The unmet identities when verification failed, empty otherwise.
    #[getter]
    fn unverified_reasons(&self) -> Vec<String> {
        match &self.inner.status {
            npconvex::solver::SolutionStatus::Verified => Vec::new(),
            npconvex::solver::SolutionStatus::Unverified { reasons } => reasons.clone(),
        }
    }

    /// The solution as a JSON solution document.
    fn to_json(&self) -> String {
        SolutionDocument::from_solution(&self.inner, &self.config, DensityConvention::Densities)
            .to_json_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(beta={}, z={}, verified={})",
            self.inner.beta,
            self.inner.z,
            self.inner.status.is_verified()
        )
    }
}

fn solver_err(e: SolverError) -> PyErr {
    match e {
        SolverError::Infeasible { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Runs the full pipeline on a problem and returns the certified
/// solution.
#[pyfunction]
#[pyo3(signature = (problem, tol_opt = None, tol_feas = None, seed = None))]
fn solve(
    problem: &PyProblem,
    tol_opt: Option<f64>,
    tol_feas: Option<f64>,
    seed: Option<u64>,
) -> PyResult<PySolution> {
    let mut config = SolverConfig::default();
    if let Some(v) = tol_opt {
        config.tol_opt = v;
    }
    if let Some(v) = tol_feas {
        config.tol_feas = v;
    }
    if let Some(v) = seed {
        config.seed = v;
    }
    let inner = rust_solve(&problem.inner, &config).map_err(solver_err)?;
    Ok(PySolution { inner, config })
}

/// Returns a built-in example problem by name.
#[pyfunction]
fn example(name: &str) -> PyResult<PyProblem> {
    match builtin::example(name) {
        Some(ex) => Ok(PyProblem { inner: ex.spec }),
        None => Err(PyValueError::new_err(format!(
            "unknown example {name:?}; valid names: {}",
            builtin::NAMES.join(", ")
        ))),
    }
}

/// Names of the built-in examples.
#[pyfunction]
fn example_names() -> Vec<String> {
    builtin::NAMES.iter().map(|s| s.to_string()).collect()
}

/// Expectation of per-atom values under a density on a space.
#[pyfunction(name = "expectation")]
fn py_expectation(space: &PySpace, density: Vec<f64>, values: Vec<f64>) -> PyResult<f64> {
    let d = space.density(density)?;
    let x = space.variable(values)?;
    expectation(&d, &x).map_err(value_err)
}

/// Relative entropy KL(q‖q0) of two densities on a space; `None`
/// encodes plus infinity.
#[pyfunction(name = "kl_divergence")]
fn py_kl_divergence(space: &PySpace, q: Vec<f64>, q0: Vec<f64>) -> PyResult<Option<f64>> {
    let q = space.density(q)?;
    let q0 = space.density(q0)?;
    Ok(match kl_divergence(&q, &q0).map_err(value_err)? {
        ExtendedReal::Finite(v) => Some(v),
        ExtendedReal::PosInf => None,
    })
}

/// Re-derives a solve with the brute-force grid oracles and returns
/// True when solver and oracle agree within the grid error bound.
#[pyfunction]
#[pyo3(signature = (problem, test_res = 41, simplex_res = 400))]
fn oracle_agrees(problem: &PyProblem, test_res: usize, simplex_res: usize) -> PyResult<bool> {
    let grid = GridSpec {
        test_resolution: test_res,
        simplex_resolution: simplex_res,
    };
    let config = SolverConfig::default();
    let (report, _) =
        cross_check(&problem.inner, &config, &grid, DEFAULT_BUDGET).map_err(value_err)?;
    Ok(report.pass)
}

#[pymodule]
fn npconvex_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_class::<PyRho>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(example, m)?)?;
    m.add_function(wrap_pyfunction!(example_names, m)?)?;
    m.add_function(wrap_pyfunction!(py_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(py_kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_agrees, m)?)?;
    Ok(())
}
