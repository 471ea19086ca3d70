//! Command-line front end: solve problem documents, emit built-in
//! examples, certify the convex-expectation axioms, and cross-check
//! solves against the brute-force oracles.
//!
//! Exit codes are part of the interface:
//! 0 success, 1 parse or validation failure, 2 infeasible problem,
//! 3 unverified result or saddle failure, 4 oracle refusal (budget or
//! dimension).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use npconvex::builtin;
use npconvex::doc::{DensityConvention, ProblemDocument, SolutionDocument};
use npconvex::oracle::{cross_check, GridSpec, OracleError, DEFAULT_BUDGET};
use npconvex::risk::{AxiomReport, RepresentationReport, RiskError};
use npconvex::solver::{solve, ProblemSpec, SolverConfig, SolverError};
use npconvex::space::RandomVariable;

const EXIT_OK: u8 = 0;
const EXIT_PARSE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_UNVERIFIED: u8 = 3;
const EXIT_REFUSED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "npconvex",
    version,
    about = "Optimal randomized tests under convex expectations on finite spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem document and emit a solution document.
    Solve(SolveArgs),
    /// Emit a built-in example as a problem document.
    Example(ExampleArgs),
    /// Certify the defining axioms and the dual representation of
    /// both convex expectations in a document.
    Certify(CertifyArgs),
    /// Re-derive a solve with brute-force grid oracles and compare.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Path to a problem document.
    input: PathBuf,
    /// Write the solution document here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the optimality tolerance.
    #[arg(long)]
    tol_opt: Option<f64>,
    /// Override the feasibility tolerance.
    #[arg(long)]
    tol_feas: Option<f64>,
    /// Override the solver seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Emit measure vectors as probabilities instead of densities.
    #[arg(long)]
    as_probabilities: bool,
    /// Print a human-readable summary to standard error.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct ExampleArgs {
    /// One of the built-in example names; an unknown name lists them.
    name: String,
    /// Write the problem document here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit measure vectors as probabilities instead of densities.
    #[arg(long)]
    as_probabilities: bool,
}

#[derive(Args)]
struct CertifyArgs {
    /// Path to a problem document.
    input: PathBuf,
    /// Random trials per axiom per expectation.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Seed for the axiom trials.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print a human-readable summary to standard error.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Path to a problem document.
    input: PathBuf,
    /// Test-function grid resolution (points per atom).
    #[arg(long)]
    test_res: Option<usize>,
    /// Simplex grid resolution (steps of size 1/s).
    #[arg(long)]
    simplex_res: Option<usize>,
    /// Override the optimality tolerance of the solve under test.
    #[arg(long)]
    tol_opt: Option<f64>,
    /// Override the feasibility tolerance of the solve under test.
    #[arg(long)]
    tol_feas: Option<f64>,
    /// Print a human-readable summary to standard error.
    #[arg(long, short)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_PARSE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Example(args) => cmd_example(&args),
        Command::Certify(args) => cmd_certify(&args),
        Command::Oracle(args) => cmd_oracle(&args),
    };
    ExitCode::from(code)
}

fn fail(code: u8, message: impl std::fmt::Display) -> u8 {
    eprintln!("error: {message}");
    code
}

fn read_document(path: &Path) -> Result<ProblemDocument, u8> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_PARSE, format_args!("{}: {e}", path.display())))?;
    ProblemDocument::from_json_str(&text)
        .map_err(|e| fail(EXIT_PARSE, format_args!("{}: {e}", path.display())))
}

fn load_problem(path: &Path) -> Result<(ProblemSpec, SolverConfig), u8> {
    let doc = read_document(path)?;
    doc.to_spec()
        .map_err(|e| fail(EXIT_PARSE, format_args!("{}: {e}", path.display())))
}

fn solver_exit_code(err: &SolverError) -> u8 {
    match err {
        SolverError::Infeasible { .. } => EXIT_INFEASIBLE,
        SolverError::GammaOutOfRange { .. } | SolverError::Pipeline { .. } => EXIT_UNVERIFIED,
        _ => EXIT_PARSE,
    }
}

fn oracle_exit_code(err: &OracleError) -> u8 {
    match err {
        OracleError::BudgetExceeded { .. } | OracleError::DimensionTooLarge { .. } => EXIT_REFUSED,
        OracleError::Risk(RiskError::DimensionTooLarge { .. }) => EXIT_REFUSED,
        OracleError::Solver(e) => solver_exit_code(e),
        OracleError::InvalidGrid { .. } => EXIT_PARSE,
        _ => EXIT_PARSE,
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), u8> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| fail(EXIT_PARSE, format_args!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn convention(as_probabilities: bool) -> DensityConvention {
    if as_probabilities {
        DensityConvention::Probabilities
    } else {
        DensityConvention::Densities
    }
}

fn budget_from_env() -> Result<u64, u8> {
    match std::env::var("NPCONVEX_BUDGET") {
        Ok(raw) => raw.trim().parse().map_err(|_| {
            fail(
                EXIT_PARSE,
                format_args!("NPCONVEX_BUDGET must be a nonnegative integer, got {raw:?}"),
            )
        }),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

fn cmd_solve(args: &SolveArgs) -> u8 {
    let (spec, mut config) = match load_problem(&args.input) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if let Some(v) = args.tol_opt {
        config.tol_opt = v;
    }
    if let Some(v) = args.tol_feas {
        config.tol_feas = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }

    let started = Instant::now();
    let solution = match solve(&spec, &config) {
        Ok(s) => s,
        Err(e) => return fail(solver_exit_code(&e), e),
    };
    let elapsed = started.elapsed();

    let doc = SolutionDocument::from_solution(&solution, &config, convention(args.as_probabilities));
    if let Err(code) = emit(&doc.to_json_string(), args.out.as_deref()) {
        return code;
    }
    if args.verbose {
        eprintln!(
            "solved {} atoms in {elapsed:.2?}: beta = {:.12}, alpha* = {:.12}, gamma = {:.12}, \
             z = {:.12}, duality gap = {:.3e}, status = {}",
            spec.space().n(),
            solution.beta,
            solution.alpha_star,
            solution.gamma,
            solution.z,
            solution.duality_gap,
            if solution.status.is_verified() {
                "verified".to_string()
            } else {
                format!("UNVERIFIED ({:?})", solution.status)
            },
        );
    }
    if solution.status.is_verified() {
        EXIT_OK
    } else {
        eprintln!("warning: solution failed verification; see the status field of the document");
        EXIT_UNVERIFIED
    }
}

fn cmd_example(args: &ExampleArgs) -> u8 {
    let Some(example) = builtin::example(&args.name) else {
        return fail(
            EXIT_PARSE,
            format_args!(
                "unknown example {:?}; valid names: {}",
                args.name,
                builtin::NAMES.join(", ")
            ),
        );
    };
    let doc = ProblemDocument::from_spec(
        &example.spec,
        convention(args.as_probabilities),
        Some(example.comment.to_string()),
    );
    match emit(&doc.to_json_string(), args.out.as_deref()) {
        Ok(()) => EXIT_OK,
        Err(code) => code,
    }
}

/// Representation certification at one probe point.
#[derive(Serialize)]
struct RepresentationEntry {
    probe: &'static str,
    report: RepresentationReport,
}

/// Certification results for one convex expectation.
#[derive(Serialize)]
struct RhoCertification {
    axioms: AxiomReport,
    representation: Vec<RepresentationEntry>,
    notes: Vec<String>,
    pass: bool,
}

/// The full certify-command report.
#[derive(Serialize)]
struct CertifyReport {
    input: String,
    trials: usize,
    seed: u64,
    rho1: RhoCertification,
    rho2: RhoCertification,
    pass: bool,
}

fn certify_rho(
    rho: &npconvex::risk::ConvexExpectation,
    spec: &ProblemSpec,
    trials: usize,
    seed: u64,
) -> Result<RhoCertification, u8> {
    const REPRESENTATION_GRID: f64 = 1e-3;
    let axioms = rho.certify_axioms(trials, seed);
    let mut representation = Vec::new();
    let mut notes = Vec::new();
    let space = spec.space().clone();
    let n = space.n();
    if n > 4 {
        notes.push(format!(
            "representation grid check skipped: {n} atoms exceeds the certification limit of 4"
        ));
    } else {
        let mid = 0.5 * (spec.k1() + spec.k2());
        let alternating: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { spec.k2() } else { spec.k1() })
            .collect();
        let ramp: Vec<f64> = (0..n)
            .map(|i| {
                spec.k1() + (spec.k2() - spec.k1()) * (i as f64 + 1.0) / (n as f64 + 1.0)
            })
            .collect();
        let probes: [(&'static str, Vec<f64>); 3] = [
            ("constant midpoint", vec![mid; n]),
            ("alternating corners", alternating),
            ("interior ramp", ramp),
        ];
        for (name, values) in probes {
            let x = RandomVariable::new(space.clone(), values)
                .map_err(|e| fail(EXIT_PARSE, e))?;
            let report = rho
                .certify_representation(&x, REPRESENTATION_GRID)
                .map_err(|e| fail(EXIT_PARSE, e))?;
            representation.push(RepresentationEntry {
                probe: name,
                report,
            });
        }
    }
    let pass = axioms.pass && representation.iter().all(|e| e.report.pass);
    Ok(RhoCertification {
        axioms,
        representation,
        notes,
        pass,
    })
}

fn cmd_certify(args: &CertifyArgs) -> u8 {
    let (spec, _) = match load_problem(&args.input) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let rho1 = match certify_rho(spec.rho1(), &spec, args.trials, args.seed) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let rho2 = match certify_rho(spec.rho2(), &spec, args.trials, args.seed ^ 0x9e3779b9) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let report = CertifyReport {
        input: args.input.display().to_string(),
        trials: args.trials,
        seed: args.seed,
        pass: rho1.pass && rho2.pass,
        rho1,
        rho2,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serialization");
    text.push('\n');
    print!("{text}");
    if args.verbose {
        eprintln!(
            "certify {}: rho1 {}, rho2 {}",
            args.input.display(),
            if report.rho1.pass { "pass" } else { "FAIL" },
            if report.rho2.pass { "pass" } else { "FAIL" },
        );
    }
    if report.pass {
        EXIT_OK
    } else {
        fail(EXIT_UNVERIFIED, "certification failed; see the report")
    }
}

fn cmd_oracle(args: &OracleArgs) -> u8 {
    let (spec, mut config) = match load_problem(&args.input) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if let Some(v) = args.tol_opt {
        config.tol_opt = v;
    }
    if let Some(v) = args.tol_feas {
        config.tol_feas = v;
    }
    let mut grid = GridSpec::default();
    if let Some(m) = args.test_res {
        grid.test_resolution = m;
    }
    if let Some(s) = args.simplex_res {
        grid.simplex_resolution = s;
    }
    let budget = match budget_from_env() {
        Ok(b) => b,
        Err(code) => return code,
    };

    let started = Instant::now();
    let (report, _) = match cross_check(&spec, &config, &grid, budget) {
        Ok(v) => v,
        Err(e) => return fail(oracle_exit_code(&e), e),
    };
    let elapsed = started.elapsed();

    let mut text = serde_json::to_string_pretty(&report).expect("report serialization");
    text.push('\n');
    print!("{text}");
    if args.verbose {
        eprintln!(
            "oracle {} in {elapsed:.2?}: solver beta = {:.12}, grid value = {:.12}, \
             gap = {:.3e} (tolerance {:.3e}), {}",
            args.input.display(),
            report.solver_beta,
            report.oracle_value,
            report.value_gap,
            report.value_tolerance,
            if report.pass { "pass" } else { "FAIL" },
        );
    }
    if report.pass {
        EXIT_OK
    } else {
        fail(EXIT_UNVERIFIED, "oracle cross-check failed; see the report")
    }
}
