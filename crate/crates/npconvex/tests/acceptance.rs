//! Acceptance suite: one test per release criterion, each printing a
//! single pass/fail line (visible with `--nocapture`) before asserting.
//!
//! Criteria touching the command-line surface run the real binary;
//! the others drive the library directly.

mod common;

use std::f64::consts::E;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use npconvex::builtin;
use npconvex::doc::SolutionDocument;
use npconvex::oracle::{cross_check, GridSpec, DEFAULT_BUDGET};
use npconvex::solver::{
    refine_alpha_star, solve, solve_primal, verify_threshold_form, SolverConfig,
};
use npconvex::space::{expectation, kl_divergence, DensityVector, ExtendedReal, RandomVariable};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_npconvex"))
}

fn write_example(dir: &Path, name: &str) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    let status = cli()
        .args(["example", name, "--out"])
        .arg(&path)
        .status()
        .expect("spawn example");
    assert!(status.success(), "example {name} failed");
    path
}

fn solve_document(path: &Path) -> (SolutionDocument, Duration) {
    let started = Instant::now();
    let out = cli().arg("solve").arg(path).output().expect("spawn solve");
    let elapsed = started.elapsed();
    assert!(
        out.status.success(),
        "solve {} failed: {}",
        path.display(),
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::str::from_utf8(&out.stdout).expect("utf8 stdout");
    (
        SolutionDocument::from_json_str(text).expect("solution document"),
        elapsed,
    )
}

fn report(line: &str, ok: bool) {
    println!("{line}: {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{line}: FAIL");
}

#[test]
fn criterion_1_ex31_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_example(dir.path(), "ex31");
    let (doc, elapsed) = solve_document(&path);
    let q0 = doc.q_star[0] * 0.5;
    let q_exact = 3.0 / (3.0 + E);
    let beta_exact = (3.0 + E).ln() - 2.0 * 2.0f64.ln();
    let ok = (q0 - q_exact).abs() <= 1e-6
        && (q0 - 0.524633537).abs() <= 1e-6
        && doc.x_star == vec![1.0, 0.0]
        && (doc.beta - beta_exact).abs() <= 1e-8
        && elapsed < Duration::from_secs(1);
    report(
        &format!(
            "criterion 1 (ex31: Q*(0), X*, beta; {elapsed:.2?}, |q-3/(e+3)| = {:.2e}, \
             |beta-err| = {:.2e})",
            (q0 - q_exact).abs(),
            (doc.beta - beta_exact).abs()
        ),
        ok,
    );
}

#[test]
fn criterion_2_ex32_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_example(dir.path(), "ex32");
    let (doc, elapsed) = solve_document(&path);
    let p0 = doc.p_star[0] * 0.5;
    let p_exact = E / (E + 3.0);
    let ok = (p0 - p_exact).abs() <= 1e-6
        && (doc.beta - 0.5).abs() <= 1e-8
        && elapsed < Duration::from_secs(1);
    report(
        &format!(
            "criterion 2 (ex32: P*(0), value 1/2; {elapsed:.2?}, |p-e/(e+3)| = {:.2e}, \
             |beta-1/2| = {:.2e})",
            (p0 - p_exact).abs(),
            (doc.beta - 0.5).abs()
        ),
        ok,
    );
}

#[test]
fn criterion_3_ex33_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_example(dir.path(), "ex33");
    let (doc, elapsed) = solve_document(&path);
    let z_exact = 3.0 / E;
    let q0 = doc.q_star[0] * 0.5;
    let p0 = doc.p_star[0] * 0.5;
    let ok = (doc.z - z_exact).abs() <= 1e-6
        && doc.x_star == vec![1.0, 0.0]
        && (q0 - 3.0 / (3.0 + E)).abs() <= 1e-6
        && (p0 - E / (E + 3.0)).abs() <= 1e-6
        && elapsed < Duration::from_secs(1);
    report(
        &format!(
            "criterion 3 (ex33: z = 3/e, X* = (1,0), pair matches 1-2; {elapsed:.2?}, \
             |z-3/e| = {:.2e})",
            (doc.z - z_exact).abs()
        ),
        ok,
    );
}

#[test]
fn criterion_4_ex41_reproduction() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let beta_exact = (E - 1.0f64).ln();

    let path = write_example(dir.path(), "ex41");
    let (doc, _) = solve_document(&path);
    let q_exact = [E / (E - 1.0), 1.0 / (E - 1.0)];
    let density_ok = doc
        .q_star
        .iter()
        .zip(q_exact)
        .all(|(got, want)| (got - want).abs() <= 1e-6);

    // the penalty identity is checked with the library's own KL
    let spec = builtin::ex41().spec;
    let q = DensityVector::new(spec.space().clone(), doc.q_star.clone()).unwrap();
    let penalty = match spec.rho2().penalty(&q).unwrap() {
        ExtendedReal::Finite(v) => v,
        ExtendedReal::PosInf => f64::INFINITY,
    };
    let penalty_exact = (E * E - 2.0 * E) / ((E - 1.0) * (E - 1.0)) - beta_exact;

    let fine_path = write_example(dir.path(), "ex41_fine");
    let (fine, _) = solve_document(&fine_path);

    let elapsed = started.elapsed();
    let ok = (doc.beta - beta_exact).abs() <= 1e-8
        && density_ok
        && (penalty - penalty_exact).abs() <= 1e-8
        && (fine.beta - beta_exact).abs() <= 1e-6
        && elapsed < Duration::from_secs(10);
    report(
        &format!(
            "criterion 4 (ex41: beta = ln(e-1), Q* density, penalty, 200-cell refinement; \
             {elapsed:.2?}, |beta-err| = {:.2e}, |pen-err| = {:.2e}, |fine-err| = {:.2e})",
            (doc.beta - beta_exact).abs(),
            (penalty - penalty_exact).abs(),
            (fine.beta - beta_exact).abs()
        ),
        ok,
    );
}

#[test]
fn criterion_5_ex21_alpha_star() {
    let spec = builtin::ex21().spec;
    let config = SolverConfig::default();
    let primal = solve_primal(&spec, &config).unwrap();
    let refined = refine_alpha_star(&spec, &primal.x_star, primal.beta, primal.gap, &config).unwrap();
    let x = refined.x_refined.values();
    let ok = refined.alpha_star.abs() <= 1e-12
        && (x[0] - 0.0).abs() <= 1e-9
        && (x[1] - 1.0).abs() <= 1e-9;
    report(
        &format!(
            "criterion 5 (ex21: alpha* = 0 with X* the indicator of atom 1; alpha* = {:.2e}, \
             X* = {x:?})",
            refined.alpha_star
        ),
        ok,
    );
}

#[test]
fn criterion_6_duality_gap_suite() {
    let started = Instant::now();
    let config = SolverConfig::default();
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for name in ["ex31", "ex32", "ex33", "ex41"] {
        let spec = builtin::example(name).unwrap().spec;
        let solution = solve(&spec, &config).unwrap();
        worst = worst.max(solution.duality_gap);
        count += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e70_6378);
    for _ in 0..100 {
        let spec = common::random_instance(&mut rng);
        let solution = solve(&spec, &config).unwrap();
        worst = worst.max(solution.duality_gap);
        count += 1;
    }
    let elapsed = started.elapsed();
    let ok = worst <= 1e-6 && elapsed < Duration::from_secs(60);
    report(
        &format!(
            "criterion 6 (duality gap over {count} instances; worst = {worst:.2e}, {elapsed:.2?})"
        ),
        ok,
    );
}

#[test]
fn criterion_7_oracle_equivalence() {
    let started = Instant::now();
    let config = SolverConfig::default();
    let builtin_grid = GridSpec {
        test_resolution: 101,
        simplex_resolution: 400,
    };
    let mut checked = 0usize;
    for name in ["ex21", "ex31", "ex32", "ex33", "ex41"] {
        let spec = builtin::example(name).unwrap().spec;
        let (report_, _) = cross_check(&spec, &config, &builtin_grid, DEFAULT_BUDGET).unwrap();
        assert!(report_.pass, "cross-check failed on {name}: {report_:?}");
        checked += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6f72_6163);
    for index in 0..70 {
        let spec = common::random_instance(&mut rng);
        let grid = if spec.space().n() == 2 {
            GridSpec {
                test_resolution: 41,
                simplex_resolution: 150,
            }
        } else {
            GridSpec {
                test_resolution: 21,
                simplex_resolution: 50,
            }
        };
        let (report_, _) = cross_check(&spec, &config, &grid, DEFAULT_BUDGET).unwrap();
        assert!(
            report_.pass,
            "cross-check failed on random instance {index}: {report_:?}"
        );
        checked += 1;
    }
    let elapsed = started.elapsed();
    let ok = elapsed < Duration::from_secs(300);
    report(
        &format!("criterion 7 (oracle cross-check on {checked} instances; {elapsed:.2?})"),
        ok,
    );
}

#[test]
fn criterion_8_axiom_and_property_suites() {
    let started = Instant::now();
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6178_696f);

    for name in builtin::NAMES {
        let spec = builtin::example(name).unwrap().spec;
        let n = spec.space().n();

        for (tag, rho) in [("rho1", spec.rho1()), ("rho2", spec.rho2())] {
            let axioms = rho.certify_axioms(1000, 11);
            assert!(axioms.pass, "{name} {tag} axioms: {axioms:?}");

            // Fenchel-Young: E_Q[X] - rho(X) never exceeds the penalty
            for _ in 0..200 {
                let x = RandomVariable::new(
                    spec.space().clone(),
                    (0..n).map(|_| rng.random_range(-1.0..2.0)).collect(),
                )
                .unwrap();
                let q = common::random_density(&mut rng, spec.space());
                if let ExtendedReal::Finite(pen) = rho.penalty(&q).unwrap() {
                    let lhs = expectation(&q, &x).unwrap() - rho.evaluate(&x).unwrap();
                    assert!(
                        lhs <= pen + 1e-9,
                        "{name} {tag} Fenchel-Young violated: {lhs} > {pen}"
                    );
                }
            }

            // dual representation on the 1e-3 grid, deviation within 1.1e-3
            if n <= 4 {
                let probe = RandomVariable::new(
                    spec.space().clone(),
                    (0..n)
                        .map(|i| (i as f64 + 1.0) / (n as f64 + 1.0))
                        .collect(),
                )
                .unwrap();
                let rep = rho.certify_representation(&probe, 1e-3).unwrap();
                assert!(rep.pass, "{name} {tag} representation: {rep:?}");
                assert!(
                    rep.deviation <= 1.1e-3,
                    "{name} {tag} representation deviation {}",
                    rep.deviation
                );
            }
        }

        // KL nonnegativity and midpoint convexity on the example space
        for _ in 0..100 {
            let q1 = common::random_density(&mut rng, spec.space());
            let q2 = common::random_density(&mut rng, spec.space());
            let r1 = common::random_density(&mut rng, spec.space());
            let r2 = common::random_density(&mut rng, spec.space());
            let kl = |a: &DensityVector, b: &DensityVector| match kl_divergence(a, b).unwrap() {
                ExtendedReal::Finite(v) => v,
                ExtendedReal::PosInf => f64::INFINITY,
            };
            assert!(kl(&q1, &r1) >= -1e-12, "KL negative on {name}");
            let mid = |a: &DensityVector, b: &DensityVector| {
                DensityVector::new(
                    spec.space().clone(),
                    a.values()
                        .iter()
                        .zip(b.values())
                        .map(|(x, y)| 0.5 * (x + y))
                        .collect(),
                )
                .unwrap()
            };
            let lhs = kl(&mid(&q1, &q2), &mid(&r1, &r2));
            let rhs = 0.5 * kl(&q1, &r1) + 0.5 * kl(&q2, &r2);
            assert!(lhs <= rhs + 1e-9, "KL convexity violated on {name}: {lhs} > {rhs}");
        }

        // threshold form holds on every solve output
        let solution = solve(&spec, &config).unwrap();
        assert!(solution.status.is_verified(), "{name} solve unverified");
        let form = verify_threshold_form(
            &solution.x_star,
            &solution.p_star,
            &solution.q_star,
            solution.z,
            spec.k1(),
            spec.k2(),
            &config,
        )
        .unwrap();
        assert!(form.pass, "{name} threshold form: {form:?}");
    }

    let elapsed = started.elapsed();
    let ok = elapsed < Duration::from_secs(120);
    report(
        &format!(
            "criterion 8 (axioms x1000, Fenchel-Young, KL, representation grid, threshold \
             form on {} examples; {elapsed:.2?})",
            builtin::NAMES.len()
        ),
        ok,
    );
}

#[test]
fn criterion_9_byte_identical_documents() {
    let dir = tempfile::tempdir().unwrap();
    let mut all_equal = true;
    for name in builtin::NAMES {
        let path = write_example(dir.path(), name);
        let first = cli().arg("solve").arg(&path).output().unwrap();
        let second = cli().arg("solve").arg(&path).output().unwrap();
        assert!(first.status.success() && second.status.success(), "{name}");
        if first.stdout != second.stdout {
            all_equal = false;
            eprintln!("{name}: consecutive solves differ");
        }
    }
    report(
        &format!(
            "criterion 9 (byte-identical solution documents across consecutive solves, {} examples)",
            builtin::NAMES.len()
        ),
        all_equal,
    );
}
