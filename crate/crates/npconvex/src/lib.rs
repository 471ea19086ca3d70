//! Optimal randomized tests for generalized Neyman-Pearson problems
//! under convex expectations on finite probability spaces.
//!
//! The crate is organized in layers:
//!
//! - [`space`]: finite measure spaces, densities, random variables, and
//!   the few measure-theoretic primitives everything else is built on;
//! - [`risk`]: convex expectations (linear, entropic, worst-case,
//!   finitely generated), their penalty functions, and certification of
//!   the defining axioms and the dual representation;
//! - [`solver`]: the composite-hypothesis testing problem, its solution
//!   pipeline (primal value, least-favorable pair, threshold test), and
//!   the self-checks each stage runs;
//! - [`oracle`]: brute-force grid verification independent of the
//!   solver's analytics;
//! - [`doc`]: the JSON problem/solution documents used by the CLI;
//! - [`builtin`]: worked two-point examples with known closed-form
//!   answers, useful as regression anchors and CLI demos.

pub mod space;

mod linprog;

pub mod risk;

pub mod builtin;

pub mod doc;

pub mod oracle;

pub mod solver;
