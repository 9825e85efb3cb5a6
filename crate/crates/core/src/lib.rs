//! Statistical assertions for quantum programs.
//!
//! A program in the line-oriented format of [`program`] is cut at every
//! assertion into a truncated program ending in a full measurement. Each one
//! is simulated on a dense state vector, sampled into a seeded ensemble, and
//! judged with a chi-square test (or an exact test for classical values).

pub mod assertions;
pub mod bench;
pub mod exec;
pub mod gates;
pub mod program;
pub mod report;
pub mod statevector;
pub mod stats;

pub use assertions::{evaluate, EnsembleMode, EvalOptions, Status, Verdict};
pub use bench::{inject_bug, run_benchmark, run_source, BenchError, BENCHMARKS};
pub use exec::Execution;
pub use program::{emit_truncated, parse, Dialect, Program};
pub use report::{Format, Report};
pub use statevector::StateVector;
