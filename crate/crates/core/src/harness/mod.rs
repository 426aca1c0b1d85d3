//! Configurable experiments over the solvers and baselines.
//!
//! A TOML file names an experiment `kind` and overrides any subset of the
//! constants that the chosen profile expands to. [`execute`] runs it and
//! writes per-trial CSV, aggregate CSV with standard errors, SVG charts, the
//! expanded configuration and a JSON report with pass/fail verdicts.

pub mod aggregate;
pub mod config;
pub mod experiments;
pub mod run;
pub mod study;
pub mod suite;
pub mod svg;

pub use aggregate::{aggregate, mean_stderr, AggregateRow, TrialSeries};
pub use config::{ExperimentConfig, ExperimentKind, Method, Profile};
pub use experiments::{run_method, MethodRun, Problem};
pub use run::{execute, Command, Outcome, Report, Verdict};
pub use suite::{simplex_suite, CheckOutcome};
