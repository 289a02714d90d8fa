//! Experiment runner for the mcvd simulator: TOML experiment specs and
//! figure presets, grid sweeps, CSV/JSON outputs and point-source validation.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod output;
pub mod run;
pub mod spec;
pub mod validate;

pub use error::CliError;
pub use run::{metrics_from_dir, run_experiment, GridResult, Summary};
pub use spec::{ExperimentSpec, ReferenceSource};
pub use validate::{validate_point_source, PointSourceCheck, PointSourceReport};
