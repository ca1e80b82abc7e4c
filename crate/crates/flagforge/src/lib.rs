//! flagforge: a multi-objective compiler autotuning workbench.
//!
//! The crate explores compiler-flag and workload-parameter spaces, keeps
//! execution-time/code-size Pareto frontiers, reduces found solutions to
//! minimal flag sets, aggregates crowd-sourced optimization results,
//! records failed compiler pipelines for fuzzing, and predicts efficient
//! optimizations for unseen workloads from static program features.
//!
//! Modules follow the workflow: [`registry`] names workloads and datasets,
//! [`flagspace`] models what can be tuned, [`pipeline`] compiles and runs,
//! [`stats`] summarizes repetitions, [`store`] persists replayable
//! experiments, [`explorer`] drives the search, [`reducer`] prunes
//! solutions, [`crowd`] shares them, and [`learn`] predicts them.

pub mod bundled;
pub mod crowd;
pub mod error;
pub mod explorer;
pub mod flagspace;
pub mod learn;
pub mod pipeline;
pub mod reducer;
pub mod registry;
pub mod stats;
pub mod store;
pub mod uid;

pub mod cli;

#[doc(hidden)]
pub mod testutil;

pub use error::{Error, Result};
