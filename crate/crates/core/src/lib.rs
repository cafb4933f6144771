//! Engine for analysing Monte Carlo simulation-study results.
//!
//! Results are ingested as a tidy table (one row per repetition, method and
//! data-generating mechanism), mapped onto semantic roles, and summarised
//! into performance measures with Monte Carlo standard errors. The crate
//! also describes missingness, prepares renderer-agnostic plot data and
//! exports tables.

pub mod dist;
pub mod export;
pub mod ingest;
pub mod measures;
pub mod missingness;
pub mod model;
pub mod plotdata;
pub mod query;

pub use measures::{
    compute_all, CriticalValueRule, Measure, MeasureError, PerformanceEstimate, PerformanceInput,
};
pub use model::{
    apply_mapping, enumerate_strata, Dataset, ModelError, RawTable, RepetitionRecord, StratumKey,
    Truth, VariableMapping,
};
