//! Multi-prompt evaluation harness for language models.
//!
//! Benchmarks usually score a model against a single instruction
//! template per task, but performance — absolute and relative — shifts
//! substantially under semantically equivalent rephrasings of that
//! template. This crate evaluates models across whole pools of
//! instruction paraphrases and summarizes the outcome with metrics
//! suited to different uses:
//!
//! - [`metrics`]: maximum and average template performance, the
//!   saturation score tying them together, the combined performance
//!   score, and the divergence of the original template from the
//!   paraphrase distribution;
//! - [`stats`]: ranking-stability statistics (Kendall's W with
//!   agreement bands, the Friedman test with tie correction, Kendall's
//!   tau-b, minimal-tau pair discovery) plus McNemar's test, Cohen's
//!   kappa, and the chi-squared survival function behind the p-values;
//! - [`budget`]: estimators for the best and the average template under
//!   a constrained call budget;
//! - [`paraphrase`]: paraphrase generation from meta-prompts, the
//!   manual-validation workflow with agreement reporting, and
//!   minimal-edit pair analysis;
//! - [`runner`] and [`backend`]: deterministic evaluation over HTTP,
//!   replay, or synthetic completion sources with resumable record
//!   logs;
//! - [`report`]: per-task reports and deterministic CSV/JSON export.
//!
//! The examples directory walks through each capability end to end;
//! `examples/synthetic_run.rs` is the natural starting point.

pub mod backend;
pub mod budget;
pub mod config;
pub mod ingest;
pub mod matrix;
pub mod metrics;
pub mod paraphrase;
pub mod report;
pub mod runner;
pub mod stats;
pub mod template;

pub use backend::{Backend, BackendError, BackendSpec, CompletionRequest, SyntheticProfile};
pub use matrix::{MatrixError, PerformanceMatrix};
pub use metrics::{MetricSet, MetricsConfig, MetricsError};
pub use report::{ReportError, ReportOptions, TaskReport};
pub use runner::{RunConfig, RunnerError, ScoreOptions, TemplateSelection};
pub use stats::{ConcordanceResult, FriedmanResult, StatsError, TauResult};
pub use template::{
    EvalRecord, Instance, InstructionTemplate, Method, PoolViolation, TaskSpec, TemplateError,
    Validity,
};
