//! Multi-objective black-box auto-tuning over finite configuration spaces.
//!
//! The tuner learns one random-decision-forest surrogate per performance
//! metric from evaluated configurations, predicts the Pareto front over the
//! whole configuration pool, and refines it by active learning: only the
//! predicted-front points that have not been measured yet are evaluated,
//! the forests are refit, and the loop repeats until the predicted front is
//! fully measured (or an evaluation budget runs out).
//!
//! The crate is organised around that loop:
//!
//! * [`space`] — typed finite parameter spaces: parsing, enumeration,
//!   distinct uniform sampling, and numeric feature encoding.
//! * [`surrogate`] — CART regression forests mapping feature vectors to a
//!   predicted metric.
//! * [`pareto`] — dominance tests, non-dominated filtering, validity
//!   thresholds, 2-D hypervolume, and front CSV export.
//! * [`evaluator`] — the evaluation boundary: built-in synthetic benchmark
//!   surfaces and a line-delimited JSON subprocess protocol for tuning real
//!   programs.
//! * [`optimizer`] — the tuning session: bootstrap sampling, the active
//!   learning loop, and a resumable append-only journal.
//!
//! With the default `parallel` feature, forest training, batch prediction
//! and pool scans run on rayon; disabling it yields a dependency-free
//! sequential build with bit-identical results.

pub mod evaluator;
mod exec;
pub mod optimizer;
pub mod pareto;
pub mod space;
pub mod spaces;
pub mod surrogate;

pub use evaluator::{
    BuiltinEvaluator, BuiltinSurface, EvaluationRequest, EvaluationResult, Evaluator,
    SubprocessEvaluator,
};
pub use optimizer::{
    resume, run_session, Sample, SampleOutcome, SampleSource, SessionOptions, SessionStatus,
    TuningSession,
};
pub use pareto::{dominates, filter_valid, hypervolume_2d, pareto_front, FrontEntry, Provenance};
pub use space::{Configuration, FeatureVector, ParamKind, ParamValue, ParameterSpace, ParameterSpec};
pub use surrogate::{fit_forest, fit_forest_seq, ForestModel, ForestParams};
