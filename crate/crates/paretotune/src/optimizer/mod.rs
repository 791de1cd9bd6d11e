//! The tuning session: bootstrap random sampling, per-objective forest
//! fitting, Pareto prediction over the configuration pool, active-learning
//! evaluation of unmeasured predicted-front points, and fixpoint
//! termination.
//!
//! Every batch — the bootstrap and each active-learning iteration — is a
//! deterministic function of the samples of *completed* earlier batches,
//! and its samples are journaled in canonical configuration order. Resuming
//! from any journal prefix therefore re-derives pending work exactly:
//! already-journaled evaluations are skipped as no-ops and the remainder of
//! the interrupted batch is evaluated, so an interrupted-and-resumed
//! session reproduces the uninterrupted one.

mod journal;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use journal::{
    read_journal, HeaderRecord, IterationRecord, JournalError, JournalWriter, LoadedJournal,
    Record, SampleRecord, StatusRecord, JOURNAL_VERSION,
};

use crate::evaluator::{EvalOutcome, EvaluationRequest, Evaluator, EvaluatorError};
use crate::exec;
use crate::pareto::{self, FrontEntry, ParetoError, Provenance};
use crate::space::{Configuration, FeatureVector, ParameterSpace, SpaceError};
use crate::surrogate::{fit_forest, ForestModel, ForestParams, SurrogateError};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(transparent)]
    Evaluator(#[from] EvaluatorError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("invalid session options: {0}")]
    InvalidOptions(String),
    #[error("rs={rs} exceeds the total evaluation budget {budget}")]
    BudgetMisconfigured { rs: usize, budget: usize },
    #[error("{failed} of {total} evaluations failed in one batch (abort fraction {limit})")]
    TooManyFailures { failed: usize, total: usize, limit: f64 },
    #[error("session has no successful samples")]
    NoSuccessfulSamples,
    #[error("session holds fewer samples than rs={rs}; run the bootstrap first")]
    NotBootstrapped { rs: usize },
    #[error("evaluator answers objectives {actual:?}, session expects {expected:?}")]
    ObjectiveMismatch { expected: Vec<String>, actual: Vec<String> },
}

/// Where a sample came from: the bootstrap random batch or an
/// active-learning iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Random,
    Iteration(u32),
}

impl SampleSource {
    pub fn label(&self) -> String {
        match self {
            SampleSource::Random => "random".to_string(),
            SampleSource::Iteration(k) => format!("iteration-{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleOutcome {
    /// Objective values in session objective order, all finite.
    Ok(Vec<f64>),
    Failed(String),
}

impl SampleOutcome {
    pub fn objectives(&self) -> Option<&[f64]> {
        match self {
            SampleOutcome::Ok(values) => Some(values),
            SampleOutcome::Failed(_) => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, SampleOutcome::Ok(_))
    }
}

/// One evaluated configuration. Failed evaluations are kept (and never
/// retried) but excluded from training and fronts.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub config: Configuration,
    pub outcome: SampleOutcome,
    pub source: SampleSource,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    Converged,
    /// The evaluation or iteration budget stopped the loop.
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationSummary {
    pub index: u32,
    pub predicted_front_size: usize,
    pub new_samples: usize,
    pub measured_front_hypervolume: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    /// Bootstrap random batch size (`rs`).
    pub random_samples: usize,
    pub max_iterations: usize,
    /// Cap on newly evaluated points per iteration; `None` is unlimited.
    /// When it binds, candidates are taken in ascending predicted
    /// first-objective order, ties broken by canonical key.
    pub per_iteration_cap: Option<usize>,
    /// Total evaluation budget including the bootstrap; `None` is unlimited.
    pub total_budget: Option<usize>,
    /// Prediction covers the full pool when the space cardinality fits,
    /// otherwise a uniform subsample of this size (always extended with
    /// every evaluated configuration).
    pub pool_cap: usize,
    pub forest: ForestParams,
    /// Optional strict upper bounds applied to measured fronts.
    pub validity_thresholds: Option<BTreeMap<String, f64>>,
    /// A batch whose failure fraction reaches this value aborts the run.
    pub max_failure_fraction: f64,
    pub seed: u64,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            random_samples: 3000,
            max_iterations: 10,
            per_iteration_cap: Some(500),
            total_budget: None,
            pool_cap: 2_000_000,
            forest: ForestParams::default(),
            validity_thresholds: None,
            max_failure_fraction: 0.5,
            seed: 0,
        }
    }
}

const STREAM_BOOTSTRAP: u64 = 1;
const STREAM_POOL: u64 = 2;
const STREAM_FOREST_BASE: u64 = 1000;

/// Independent deterministic seed streams (splitmix64 finaliser).
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Persistent record of one tuning run: evaluated samples, iteration
/// history, status, and (optionally) the journal they are mirrored to.
pub struct TuningSession {
    space: ParameterSpace,
    options: SessionOptions,
    objectives: Vec<String>,
    evaluator_desc: String,
    samples: Vec<Sample>,
    evaluated: BTreeSet<Configuration>,
    iterations: Vec<IterationSummary>,
    status: SessionStatus,
    journal: Option<JournalWriter>,
    pool_base: std::cell::OnceCell<Vec<u128>>,
}

struct IterationPlan {
    predicted_front_size: usize,
    /// Unmeasured predicted-front configurations, canonical order.
    candidates: Vec<Configuration>,
}

impl TuningSession {
    pub fn new(
        space: &ParameterSpace,
        evaluator: &dyn Evaluator,
        options: SessionOptions,
        journal_path: Option<&Path>,
    ) -> Result<Self, SessionError> {
        let objectives = evaluator.objectives().to_vec();
        validate_options(&options, space, &objectives)?;
        let journal = match journal_path {
            Some(path) => Some(JournalWriter::create(path)?),
            None => None,
        };
        let mut session = TuningSession {
            space: space.clone(),
            options,
            objectives,
            evaluator_desc: evaluator.describe(),
            samples: Vec::new(),
            evaluated: BTreeSet::new(),
            iterations: Vec::new(),
            status: SessionStatus::Running,
            journal,
            pool_base: std::cell::OnceCell::new(),
        };
        let header = Record::Header(HeaderRecord {
            version: JOURNAL_VERSION,
            space: session.space.to_json(),
            options: session.options.clone(),
            objectives: session.objectives.clone(),
            evaluator: session.evaluator_desc.clone(),
        });
        session.journal_write(&header)?;
        session.journal_sync()?;
        Ok(session)
    }

    /// Rebuild a session from its journal. Completed events are loaded as
    /// data; nothing is evaluated.
    pub fn resume(path: &Path) -> Result<Self, SessionError> {
        let LoadedJournal { header, records, .. } = read_journal(path)?;
        let space = ParameterSpace::parse(&header.space.to_string())
            .map_err(|e| JournalError::Inconsistent(format!("header space: {e}")))?;
        let mut session = TuningSession {
            space,
            options: header.options,
            objectives: header.objectives,
            evaluator_desc: header.evaluator,
            samples: Vec::new(),
            evaluated: BTreeSet::new(),
            iterations: Vec::new(),
            status: SessionStatus::Running,
            journal: None,
            pool_base: std::cell::OnceCell::new(),
        };
        for record in records {
            match record {
                Record::Header(_) => unreachable!("rejected by read_journal"),
                Record::Sample(sample) => {
                    let config = session
                        .space
                        .config_from_values(&sample.config)
                        .map_err(|e| JournalError::Inconsistent(format!("sample config: {e}")))?;
                    if !session.evaluated.insert(config.clone()) {
                        return Err(JournalError::Inconsistent(
                            "configuration journaled twice".to_string(),
                        )
                        .into());
                    }
                    let outcome = match (sample.metrics, sample.error) {
                        (Some(metrics), None) => {
                            let values = session
                                .objectives
                                .iter()
                                .map(|name| {
                                    metrics.get(name).copied().ok_or_else(|| {
                                        JournalError::Inconsistent(format!(
                                            "sample lacks objective {name:?}"
                                        ))
                                    })
                                })
                                .collect::<Result<Vec<f64>, _>>()?;
                            SampleOutcome::Ok(values)
                        }
                        (None, Some(reason)) => SampleOutcome::Failed(reason),
                        _ => {
                            return Err(JournalError::Inconsistent(
                                "sample needs exactly one of metrics/error".to_string(),
                            )
                            .into())
                        }
                    };
                    session.samples.push(Sample {
                        config,
                        outcome,
                        source: sample.source,
                        wall_time_s: sample.wall_time_s,
                    });
                }
                Record::Iteration(it) => session.iterations.push(IterationSummary {
                    index: it.index,
                    predicted_front_size: it.predicted_front_size as usize,
                    new_samples: it.new_samples as usize,
                    measured_front_hypervolume: it.measured_front_hypervolume,
                }),
                Record::Status(s) => session.status = s.status,
            }
        }
        session.journal = Some(JournalWriter::append(path)?);
        Ok(session)
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn options(&self) -> &SessionOptions {
        &self.options
    }

    pub fn objectives(&self) -> &[String] {
        &self.objectives
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iterations(&self) -> &[IterationSummary] {
        &self.iterations
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn evaluator_descriptor(&self) -> &str {
        &self.evaluator_desc
    }

    /// Drive the session to a stop cause: fixpoint convergence, the total
    /// budget, or the iteration cap. Safe to call on a resumed session; it
    /// picks up exactly where the journal left off.
    pub fn run(&mut self, evaluator: &mut dyn Evaluator) -> Result<SessionStatus, SessionError> {
        self.check_evaluator(evaluator)?;
        if self.status != SessionStatus::Running {
            return Ok(self.status);
        }
        self.ensure_bootstrap(evaluator)?;
        loop {
            if self.status != SessionStatus::Running {
                break;
            }
            // An interrupted iteration batch must be completed before any
            // stop condition is consulted: the uninterrupted run entered it.
            if self.pending_iteration().is_some() {
                self.step(evaluator)?;
                continue;
            }
            if self.iterations.last().is_some_and(|it| it.new_samples == 0) {
                self.set_status(SessionStatus::Converged)?;
                break;
            }
            if let Some(budget) = self.options.total_budget {
                if self.samples.len() >= budget {
                    self.set_status(SessionStatus::BudgetExhausted)?;
                    break;
                }
            }
            if self.iterations.len() >= self.options.max_iterations {
                self.set_status(SessionStatus::BudgetExhausted)?;
                break;
            }
            self.step(evaluator)?;
        }
        Ok(self.status)
    }

    /// One refit → predict → front → evaluate round. Returns the number of
    /// samples the iteration contributes; 0 means the predicted front was
    /// already fully measured and the session is converged.
    pub fn active_learning_step(
        &mut self,
        evaluator: &mut dyn Evaluator,
    ) -> Result<usize, SessionError> {
        self.check_evaluator(evaluator)?;
        if self.status != SessionStatus::Running {
            return Ok(0);
        }
        if self.samples.len() < self.options.random_samples {
            return Err(SessionError::NotBootstrapped { rs: self.options.random_samples });
        }
        self.step(evaluator)
    }

    fn check_evaluator(&self, evaluator: &dyn Evaluator) -> Result<(), SessionError> {
        if evaluator.objectives() != self.objectives.as_slice() {
            return Err(SessionError::ObjectiveMismatch {
                expected: self.objectives.clone(),
                actual: evaluator.objectives().to_vec(),
            });
        }
        Ok(())
    }

    /// Evaluate whatever is missing from the bootstrap batch.
    pub fn ensure_bootstrap(
        &mut self,
        evaluator: &mut dyn Evaluator,
    ) -> Result<usize, SessionError> {
        self.check_evaluator(evaluator)?;
        let mut planned = self
            .space
            .sample_random(self.options.random_samples, derive_seed(self.options.seed, STREAM_BOOTSTRAP))?;
        planned.sort();
        self.evaluate_batch(&planned, SampleSource::Random, evaluator)
    }

    /// An iteration whose samples are journaled but whose iteration record
    /// is not: the batch to finish first after a resume.
    fn pending_iteration(&self) -> Option<u32> {
        let completed = self.iterations.len() as u32;
        self.samples
            .iter()
            .filter_map(|s| match s.source {
                SampleSource::Iteration(k) if k > completed => Some(k),
                _ => None,
            })
            .max()
    }

    fn step(&mut self, evaluator: &mut dyn Evaluator) -> Result<usize, SessionError> {
        let index = self.iterations.len() as u32 + 1;
        let plan = self.plan_iteration(index)?;
        if !plan.candidates.is_empty() {
            self.evaluate_batch(&plan.candidates, SampleSource::Iteration(index), evaluator)?;
        }
        let new_samples = plan.candidates.len();
        let hv = self.measured_hypervolume();
        let summary = IterationSummary {
            index,
            predicted_front_size: plan.predicted_front_size,
            new_samples,
            measured_front_hypervolume: hv,
        };
        self.journal_write(&Record::Iteration(IterationRecord {
            index,
            predicted_front_size: summary.predicted_front_size as u64,
            new_samples: summary.new_samples as u64,
            measured_front_hypervolume: summary.measured_front_hypervolume,
        }))?;
        self.journal_sync()?;
        self.iterations.push(summary);
        if new_samples == 0 {
            self.set_status(SessionStatus::Converged)?;
        }
        Ok(new_samples)
    }

    /// Steps (2)-(4) of the loop for iteration `index`: fit one forest per
    /// objective on the completed batches, predict over the pool, filter to
    /// the predicted front, and keep the unmeasured points (prioritised and
    /// capped). Depends only on completed-batch state, so a resumed session
    /// re-derives the identical plan.
    fn plan_iteration(&self, index: u32) -> Result<IterationPlan, SessionError> {
        let completed = |source: SampleSource| match source {
            SampleSource::Random => true,
            SampleSource::Iteration(k) => k < index,
        };
        let training: Vec<&Sample> = self
            .samples
            .iter()
            .filter(|s| completed(s.source) && s.outcome.is_ok())
            .collect();
        if training.is_empty() {
            return Err(SessionError::NoSuccessfulSamples);
        }
        let xs: Vec<FeatureVector> = training
            .iter()
            .map(|s| self.space.encode(&s.config))
            .collect::<Result<_, _>>()?;
        let models: Vec<ForestModel> = self
            .objectives
            .iter()
            .enumerate()
            .map(|(o, name)| {
                let ys: Vec<f64> = training
                    .iter()
                    .map(|s| s.outcome.objectives().expect("filtered ok")[o])
                    .collect();
                let params = ForestParams {
                    seed: derive_seed(self.options.forest.seed, STREAM_FOREST_BASE + o as u64),
                    ..self.options.forest.clone()
                };
                fit_forest(&xs, &ys, &params).map(|m| m.named(name.clone()))
            })
            .collect::<Result<_, _>>()?;

        let prior_ranks: BTreeSet<u128> = self
            .samples
            .iter()
            .filter(|s| completed(s.source))
            .map(|s| self.space.rank_of(&s.config))
            .collect();

        let pool = self.pool_ranks(&prior_ranks);
        let space = &self.space;
        let width = space.encoding_width();
        let rank_at = |i: usize| match &pool {
            Pool::Full => i as u128,
            Pool::Subsampled(ranks) => ranks[i],
        };
        let n_points = match &pool {
            Pool::Full => space.cardinality() as usize,
            Pool::Subsampled(ranks) => ranks.len(),
        };

        let front = if self.objectives.len() == 2 {
            let predictions: Vec<[f64; 2]> =
                exec::map_indices_scratch(n_points, || Vec::with_capacity(width), |buf, i| {
                    space.encode_rank_into(rank_at(i), buf);
                    [models[0].predict_unchecked(buf), models[1].predict_unchecked(buf)]
                });
            let front_idx = pareto::pareto_front_indices(&predictions);
            front_idx
                .into_iter()
                .map(|i| (rank_at(i), predictions[i][0]))
                .collect::<Vec<(u128, f64)>>()
        } else {
            let predictions: Vec<Vec<f64>> =
                exec::map_indices_scratch(n_points, || Vec::with_capacity(width), |buf, i| {
                    space.encode_rank_into(rank_at(i), buf);
                    models.iter().map(|m| m.predict_unchecked(buf)).collect()
                });
            let front_idx = pareto::pareto_front_indices(&predictions);
            front_idx
                .into_iter()
                .map(|i| (rank_at(i), predictions[i][0]))
                .collect::<Vec<(u128, f64)>>()
        };
        let predicted_front_size = front.len();

        // Unmeasured front points, already in ascending predicted
        // first-objective order (the front ordering); cap, then restore
        // canonical order for evaluation and journaling.
        let mut chosen: Vec<u128> = front
            .into_iter()
            .filter(|(rank, _)| !prior_ranks.contains(rank))
            .map(|(rank, _)| rank)
            .collect();
        let mut cap = chosen.len();
        if let Some(iteration_cap) = self.options.per_iteration_cap {
            cap = cap.min(iteration_cap);
        }
        if let Some(budget) = self.options.total_budget {
            cap = cap.min(budget.saturating_sub(prior_ranks.len()));
        }
        chosen.truncate(cap);
        chosen.sort_unstable();
        let candidates = chosen.into_iter().map(|rank| self.space.config_from_rank(rank)).collect();
        Ok(IterationPlan { predicted_front_size, candidates })
    }

    fn pool_ranks(&self, evaluated_ranks: &BTreeSet<u128>) -> Pool {
        if self.space.cardinality() <= self.options.pool_cap as u128 {
            return Pool::Full;
        }
        let base = self.pool_base.get_or_init(|| {
            let configs = self
                .space
                .sample_random(self.options.pool_cap, derive_seed(self.options.seed, STREAM_POOL))
                .expect("pool_cap <= cardinality here");
            let mut ranks: Vec<u128> =
                configs.iter().map(|c| self.space.rank_of(c)).collect();
            ranks.sort_unstable();
            ranks
        });
        let mut ranks = base.clone();
        ranks.extend(evaluated_ranks.iter().copied());
        ranks.sort_unstable();
        ranks.dedup();
        Pool::Subsampled(ranks)
    }

    /// Evaluate the planned batch, skipping configurations the journal
    /// already holds, and journal new samples in canonical order.
    fn evaluate_batch(
        &mut self,
        planned: &[Configuration],
        source: SampleSource,
        evaluator: &mut dyn Evaluator,
    ) -> Result<usize, SessionError> {
        let pending: Vec<&Configuration> =
            planned.iter().filter(|c| !self.evaluated.contains(*c)).collect();
        if pending.is_empty() {
            return Ok(0);
        }
        let base_id = self.samples.len() as u64;
        let requests: Vec<EvaluationRequest> = pending
            .iter()
            .enumerate()
            .map(|(i, config)| EvaluationRequest {
                id: base_id + i as u64,
                config: (*config).clone(),
            })
            .collect();
        let started = Instant::now();
        let results = evaluator.evaluate(&requests)?;
        let wall_each = started.elapsed().as_secs_f64() / pending.len() as f64;

        let mut by_id: BTreeMap<u64, EvalOutcome> =
            results.into_iter().map(|r| (r.id, r.outcome)).collect();
        let mut failed = 0usize;
        let mut batch: Vec<Sample> = Vec::with_capacity(pending.len());
        for request in &requests {
            let outcome = match by_id.remove(&request.id) {
                Some(EvalOutcome::Ok(metrics)) => {
                    match self.outcome_from_metrics(&metrics) {
                        Ok(values) => SampleOutcome::Ok(values),
                        Err(reason) => SampleOutcome::Failed(reason),
                    }
                }
                Some(EvalOutcome::Failed(reason)) => SampleOutcome::Failed(reason),
                None => SampleOutcome::Failed("evaluator returned no result".to_string()),
            };
            if !outcome.is_ok() {
                failed += 1;
            }
            batch.push(Sample {
                config: request.config.clone(),
                outcome,
                source,
                wall_time_s: wall_each,
            });
        }

        for sample in &batch {
            let metrics = sample.outcome.objectives().map(|values| {
                self.objectives
                    .iter()
                    .cloned()
                    .zip(values.iter().copied())
                    .collect::<BTreeMap<String, f64>>()
            });
            let error = match &sample.outcome {
                SampleOutcome::Failed(reason) => Some(reason.clone()),
                SampleOutcome::Ok(_) => None,
            };
            self.journal_write(&Record::Sample(SampleRecord {
                config: self.space.values_map(&sample.config),
                metrics,
                error,
                source: sample.source,
                wall_time_s: sample.wall_time_s,
            }))?;
        }
        self.journal_sync()?;
        let evaluated_now = batch.len();
        for sample in batch {
            self.evaluated.insert(sample.config.clone());
            self.samples.push(sample);
        }

        let fraction = failed as f64 / evaluated_now as f64;
        if failed > 0 && fraction >= self.options.max_failure_fraction {
            return Err(SessionError::TooManyFailures {
                failed,
                total: evaluated_now,
                limit: self.options.max_failure_fraction,
            });
        }
        Ok(evaluated_now)
    }

    fn outcome_from_metrics(&self, metrics: &BTreeMap<String, f64>) -> Result<Vec<f64>, String> {
        self.objectives
            .iter()
            .map(|name| match metrics.get(name) {
                Some(v) if v.is_finite() => Ok(*v),
                Some(_) => Err(format!("non-finite objective {name:?}")),
                None => Err(format!("missing objective {name:?}")),
            })
            .collect()
    }

    /// Non-dominated filter over all successful measured samples, after the
    /// session's validity thresholds when configured.
    pub fn measured_front(&self) -> Result<Vec<FrontEntry>, SessionError> {
        if !self.samples.iter().any(|s| s.outcome.is_ok()) {
            return Err(SessionError::NoSuccessfulSamples);
        }
        let kept: Vec<Sample> = match &self.options.validity_thresholds {
            Some(thresholds) => {
                pareto::filter_valid(&self.samples, &self.objectives, thresholds)?
            }
            None => self.samples.iter().filter(|s| s.outcome.is_ok()).cloned().collect(),
        };
        let points: Vec<(Configuration, Vec<f64>)> = kept
            .iter()
            .map(|s| (s.config.clone(), s.outcome.objectives().expect("ok").to_vec()))
            .collect();
        let front_keys = pareto::pareto_front(&points)?;
        let by_key: BTreeMap<&Configuration, &[f64]> =
            points.iter().map(|(c, o)| (c, o.as_slice())).collect();
        Ok(front_keys
            .into_iter()
            .map(|config| {
                let objectives = by_key[&config].to_vec();
                FrontEntry { config, objectives, provenance: Provenance::Measured }
            })
            .collect())
    }

    /// Reference point for progress logging: componentwise max over the
    /// successful bootstrap samples (2-objective sessions only).
    pub fn hypervolume_reference(&self) -> Option<Vec<f64>> {
        if self.objectives.len() != 2 {
            return None;
        }
        let mut reference: Option<Vec<f64>> = None;
        for sample in self.samples.iter().filter(|s| s.source == SampleSource::Random) {
            if let Some(values) = sample.outcome.objectives() {
                match &mut reference {
                    None => reference = Some(values.to_vec()),
                    Some(r) => {
                        for (slot, v) in r.iter_mut().zip(values) {
                            *slot = slot.max(*v);
                        }
                    }
                }
            }
        }
        reference
    }

    /// Hypervolume of the measured front against the session reference;
    /// front points beyond the reference contribute nothing.
    pub fn measured_hypervolume(&self) -> Option<f64> {
        let reference = self.hypervolume_reference()?;
        let front = self.measured_front().ok()?;
        let within: Vec<&[f64]> = front
            .iter()
            .map(|e| e.objectives.as_slice())
            .filter(|o| o[0] <= reference[0] && o[1] <= reference[1])
            .collect();
        pareto::hypervolume_2d(&within, &reference).ok()
    }

    fn set_status(&mut self, status: SessionStatus) -> Result<(), SessionError> {
        self.journal_write(&Record::Status(StatusRecord { status }))?;
        self.journal_sync()?;
        self.status = status;
        Ok(())
    }

    fn journal_write(&mut self, record: &Record) -> Result<(), SessionError> {
        if let Some(journal) = &mut self.journal {
            journal.write(record)?;
        }
        Ok(())
    }

    fn journal_sync(&mut self) -> Result<(), SessionError> {
        if let Some(journal) = &mut self.journal {
            journal.sync()?;
        }
        Ok(())
    }
}

impl std::fmt::Debug for TuningSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TuningSession")
            .field("status", &self.status)
            .field("samples", &self.samples.len())
            .field("iterations", &self.iterations.len())
            .field("objectives", &self.objectives)
            .field("evaluator", &self.evaluator_desc)
            .finish_non_exhaustive()
    }
}

enum Pool {
    Full,
    Subsampled(Vec<u128>),
}

fn validate_options(
    options: &SessionOptions,
    space: &ParameterSpace,
    objectives: &[String],
) -> Result<(), SessionError> {
    if options.random_samples == 0 {
        return Err(SessionError::InvalidOptions("rs must be >= 1".into()));
    }
    if options.pool_cap == 0 {
        return Err(SessionError::InvalidOptions("pool_cap must be >= 1".into()));
    }
    if options.max_failure_fraction.is_nan() || options.max_failure_fraction <= 0.0 {
        return Err(SessionError::InvalidOptions(
            "max_failure_fraction must be positive".into(),
        ));
    }
    if objectives.len() < 2 {
        return Err(SessionError::InvalidOptions(
            "multi-objective tuning needs at least 2 objectives".into(),
        ));
    }
    if options.random_samples as u128 > space.cardinality() {
        return Err(SpaceError::SampleExceedsSpace {
            requested: options.random_samples,
            cardinality: space.cardinality(),
        }
        .into());
    }
    if let Some(budget) = options.total_budget {
        if options.random_samples > budget {
            return Err(SessionError::BudgetMisconfigured {
                rs: options.random_samples,
                budget,
            });
        }
    }
    if let Some(thresholds) = &options.validity_thresholds {
        for name in thresholds.keys() {
            if !objectives.contains(name) {
                return Err(ParetoError::UnknownObjective(name.clone()).into());
            }
        }
    }
    Ok(())
}

/// Execute a whole tuning run: bootstrap, then the active-learning loop
/// until fixpoint or a budget stop.
pub fn run_session(
    space: &ParameterSpace,
    evaluator: &mut dyn Evaluator,
    options: SessionOptions,
    journal_path: Option<&Path>,
) -> Result<TuningSession, SessionError> {
    let mut session = TuningSession::new(space, evaluator, options, journal_path)?;
    session.run(evaluator)?;
    Ok(session)
}

/// Load a session from its journal; completed events are not re-run.
pub fn resume(path: &Path) -> Result<TuningSession, SessionError> {
    TuningSession::resume(path)
}
