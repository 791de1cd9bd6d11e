//! Session-level behaviour: Algorithm-loop semantics, journaling, resume.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use paretotune::evaluator::{EvalOutcome, EvaluationRequest, EvaluationResult, Evaluator};
use paretotune::optimizer::{
    read_journal, run_session, JournalError, Record, SessionError, SessionOptions, SessionStatus,
    TuningSession,
};
use paretotune::space::ParameterSpace;
use paretotune::surrogate::ForestParams;
use paretotune::{BuiltinEvaluator, BuiltinSurface};

fn small_space() -> ParameterSpace {
    ParameterSpace::parse(
        r#"{"parameters": [
            {"name": "x", "type": "ordinal", "values": [1, 2, 3, 4, 5, 6]},
            {"name": "y", "type": "ordinal", "values": [1, 2, 3, 4, 5, 6]},
            {"name": "flip", "type": "boolean"}
        ]}"#,
    )
    .unwrap()
}

fn six_space() -> ParameterSpace {
    ParameterSpace::parse(
        r#"{"parameters": [{"name": "x", "type": "ordinal", "values": [1, 2, 3, 4, 5, 6]}]}"#,
    )
    .unwrap()
}

type Surface = Box<dyn Fn(&[f64]) -> Option<[f64; 2]> + Send>;

/// Deterministic closed-form evaluator over any space, with optional
/// per-configuration failures and a call counter.
struct FnEvaluator {
    space: ParameterSpace,
    objectives: Vec<String>,
    f: Surface,
    calls: usize,
}

impl FnEvaluator {
    fn new(space: &ParameterSpace, f: impl Fn(&[f64]) -> Option<[f64; 2]> + Send + 'static) -> Self {
        FnEvaluator {
            space: space.clone(),
            objectives: vec!["a".to_string(), "b".to_string()],
            f: Box::new(f),
            calls: 0,
        }
    }
}

impl Evaluator for FnEvaluator {
    fn objectives(&self) -> &[String] {
        &self.objectives
    }

    fn evaluate(
        &mut self,
        requests: &[EvaluationRequest],
    ) -> Result<Vec<EvaluationResult>, paretotune::evaluator::EvaluatorError> {
        self.calls += requests.len();
        Ok(requests
            .iter()
            .map(|request| {
                let encoded = self.space.encode(&request.config).unwrap();
                let outcome = match (self.f)(encoded.as_slice()) {
                    Some([a, b]) => {
                        let mut metrics = BTreeMap::new();
                        metrics.insert("a".to_string(), a);
                        metrics.insert("b".to_string(), b);
                        EvalOutcome::Ok(metrics)
                    }
                    None => EvalOutcome::Failed("synthetic crash".to_string()),
                };
                EvaluationResult { id: request.id, outcome }
            })
            .collect())
    }

    fn describe(&self) -> String {
        "test:fn".to_string()
    }
}

fn conflict_surface(x: &[f64]) -> Option<[f64; 2]> {
    // Two genuinely trading-off objectives with a mild ripple.
    let (a, b) = (x[0], x[1]);
    Some([
        a + 0.3 * (2.0 * b).sin() + 2.0 * x[2],
        7.0 - a + 0.2 * b + 0.3 * (3.0 * a).cos(),
    ])
}

fn fast_options(rs: usize, seed: u64) -> SessionOptions {
    SessionOptions {
        random_samples: rs,
        forest: ForestParams { n_trees: 20, ..ForestParams::default() },
        seed,
        ..SessionOptions::default()
    }
}

#[test]
fn exhaustive_bootstrap_converges_without_new_evaluations() {
    let space = six_space();
    let mut evaluator =
        FnEvaluator::new(&space, |x| Some([x[0], 7.0 - x[0]]));
    let session =
        run_session(&space, &mut evaluator, fast_options(6, 3), None).unwrap();
    assert_eq!(session.status(), SessionStatus::Converged);
    assert_eq!(session.samples().len(), 6);
    assert_eq!(evaluator.calls, 6);
    // Exactly one fixpoint iteration, contributing nothing new.
    assert!(session.iterations().iter().all(|it| it.new_samples == 0));

    // Every point is on the front here: a increases while b decreases.
    let front = session.measured_front().unwrap();
    assert_eq!(front.len(), 6);
}

#[test]
fn per_iteration_cap_is_exact() {
    let space = small_space();
    // Constant objectives: every pool point is on the predicted front, so
    // the candidate list is larger than the cap.
    let mut evaluator = FnEvaluator::new(&space, |_| Some([1.0, 1.0]));
    let options = SessionOptions {
        per_iteration_cap: Some(10),
        max_iterations: 1,
        ..fast_options(5, 1)
    };
    let mut session = TuningSession::new(&space, &evaluator, options, None).unwrap();
    session.ensure_bootstrap(&mut evaluator).unwrap();
    let new = session.active_learning_step(&mut evaluator).unwrap();
    assert_eq!(new, 10);
    assert_eq!(session.samples().len(), 15);
}

#[test]
fn converged_session_reports_zero_step() {
    let space = six_space();
    let mut evaluator = FnEvaluator::new(&space, |x| Some([x[0], 7.0 - x[0]]));
    let mut session =
        run_session(&space, &mut evaluator, fast_options(6, 3), None).unwrap();
    assert_eq!(session.status(), SessionStatus::Converged);
    let calls_before = evaluator.calls;
    assert_eq!(session.active_learning_step(&mut evaluator).unwrap(), 0);
    assert_eq!(evaluator.calls, calls_before);
}

#[test]
fn identical_sessions_replay_identically() {
    let space = small_space();
    let run = || {
        let mut evaluator = FnEvaluator::new(&space, conflict_surface);
        let session = run_session(
            &space,
            &mut evaluator,
            SessionOptions { total_budget: Some(30), ..fast_options(12, 9) },
            None,
        )
        .unwrap();
        session
            .samples()
            .iter()
            .map(|s| (s.config.clone(), format!("{:?}", s.outcome), s.source))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn no_configuration_is_evaluated_twice_and_counts_add_up() {
    let space = small_space();
    let mut evaluator = FnEvaluator::new(&space, conflict_surface);
    let options = SessionOptions { per_iteration_cap: Some(7), ..fast_options(10, 5) };
    let session = run_session(&space, &mut evaluator, options, None).unwrap();

    let keys: BTreeSet<_> = session.samples().iter().map(|s| s.config.clone()).collect();
    assert_eq!(keys.len(), session.samples().len());
    assert_eq!(evaluator.calls, session.samples().len());

    let new_total: usize = session.iterations().iter().map(|it| it.new_samples).sum();
    assert_eq!(new_total, session.samples().len() - 10);
}

#[test]
fn measured_front_hypervolume_is_monotone_across_iterations() {
    let space = small_space();
    let mut evaluator = FnEvaluator::new(&space, conflict_surface);
    let session =
        run_session(&space, &mut evaluator, fast_options(15, 2), None).unwrap();
    let volumes: Vec<f64> = session
        .iterations()
        .iter()
        .filter_map(|it| it.measured_front_hypervolume)
        .collect();
    assert!(!volumes.is_empty());
    for pair in volumes.windows(2) {
        assert!(pair[1] >= pair[0], "hypervolume decreased: {volumes:?}");
    }
}

#[test]
fn budget_misconfiguration_is_rejected() {
    let space = small_space();
    let evaluator = FnEvaluator::new(&space, conflict_surface);
    let options = SessionOptions { total_budget: Some(5), ..fast_options(10, 0) };
    assert!(matches!(
        TuningSession::new(&space, &evaluator, options, None),
        Err(SessionError::BudgetMisconfigured { rs: 10, budget: 5 })
    ));
}

#[test]
fn rs_zero_is_rejected() {
    let space = small_space();
    let evaluator = FnEvaluator::new(&space, conflict_surface);
    assert!(matches!(
        TuningSession::new(&space, &evaluator, fast_options(0, 0), None),
        Err(SessionError::InvalidOptions(_))
    ));
}

#[test]
fn budget_stops_the_loop() {
    let space = small_space();
    let mut evaluator = FnEvaluator::new(&space, |_| Some([1.0, 1.0]));
    let options = SessionOptions {
        total_budget: Some(12),
        per_iteration_cap: None,
        ..fast_options(8, 4)
    };
    let session = run_session(&space, &mut evaluator, options, None).unwrap();
    assert_eq!(session.status(), SessionStatus::BudgetExhausted);
    assert_eq!(session.samples().len(), 12);
}

#[test]
fn failed_evaluations_are_excluded_and_never_retried() {
    let space = small_space();
    // Fail a deterministic quarter of configurations.
    let failing = |x: &[f64]| {
        if (x[0] as i64 + x[1] as i64) % 4 == 0 {
            None
        } else {
            conflict_surface(x)
        }
    };
    let mut evaluator = FnEvaluator::new(&space, failing);
    let session = run_session(
        &space,
        &mut evaluator,
        SessionOptions { total_budget: Some(40), ..fast_options(16, 8) },
        None,
    )
    .unwrap();
    let failed: Vec<_> =
        session.samples().iter().filter(|s| !s.outcome.is_ok()).collect();
    assert!(!failed.is_empty(), "surface should produce some failures");
    assert_eq!(evaluator.calls, session.samples().len());
    let front = session.measured_front().unwrap();
    for entry in &front {
        assert!(failed.iter().all(|f| f.config != entry.config));
    }
}

#[test]
fn batch_failure_fraction_aborts_with_diagnostic() {
    let space = small_space();
    let mut evaluator = FnEvaluator::new(&space, |_| None);
    let err = run_session(&space, &mut evaluator, fast_options(10, 1), None).unwrap_err();
    assert!(matches!(err, SessionError::TooManyFailures { failed: 10, total: 10, .. }));
}

#[test]
fn objective_mismatch_is_rejected() {
    let space = paretotune::spaces::synth_elasticfusion();
    let builtin = BuiltinEvaluator::new(BuiltinSurface::SynthElasticfusion, space).unwrap();
    let mut session = TuningSession::new(space, &builtin, fast_options(5, 0), None).unwrap();
    let mut wrong = FnEvaluator::new(space, |_| Some([0.0, 0.0]));
    assert!(matches!(
        session.run(&mut wrong),
        Err(SessionError::ObjectiveMismatch { .. })
    ));
}

fn journal_path(dir: &tempfile::TempDir) -> std::path::PathBuf {
    dir.path().join("session.jsonl")
}

fn run_journaled(
    space: &ParameterSpace,
    options: SessionOptions,
    path: &Path,
) -> TuningSession {
    let mut evaluator = FnEvaluator::new(space, conflict_surface);
    run_session(space, &mut evaluator, options, Some(path)).unwrap()
}

#[test]
fn resumed_converged_session_makes_no_evaluator_calls() {
    let dir = tempfile::tempdir().unwrap();
    let path = journal_path(&dir);
    let space = small_space();
    let finished = run_journaled(&space, fast_options(12, 6), &path);
    assert_eq!(finished.status(), SessionStatus::Converged);

    let mut resumed = TuningSession::resume(&path).unwrap();
    assert_eq!(resumed.status(), SessionStatus::Converged);
    assert_eq!(resumed.samples().len(), finished.samples().len());
    let mut evaluator = FnEvaluator::new(&space, conflict_surface);
    resumed.run(&mut evaluator).unwrap();
    assert_eq!(evaluator.calls, 0);
    assert_eq!(
        format!("{:?}", resumed.measured_front().unwrap()),
        format!("{:?}", finished.measured_front().unwrap()),
    );
}

#[test]
fn truncated_journal_resumes_to_the_same_front() {
    let dir = tempfile::tempdir().unwrap();
    let path = journal_path(&dir);
    let space = small_space();
    let options = SessionOptions { per_iteration_cap: Some(5), ..fast_options(10, 11) };
    let finished = run_journaled(&space, options, &path);
    let full = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = full.lines().collect();

    // Cut in the middle of the second batch.
    let cut = 10.min(lines.len() - 1);
    let truncated_path = dir.path().join("truncated.jsonl");
    std::fs::write(&truncated_path, format!("{}\n", lines[..cut].join("\n"))).unwrap();

    let mut resumed = TuningSession::resume(&truncated_path).unwrap();
    assert_eq!(resumed.status(), SessionStatus::Running);
    let mut evaluator = FnEvaluator::new(&space, conflict_surface);
    resumed.run(&mut evaluator).unwrap();
    assert_eq!(resumed.status(), finished.status());
    assert_eq!(
        format!("{:?}", resumed.measured_front().unwrap()),
        format!("{:?}", finished.measured_front().unwrap()),
    );
    // The resumed journal is byte-identical apart from wall times.
    let resumed_text = std::fs::read_to_string(&truncated_path).unwrap();
    assert_eq!(strip_wall_times(&resumed_text), strip_wall_times(&full));
}

fn strip_wall_times(journal: &str) -> String {
    journal
        .lines()
        .map(|line| {
            let mut value: serde_json::Value = serde_json::from_str(line).unwrap();
            if let Some(obj) = value.as_object_mut() {
                obj.remove("wall_time_s");
            }
            value.to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn corrupt_middle_record_is_reported_with_last_valid() {
    let dir = tempfile::tempdir().unwrap();
    let path = journal_path(&dir);
    let space = small_space();
    run_journaled(&space, fast_options(8, 13), &path);
    let full = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = full.lines().map(str::to_string).collect();
    lines[3] = "{\"type\": \"sample\", \"garbage\"".to_string();
    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, lines.join("\n")).unwrap();

    match read_journal(&broken) {
        Err(JournalError::Corrupt { line, last_valid, .. }) => {
            assert_eq!(line, 4);
            assert!(last_valid.contains("sample"), "{last_valid}");
        }
        other => panic!("expected corrupt journal, got {other:?}"),
    }
    assert!(TuningSession::resume(&broken).is_err());
}

#[test]
fn trailing_partial_line_is_a_crash_remnant() {
    let dir = tempfile::tempdir().unwrap();
    let path = journal_path(&dir);
    let space = small_space();
    run_journaled(&space, fast_options(8, 13), &path);
    let full = std::fs::read_to_string(&path).unwrap();
    let cut = full.len() - 25;
    let partial = dir.path().join("partial.jsonl");
    std::fs::write(&partial, &full[..cut]).unwrap();

    let loaded = read_journal(&partial).unwrap();
    assert!(!loaded.clean);
    assert!(TuningSession::resume(&partial).is_ok());
}

#[test]
fn empty_and_headerless_journals_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert!(matches!(read_journal(&empty), Err(JournalError::MissingHeader)));

    let headerless = dir.path().join("headerless.jsonl");
    std::fs::write(&headerless, "{\"type\":\"status\",\"status\":\"converged\"}\n").unwrap();
    assert!(matches!(read_journal(&headerless), Err(JournalError::MissingHeader)));
}

#[test]
fn journal_records_reflect_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = journal_path(&dir);
    let space = small_space();
    let session = run_journaled(&space, fast_options(9, 17), &path);

    let loaded = read_journal(&path).unwrap();
    assert!(loaded.clean);
    assert_eq!(loaded.header.objectives, vec!["a".to_string(), "b".to_string()]);
    assert_eq!(loaded.header.evaluator, "test:fn");
    let samples = loaded.records.iter().filter(|r| matches!(r, Record::Sample(_))).count();
    assert_eq!(samples, session.samples().len());
    let statuses: Vec<&Record> =
        loaded.records.iter().filter(|r| matches!(r, Record::Status(_))).collect();
    assert_eq!(statuses.len(), 1);

    // Samples within each batch appear in canonical order.
    let mut per_batch: BTreeMap<String, Vec<Vec<u32>>> = BTreeMap::new();
    for record in &loaded.records {
        if let Record::Sample(s) = record {
            let config = session
                .space()
                .config_from_values(&s.config)
                .unwrap()
                .indices()
                .to_vec();
            per_batch.entry(format!("{:?}", s.source)).or_default().push(config);
        }
    }
    for (batch, configs) in per_batch {
        let mut sorted = configs.clone();
        sorted.sort();
        assert_eq!(configs, sorted, "batch {batch} out of canonical order");
    }
}

#[test]
fn existing_journal_is_not_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    let path = journal_path(&dir);
    let space = small_space();
    run_journaled(&space, fast_options(6, 0), &path);
    let evaluator = FnEvaluator::new(&space, conflict_surface);
    assert!(TuningSession::new(&space, &evaluator, fast_options(6, 0), Some(&path)).is_err());
}

#[test]
fn subgrid_session_against_brute_force_front() {
    // Measured front equals the pairwise-dominance oracle over the samples.
    let space = small_space();
    let mut evaluator = FnEvaluator::new(&space, conflict_surface);
    let session = run_session(&space, &mut evaluator, fast_options(20, 21), None).unwrap();
    let ok: Vec<(&paretotune::Configuration, &[f64])> = session
        .samples()
        .iter()
        .filter_map(|s| s.outcome.objectives().map(|o| (&s.config, o)))
        .collect();
    let brute: BTreeSet<Vec<u32>> = ok
        .iter()
        .filter(|(_, a)| {
            !ok.iter().any(|(_, b)| {
                paretotune::dominates(b, a).unwrap()
            })
        })
        .map(|(c, _)| c.indices().to_vec())
        .collect();
    let front: BTreeSet<Vec<u32>> = session
        .measured_front()
        .unwrap()
        .iter()
        .map(|e| e.config.indices().to_vec())
        .collect();
    assert_eq!(front, brute);
}
