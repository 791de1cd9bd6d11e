//! The evaluation boundary: builtin synthetic benchmark surfaces and a
//! subprocess protocol for tuning real external programs.
//!
//! # Wire protocol
//!
//! UTF-8, one JSON object per line, LF-terminated, over the child's
//! standard streams:
//!
//! ```text
//! -> {"id": 7, "config": {"mu": 0.1, "open_loop": false, ...}}
//! <- {"id": 7, "metrics": {"ate_m": 0.021, "runtime_s": 14.2}}
//! <- {"id": 8, "error": "diverged"}
//! ```
//!
//! The child must flush after each response line; EOF on its stdin signals
//! the end of a batch. Ids left unanswered when the child exits (or the
//! batch times out) become failed results; a malformed response line fails
//! only the id it names, and is ignored entirely when no id can be parsed.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde_json::Value as Json;
use thiserror::Error;

use crate::exec;
use crate::space::{Configuration, ParameterSpace, SpaceError};
use crate::spaces;

#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error("unknown builtin surface {0:?}")]
    UnknownSurface(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("space lacks parameter {0:?} required by the surface")]
    MissingParameter(String),
    #[error("parameter {param:?}: value {value} is not admissible for surface {surface}")]
    ValueOutsideSurface { param: String, value: String, surface: &'static str },
    #[error("empty evaluator command")]
    EmptyCommand,
    #[error("evaluator declares no objectives")]
    NoObjectives,
    #[error("failed to spawn evaluator {command:?}: {source}")]
    Spawn { command: String, source: std::io::Error },
}

/// A request to measure one configuration. Ids are unique and
/// monotonically increasing within a session.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRequest {
    pub id: u64,
    pub config: Configuration,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalOutcome {
    /// All declared objectives present and finite.
    Ok(BTreeMap<String, f64>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub id: u64,
    pub outcome: EvalOutcome,
}

/// Something that can measure batches of configurations.
pub trait Evaluator {
    /// Objective names, in session order.
    fn objectives(&self) -> &[String];

    /// One result per request, in request order.
    fn evaluate(&mut self, requests: &[EvaluationRequest])
        -> Result<Vec<EvaluationResult>, EvaluatorError>;

    /// Human-readable descriptor recorded in session journals.
    fn describe(&self) -> String;
}

/// The two bundled closed-form benchmark surfaces. Both are deterministic
/// and noise-free, with trigonometric ridges giving the non-convex,
/// multi-modal character of real dense-SLAM runtime responses, and
/// genuinely conflicting accuracy/runtime objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinSurface {
    SynthKfusion,
    SynthElasticfusion,
}

/// Objective names shared by both builtin surfaces, in session order.
pub const BUILTIN_OBJECTIVES: [&str; 2] = ["ate_m", "runtime_s"];

impl BuiltinSurface {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "synth-kfusion" => Some(BuiltinSurface::SynthKfusion),
            "synth-elasticfusion" => Some(BuiltinSurface::SynthElasticfusion),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BuiltinSurface::SynthKfusion => "synth-kfusion",
            BuiltinSurface::SynthElasticfusion => "synth-elasticfusion",
        }
    }

    /// The bundled space this surface is defined over.
    pub fn space(self) -> &'static ParameterSpace {
        match self {
            BuiltinSurface::SynthKfusion => spaces::synth_kfusion(),
            BuiltinSurface::SynthElasticfusion => spaces::synth_elasticfusion(),
        }
    }

    fn param_names(self) -> &'static [&'static str] {
        match self {
            BuiltinSurface::SynthKfusion => &[
                "volume_resolution",
                "compute_size_ratio",
                "tracking_rate",
                "integration_rate",
                "mu",
                "icp_threshold",
                "pyramid_level1",
                "pyramid_level2",
                "pyramid_level3",
            ],
            BuiltinSurface::SynthElasticfusion => &[
                "icp_rgb_weight",
                "depth_cutoff",
                "confidence",
                "so3_disabled",
                "open_loop",
                "relocalisation",
                "fast_odometry",
                "ftf_rgb",
            ],
        }
    }

    /// Metrics `[ate_m, runtime_s]` from parameter values in
    /// `param_names` order; booleans are 0/1.
    fn compute(self, x: &[f64]) -> [f64; 2] {
        match self {
            BuiltinSurface::SynthKfusion => {
                let (v, r, t, g, m, e) = (x[0], x[1], x[2], x[3], x[4], x[5]);
                let (p1, p2, p3) = (x[6], x[7], x[8]);
                let runtime_s = 0.008 * (v / 64.0).powi(3) / r
                    + 0.002 * (p1 + 2.0 * p2 + 4.0 * p3) / r
                    + 0.010 / g
                    + 0.006 / t
                    + 0.020 * (1.0 + (200.0 * m).sin() * (1000.0 * e).cos());
                let ate_m = 0.012 * (256.0 / v).sqrt()
                    + 0.006 * (r - 1.0)
                    + 0.004 * (t - 1.0)
                    + 0.003 * (g - 1.0)
                    + 0.080 * (m - 0.100).abs()
                    + 2.0 * (e - 0.005).abs()
                    + 0.002 * (9.0 - p1 - p2 - p3).max(0.0)
                    + 0.005 * (1.0 + (150.0 * m + 800.0 * e).cos());
                [ate_m, runtime_s]
            }
            BuiltinSurface::SynthElasticfusion => {
                let (w, d, c) = (x[0], x[1], x[2]);
                let (s, o, l, f, b) = (x[3], x[4], x[5], x[6], x[7]);
                let runtime_s = 10.0 + 0.6 * w.sqrt() + 0.4 * d + 0.3 * c - 3.0 * f - 1.5 * s
                    + 2.0 * b
                    + 1.0 * (1.0 - o)
                    + 0.5 * (1.0 + (3.0 * w).sin() * (2.0 * d).cos());
                let ate_m = 0.020
                    + 0.004 * (w - 2.0).abs()
                    + 0.003 * (d - 10.0).abs()
                    + 0.002 * (c - 4.0).abs()
                    + 0.010 * s * f * 0.5
                    + 0.008 * o
                    + 0.006 * (1.0 - l)
                    + 0.004 * b
                    + 0.003 * (1.0 + (2.0 * w + d).cos()) * 0.5;
                [ate_m, runtime_s]
            }
        }
    }
}

/// Evaluate one configuration of the named bundled space directly.
pub fn evaluate_builtin(
    name: &str,
    config: &Configuration,
) -> Result<BTreeMap<String, f64>, EvaluatorError> {
    let surface =
        BuiltinSurface::from_name(name).ok_or_else(|| EvaluatorError::UnknownSurface(name.into()))?;
    let mut evaluator = BuiltinEvaluator::new(surface, surface.space())?;
    let request = EvaluationRequest { id: 0, config: config.clone() };
    let mut results = evaluator.evaluate(std::slice::from_ref(&request))?;
    match results.pop().expect("one result per request").outcome {
        EvalOutcome::Ok(metrics) => Ok(metrics),
        EvalOutcome::Failed(reason) => Err(SpaceError::InvalidConfiguration(reason).into()),
    }
}

/// Adapter running a builtin surface over a session space — either the
/// bundled space itself or a restriction of it (same parameter names,
/// values a subset of the bundled grids). Extra parameters in the session
/// space are ignored by the formulas.
pub struct BuiltinEvaluator {
    surface: BuiltinSurface,
    space: ParameterSpace,
    positions: Vec<usize>,
    objectives: Vec<String>,
}

impl BuiltinEvaluator {
    pub fn new(surface: BuiltinSurface, space: &ParameterSpace) -> Result<Self, EvaluatorError> {
        let canonical = surface.space();
        let mut positions = Vec::new();
        for name in surface.param_names() {
            let (pos, spec) = space
                .param(name)
                .ok_or_else(|| EvaluatorError::MissingParameter(name.to_string()))?;
            let (_, canonical_spec) = canonical.param(name).expect("bundled space has it");
            for idx in 0..spec.value_count() {
                let value = spec.value_at(idx);
                if canonical_spec.index_of(&value).is_none() {
                    return Err(EvaluatorError::ValueOutsideSurface {
                        param: name.to_string(),
                        value: value.to_string(),
                        surface: surface.name(),
                    });
                }
            }
            positions.push(pos);
        }
        Ok(BuiltinEvaluator {
            surface,
            space: space.clone(),
            positions,
            objectives: BUILTIN_OBJECTIVES.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn evaluate_one(&self, config: &Configuration) -> Result<BTreeMap<String, f64>, SpaceError> {
        self.space.validate(config)?;
        let x: Vec<f64> = self
            .positions
            .iter()
            .map(|&pos| {
                self.space
                    .value_of(config, pos)
                    .as_f64()
                    .expect("surface parameters are numeric")
            })
            .collect();
        let [ate_m, runtime_s] = self.surface.compute(&x);
        let mut metrics = BTreeMap::new();
        metrics.insert("ate_m".to_string(), ate_m);
        metrics.insert("runtime_s".to_string(), runtime_s);
        Ok(metrics)
    }
}

impl Evaluator for BuiltinEvaluator {
    fn objectives(&self) -> &[String] {
        &self.objectives
    }

    fn evaluate(
        &mut self,
        requests: &[EvaluationRequest],
    ) -> Result<Vec<EvaluationResult>, EvaluatorError> {
        Ok(exec::map_slice(requests, |request| EvaluationResult {
            id: request.id,
            outcome: match self.evaluate_one(&request.config) {
                Ok(metrics) => EvalOutcome::Ok(metrics),
                Err(e) => EvalOutcome::Failed(e.to_string()),
            },
        }))
    }

    fn describe(&self) -> String {
        format!("builtin:{}", self.surface.name())
    }
}

/// Evaluator driving an external command over the line-delimited JSON
/// protocol: one child process per batch (or per sub-batch when
/// `parallelism > 1`).
pub struct SubprocessEvaluator {
    command: Vec<String>,
    objectives: Vec<String>,
    space: ParameterSpace,
    timeout: Duration,
    parallelism: usize,
}

impl SubprocessEvaluator {
    pub fn new(
        command: Vec<String>,
        objectives: Vec<String>,
        space: &ParameterSpace,
    ) -> Result<Self, EvaluatorError> {
        if command.is_empty() {
            return Err(EvaluatorError::EmptyCommand);
        }
        if objectives.is_empty() {
            return Err(EvaluatorError::NoObjectives);
        }
        Ok(SubprocessEvaluator {
            command,
            objectives,
            space: space.clone(),
            timeout: Duration::from_secs(3600),
            parallelism: 1,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    fn request_line(&self, request: &EvaluationRequest) -> String {
        let config = self.space.values_map(&request.config);
        serde_json::json!({ "id": request.id, "config": config }).to_string()
    }

    fn run_child(&self, requests: &[EvaluationRequest]) -> Result<Vec<EvaluationResult>, EvaluatorError> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| EvaluatorError::Spawn {
                command: self.command.join(" "),
                source,
            })?;

        let lines: Vec<String> = requests.iter().map(|r| self.request_line(r)).collect();
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || {
            for line in lines {
                // A child that exits early breaks the pipe; the missing
                // ids are reported as failures below.
                if stdin.write_all(line.as_bytes()).is_err() {
                    return;
                }
                if stdin.write_all(b"\n").is_err() {
                    return;
                }
            }
            let _ = stdin.flush();
        });

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel::<String>();
        let reader = std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(line) => {
                        if tx.send(line).is_err() {
                            return;
                        }
                    }
                    Err(_) => return,
                }
            }
        });

        let mut responses: HashMap<u64, Result<BTreeMap<String, f64>, String>> = HashMap::new();
        let deadline = Instant::now() + self.timeout;
        let mut timed_out = false;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(remaining) {
                Ok(line) => {
                    if let Some((id, outcome)) = parse_response_line(&line) {
                        responses.entry(id).or_insert(outcome);
                    }
                }
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
                Err(mpsc::RecvTimeoutError::Timeout) => {
                    timed_out = true;
                    let _ = child.kill();
                    break;
                }
            }
        }
        let _ = writer.join();
        let _ = reader.join();
        let _ = child.wait();

        Ok(requests
            .iter()
            .map(|request| {
                let outcome = match responses.remove(&request.id) {
                    Some(Ok(metrics)) => self.check_metrics(metrics),
                    Some(Err(reason)) => EvalOutcome::Failed(reason),
                    None if timed_out => EvalOutcome::Failed(format!(
                        "no response within {:.1}s",
                        self.timeout.as_secs_f64()
                    )),
                    None => EvalOutcome::Failed("no response from evaluator".to_string()),
                };
                EvaluationResult { id: request.id, outcome }
            })
            .collect())
    }

    fn check_metrics(&self, metrics: BTreeMap<String, f64>) -> EvalOutcome {
        for objective in &self.objectives {
            match metrics.get(objective) {
                Some(v) if v.is_finite() => {}
                Some(_) => {
                    return EvalOutcome::Failed(format!("non-finite objective {objective:?}"))
                }
                None => return EvalOutcome::Failed(format!("missing objective {objective:?}")),
            }
        }
        EvalOutcome::Ok(metrics)
    }
}

type ParsedResponse = (u64, Result<BTreeMap<String, f64>, String>);

fn parse_response_line(line: &str) -> Option<ParsedResponse> {
    let value: Json = serde_json::from_str(line).ok()?;
    let id = value.get("id")?.as_u64()?;
    if let Some(error) = value.get("error") {
        let reason = error.as_str().unwrap_or("evaluator error").to_string();
        return Some((id, Err(reason)));
    }
    let Some(metrics_obj) = value.get("metrics").and_then(Json::as_object) else {
        return Some((id, Err("malformed response line".to_string())));
    };
    let mut metrics = BTreeMap::new();
    for (key, raw) in metrics_obj {
        match raw.as_f64() {
            Some(v) => {
                metrics.insert(key.clone(), v);
            }
            None => return Some((id, Err(format!("non-numeric metric {key:?}")))),
        }
    }
    Some((id, Ok(metrics)))
}

impl Evaluator for SubprocessEvaluator {
    fn objectives(&self) -> &[String] {
        &self.objectives
    }

    fn evaluate(
        &mut self,
        requests: &[EvaluationRequest],
    ) -> Result<Vec<EvaluationResult>, EvaluatorError> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        if self.parallelism <= 1 || requests.len() <= 1 {
            return self.run_child(requests);
        }
        let chunk_size = requests.len().div_ceil(self.parallelism);
        let chunks: Vec<&[EvaluationRequest]> = requests.chunks(chunk_size).collect();
        let mut outputs: Vec<Result<Vec<EvaluationResult>, EvaluatorError>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| scope.spawn(|| self.run_child(chunk)))
                .collect();
            for handle in handles {
                outputs.push(handle.join().expect("evaluator thread panicked"));
            }
        });
        let mut results = Vec::with_capacity(requests.len());
        for output in outputs {
            results.extend(output?);
        }
        Ok(results)
    }

    fn describe(&self) -> String {
        format!("cmd:{}", self.command.join(" "))
    }
}

/// One-shot batch evaluation over the subprocess protocol.
pub fn evaluate_subprocess(
    command: Vec<String>,
    objectives: Vec<String>,
    space: &ParameterSpace,
    requests: &[EvaluationRequest],
    timeout: Duration,
) -> Result<Vec<EvaluationResult>, EvaluatorError> {
    SubprocessEvaluator::new(command, objectives, space)?
        .with_timeout(timeout)
        .evaluate(requests)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn kfusion_config(values: &[(&str, Json)]) -> Configuration {
        let map: BTreeMap<String, Json> =
            values.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        spaces::synth_kfusion().config_from_values(&map).unwrap()
    }

    #[test]
    fn kfusion_formula_matches_direct_transcription() {
        let config = kfusion_config(&[
            ("volume_resolution", Json::from(64)),
            ("compute_size_ratio", Json::from(8)),
            ("tracking_rate", Json::from(5)),
            ("integration_rate", Json::from(5)),
            ("mu", Json::from(0.25)),
            ("icp_threshold", Json::from(0.010)),
            ("pyramid_level1", Json::from(1)),
            ("pyramid_level2", Json::from(1)),
            ("pyramid_level3", Json::from(1)),
        ]);
        let metrics = evaluate_builtin("synth-kfusion", &config).unwrap();
        let runtime = 0.001 + 0.00175 + 0.002 + 0.0012
            + 0.020 * (1.0 + 50.0f64.sin() * 10.0f64.cos());
        let ate = 0.012 * 2.0 + 0.006 * 7.0 + 0.004 * 4.0 + 0.003 * 4.0 + 0.080 * 0.15
            + 2.0 * 0.005
            + 0.002 * 6.0
            + 0.005 * (1.0 + (150.0 * 0.25 + 8.0f64).cos());
        assert!((metrics["runtime_s"] - runtime).abs() < 1e-15, "{metrics:?}");
        assert!((metrics["ate_m"] - ate).abs() < 1e-15, "{metrics:?}");
    }

    #[test]
    fn elasticfusion_formula_matches_direct_transcription() {
        let space = spaces::synth_elasticfusion();
        let mut values = BTreeMap::new();
        for name in ["icp_rgb_weight", "depth_cutoff", "confidence"] {
            values.insert(name.to_string(), Json::from(0.5));
        }
        for name in ["so3_disabled", "open_loop", "relocalisation", "fast_odometry", "ftf_rgb"] {
            values.insert(name.to_string(), Json::from(false));
        }
        let config = space.config_from_values(&values).unwrap();
        let metrics = evaluate_builtin("synth-elasticfusion", &config).unwrap();
        let runtime = 10.0 + 0.6 * 0.5f64.sqrt() + 0.4 * 0.5 + 0.3 * 0.5 + 1.0
            + 0.5 * (1.0 + 1.5f64.sin() * 1.0f64.cos());
        let ate = 0.020 + 0.004 * 1.5 + 0.003 * 9.5 + 0.002 * 3.5 + 0.006
            + 0.003 * (1.0 + 1.5f64.cos()) * 0.5;
        assert!((metrics["runtime_s"] - runtime).abs() < 1e-15);
        assert!((metrics["ate_m"] - ate).abs() < 1e-15);
    }

    #[test]
    fn builtin_evaluation_is_deterministic() {
        let space = spaces::synth_kfusion();
        let config = space.config_from_rank(123_456);
        assert_eq!(
            evaluate_builtin("synth-kfusion", &config).unwrap(),
            evaluate_builtin("synth-kfusion", &config).unwrap()
        );
    }

    #[test]
    fn unknown_surface_is_an_error() {
        let config = spaces::synth_kfusion().config_from_rank(0);
        assert!(matches!(
            evaluate_builtin("synth-slam", &config),
            Err(EvaluatorError::UnknownSurface(_))
        ));
    }

    #[test]
    fn invalid_config_is_an_error() {
        let foreign = spaces::synth_elasticfusion().config_from_rank(0);
        assert!(evaluate_builtin("synth-kfusion", &foreign).is_err());
    }

    #[test]
    fn surfaces_are_positive_everywhere() {
        let ef = spaces::synth_elasticfusion();
        let evaluator = BuiltinEvaluator::new(BuiltinSurface::SynthElasticfusion, ef).unwrap();
        for config in ef.enumerate() {
            let metrics = evaluator.evaluate_one(&config).unwrap();
            assert!(metrics["runtime_s"] > 0.0 && metrics["ate_m"] > 0.0);
        }

        let kf = spaces::synth_kfusion();
        let sample = kf.sample_random(100_000, 7).unwrap();
        let evaluator = BuiltinEvaluator::new(BuiltinSurface::SynthKfusion, kf).unwrap();
        for config in &sample {
            let metrics = evaluator.evaluate_one(config).unwrap();
            assert!(metrics["runtime_s"] > 0.0 && metrics["ate_m"] > 0.0);
        }
    }

    /// Runtime over the (mu, icp_threshold) plane with every other
    /// parameter at its minimum is multi-modal: at least four strict local
    /// minima under the 8-neighbourhood definition.
    #[test]
    fn runtime_plane_is_multimodal() {
        let mus = [0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2, 0.225, 0.25];
        let icps = [0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007, 0.008, 0.009, 0.01];
        let mut grid = [[0.0f64; 10]; 10];
        for (i, &mu) in mus.iter().enumerate() {
            for (j, &icp) in icps.iter().enumerate() {
                let config = kfusion_config(&[
                    ("volume_resolution", Json::from(64)),
                    ("compute_size_ratio", Json::from(1)),
                    ("tracking_rate", Json::from(1)),
                    ("integration_rate", Json::from(1)),
                    ("mu", Json::from(mu)),
                    ("icp_threshold", Json::from(icp)),
                    ("pyramid_level1", Json::from(1)),
                    ("pyramid_level2", Json::from(1)),
                    ("pyramid_level3", Json::from(1)),
                ]);
                grid[i][j] = evaluate_builtin("synth-kfusion", &config).unwrap()["runtime_s"];
            }
        }
        let mut minima = 0;
        for i in 0..10i32 {
            for j in 0..10i32 {
                let mut strict = true;
                for di in -1..=1 {
                    for dj in -1..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (ni, nj) = (i + di, j + dj);
                        if (0..10).contains(&ni)
                            && (0..10).contains(&nj)
                            && grid[ni as usize][nj as usize] <= grid[i as usize][j as usize]
                        {
                            strict = false;
                        }
                    }
                }
                if strict {
                    minima += 1;
                }
            }
        }
        assert!(minima >= 4, "only {minima} strict local minima");
    }

    #[test]
    fn subprocess_round_trip_with_python_mock() {
        let space = spaces::synth_elasticfusion();
        let script = r#"
import sys, json
for line in sys.stdin:
    req = json.loads(line)
    w = req["config"]["icp_rgb_weight"]
    print(json.dumps({"id": req["id"], "metrics": {"a": w, "b": 2.0}}), flush=True)
"#;
        let mut evaluator = SubprocessEvaluator::new(
            vec!["python3".into(), "-c".into(), script.into()],
            vec!["a".into(), "b".into()],
            space,
        )
        .unwrap();
        let requests: Vec<EvaluationRequest> = (0..20)
            .map(|i| EvaluationRequest { id: i, config: space.config_from_rank(i as u128 * 999) })
            .collect();
        let results = evaluator.evaluate(&requests).unwrap();
        assert_eq!(results.len(), 20);
        for (request, result) in requests.iter().zip(&results) {
            assert_eq!(request.id, result.id);
            let expected =
                space.value_of(&request.config, 0).as_f64().unwrap();
            match &result.outcome {
                EvalOutcome::Ok(metrics) => {
                    assert_eq!(metrics["a"], expected);
                    assert_eq!(metrics["b"], 2.0);
                }
                EvalOutcome::Failed(reason) => panic!("unexpected failure: {reason}"),
            }
        }
    }

    #[test]
    fn error_lines_fail_only_their_id() {
        let space = spaces::synth_elasticfusion();
        let script = r#"
import sys, json
for line in sys.stdin:
    req = json.loads(line)
    if req["id"] == 7:
        print(json.dumps({"id": 7, "error": "diverged"}), flush=True)
    elif req["id"] == 3:
        print("not json at all", flush=True)
    else:
        print(json.dumps({"id": req["id"], "metrics": {"m": 1.0}}), flush=True)
"#;
        let mut evaluator = SubprocessEvaluator::new(
            vec!["python3".into(), "-c".into(), script.into()],
            vec!["m".into()],
            space,
        )
        .unwrap();
        let requests: Vec<EvaluationRequest> = (0..10)
            .map(|i| EvaluationRequest { id: i, config: space.config_from_rank(i as u128) })
            .collect();
        let results = evaluator.evaluate(&requests).unwrap();
        for result in &results {
            match result.id {
                7 => assert_eq!(result.outcome, EvalOutcome::Failed("diverged".into())),
                3 => assert!(matches!(result.outcome, EvalOutcome::Failed(_))),
                _ => assert!(matches!(result.outcome, EvalOutcome::Ok(_))),
            }
        }
    }

    #[test]
    fn timeout_fails_unanswered_ids() {
        let space = spaces::synth_elasticfusion();
        let mut evaluator = SubprocessEvaluator::new(
            vec!["sleep".into(), "5".into()],
            vec!["m".into()],
            space,
        )
        .unwrap()
        .with_timeout(Duration::from_millis(200));
        let requests =
            vec![EvaluationRequest { id: 0, config: space.config_from_rank(0) }];
        let started = Instant::now();
        let results = evaluator.evaluate(&requests).unwrap();
        assert!(started.elapsed() < Duration::from_secs(3));
        assert!(matches!(results[0].outcome, EvalOutcome::Failed(_)));
    }

    #[test]
    fn spawn_failure_is_a_batch_error() {
        let space = spaces::synth_elasticfusion();
        let mut evaluator = SubprocessEvaluator::new(
            vec!["/nonexistent/evaluator".into()],
            vec!["m".into()],
            space,
        )
        .unwrap();
        let requests =
            vec![EvaluationRequest { id: 0, config: space.config_from_rank(0) }];
        assert!(matches!(
            evaluator.evaluate(&requests),
            Err(EvaluatorError::Spawn { .. })
        ));
    }

    #[test]
    fn results_are_a_permutation_invariant_function_of_the_request_set() {
        let space = spaces::synth_elasticfusion();
        let script = r#"
import sys, json
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "metrics": {"m": float(req["id"]) * 0.5}}), flush=True)
"#;
        let mut evaluator = SubprocessEvaluator::new(
            vec!["python3".into(), "-c".into(), script.into()],
            vec!["m".into()],
            space,
        )
        .unwrap();
        let requests: Vec<EvaluationRequest> = (0..12)
            .map(|i| EvaluationRequest { id: i, config: space.config_from_rank(i as u128 * 7) })
            .collect();
        let forward: HashSet<String> = evaluator
            .evaluate(&requests)
            .unwrap()
            .iter()
            .map(|r| format!("{r:?}"))
            .collect();
        let mut reversed = requests.clone();
        reversed.reverse();
        let backward: HashSet<String> = evaluator
            .evaluate(&reversed)
            .unwrap()
            .iter()
            .map(|r| format!("{r:?}"))
            .collect();
        assert_eq!(forward, backward);
    }

    #[test]
    fn parallel_sub_batches_preserve_request_order() {
        let space = spaces::synth_elasticfusion();
        let script = r#"
import sys, json
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "metrics": {"m": 1.0}}), flush=True)
"#;
        let mut evaluator = SubprocessEvaluator::new(
            vec!["python3".into(), "-c".into(), script.into()],
            vec!["m".into()],
            space,
        )
        .unwrap()
        .with_parallelism(3);
        let requests: Vec<EvaluationRequest> = (0..10)
            .map(|i| EvaluationRequest { id: i, config: space.config_from_rank(i as u128) })
            .collect();
        let results = evaluator.evaluate(&requests).unwrap();
        let ids: Vec<u64> = results.iter().map(|r| r.id).collect();
        assert_eq!(ids, (0..10).collect::<Vec<u64>>());
    }
}
