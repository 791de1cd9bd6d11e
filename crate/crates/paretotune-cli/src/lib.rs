//! Command-line front door for the tuner: define spaces, run tuning
//! sessions, extract measured fronts, and emit report/plot data.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 evaluator failure,
//! 4 corrupt journal.

pub mod report;
mod stub;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use paretotune::evaluator::{BuiltinSurface, EvaluatorError};
use paretotune::optimizer::{JournalError, SessionError, TuningSession};
use paretotune::pareto::{filter_valid, front_to_csv, pareto_front, FrontEntry, Provenance};
use paretotune::space::ParameterSpace;
use paretotune::{BuiltinEvaluator, Evaluator, Sample, SessionOptions, SubprocessEvaluator};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_EVALUATOR: i32 = 3;
pub const EXIT_JOURNAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::Evaluator(_) | SessionError::TooManyFailures { .. } => EXIT_EVALUATOR,
            SessionError::Journal(_) => EXIT_JOURNAL,
            SessionError::Surrogate(_) => 1,
            _ => EXIT_USAGE,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<paretotune::space::SpaceError> for CliError {
    fn from(e: paretotune::space::SpaceError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<EvaluatorError> for CliError {
    fn from(e: EvaluatorError) -> Self {
        CliError { code: EXIT_EVALUATOR, message: e.to_string() }
    }
}

impl From<JournalError> for CliError {
    fn from(e: JournalError) -> Self {
        CliError { code: EXIT_JOURNAL, message: e.to_string() }
    }
}

impl From<paretotune::pareto::ParetoError> for CliError {
    fn from(e: paretotune::pareto::ParetoError) -> Self {
        CliError::usage(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "paretotune",
    version,
    about = "Multi-objective black-box auto-tuner: forest surrogates + Pareto active learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a full tuning session and write journal, front and summary.
    Tune(TuneArgs),
    /// Draw distinct uniform configurations (optionally evaluated) as CSV.
    Sample(SampleArgs),
    /// Extract the measured Pareto front of a session journal as CSV.
    Pareto(ParetoArgs),
    /// Summarise a session journal: front size, hypervolume, speedups.
    Report(ReportArgs),
    /// Serve a builtin surface over the line-delimited evaluator protocol.
    Evaluate(stub::EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    /// Space-definition file.
    #[arg(long)]
    pub space: PathBuf,
    /// `builtin:<name>` or `cmd:"<command line>"`.
    #[arg(long)]
    pub evaluator: String,
    /// Objective names, required for `cmd:` evaluators.
    #[arg(long, value_delimiter = ',')]
    pub objectives: Vec<String>,
    /// Bootstrap random batch size.
    #[arg(long, default_value_t = 3000)]
    pub rs: usize,
    #[arg(long, default_value_t = 10)]
    pub max_iters: usize,
    /// Per-iteration cap on new evaluations; 0 means unlimited.
    #[arg(long, default_value_t = 500)]
    pub cap: usize,
    /// Total evaluation budget including the bootstrap.
    #[arg(long)]
    pub budget: Option<usize>,
    /// RNG seed; falls back to $PARETOTUNE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for session.jsonl, front.csv, points.csv, summary.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Validity bound "objective<value"; repeatable.
    #[arg(long = "valid")]
    pub valid: Vec<String>,
    #[arg(long, default_value_t = 2_000_000)]
    pub pool_cap: usize,
    /// Evaluator-side parallelism within a batch.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Per-batch timeout for cmd: evaluators, seconds.
    #[arg(long, default_value_t = 3600.0)]
    pub eval_timeout_s: f64,
    /// Continue an interrupted session found in --out.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optional evaluator; adds metric columns.
    #[arg(long)]
    pub evaluator: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub objectives: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long, default_value_t = 3600.0)]
    pub eval_timeout_s: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ParetoArgs {
    /// Session journal.
    #[arg(long)]
    pub samples: PathBuf,
    /// Validity bounds; defaults to the journal's own thresholds.
    #[arg(long = "valid")]
    pub valid: Vec<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Session journal.
    #[arg(long)]
    pub samples: PathBuf,
    /// Hypervolume reference point "v1,v2"; defaults to the componentwise
    /// max over valid samples.
    #[arg(long, value_delimiter = ',')]
    pub r#ref: Vec<f64>,
    /// Default-configuration file (JSON name->value map); defaults to the
    /// space's declared defaults.
    #[arg(long)]
    pub default: Option<PathBuf>,
    /// Evaluator used when the default configuration is not in the journal.
    #[arg(long)]
    pub evaluator: Option<String>,
    #[arg(long = "valid")]
    pub valid: Vec<String>,
    #[arg(long, value_enum, default_value_t = report::Format::Table)]
    pub format: report::Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Tune(args) => cmd_tune(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Pareto(args) => cmd_pareto(args),
        Command::Report(args) => cmd_report(args),
        Command::Evaluate(args) => stub::cmd_evaluate(args),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("PARETOTUNE_SEED") {
        Ok(raw) => raw
            .parse::<u64>()
            .map_err(|_| CliError::usage(format!("PARETOTUNE_SEED is not a u64: {raw:?}"))),
        Err(_) => Ok(0),
    }
}

fn load_space(path: &Path) -> Result<ParameterSpace, CliError> {
    let doc = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read space file {}: {e}", path.display())))?;
    Ok(ParameterSpace::parse(&doc)?)
}

fn build_evaluator(
    spec: &str,
    space: &ParameterSpace,
    objectives: &[String],
    parallel: usize,
    timeout_s: f64,
) -> Result<Box<dyn Evaluator>, CliError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let surface = BuiltinSurface::from_name(name)
            .ok_or_else(|| CliError::usage(format!("unknown builtin surface {name:?}")))?;
        let evaluator = BuiltinEvaluator::new(surface, space)?;
        if !objectives.is_empty() && objectives != evaluator.objectives() {
            return Err(CliError::usage(format!(
                "builtin surface {name} answers {:?}, not {objectives:?}",
                evaluator.objectives()
            )));
        }
        return Ok(Box::new(evaluator));
    }
    if let Some(command_line) = spec.strip_prefix("cmd:") {
        if objectives.is_empty() {
            return Err(CliError::usage("cmd: evaluators require --objectives"));
        }
        let argv = shlex::split(command_line)
            .ok_or_else(|| CliError::usage(format!("unparseable command {command_line:?}")))?;
        let evaluator = SubprocessEvaluator::new(argv, objectives.to_vec(), space)?
            .with_timeout(Duration::from_secs_f64(timeout_s))
            .with_parallelism(parallel);
        return Ok(Box::new(evaluator));
    }
    Err(CliError::usage(format!(
        "--evaluator must be builtin:<name> or cmd:\"...\", got {spec:?}"
    )))
}

/// Parse one `--valid "objective<value"` flag.
fn parse_valid(raw: &str) -> Result<(String, f64), CliError> {
    let Some((name, value)) = raw.split_once('<') else {
        return Err(CliError::usage(format!(
            "--valid expects \"<objective><<value>\" (strict upper bound), got {raw:?}"
        )));
    };
    let bound = value
        .trim()
        .parse::<f64>()
        .map_err(|_| CliError::usage(format!("--valid bound is not a number: {raw:?}")))?;
    Ok((name.trim().to_string(), bound))
}

fn parse_thresholds(flags: &[String]) -> Result<Option<BTreeMap<String, f64>>, CliError> {
    if flags.is_empty() {
        return Ok(None);
    }
    let mut thresholds = BTreeMap::new();
    for flag in flags {
        let (name, bound) = parse_valid(flag)?;
        thresholds.insert(name, bound);
    }
    Ok(Some(thresholds))
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError { code: 1, message: format!("cannot write {}: {e}", path.display()) }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_tune(args: TuneArgs) -> Result<(), CliError> {
    let space = load_space(&args.space)?;
    let mut evaluator = build_evaluator(
        &args.evaluator,
        &space,
        &args.objectives,
        args.parallel,
        args.eval_timeout_s,
    )?;
    let options = SessionOptions {
        random_samples: args.rs,
        max_iterations: args.max_iters,
        per_iteration_cap: if args.cap == 0 { None } else { Some(args.cap) },
        total_budget: args.budget,
        pool_cap: args.pool_cap,
        validity_thresholds: parse_thresholds(&args.valid)?,
        seed: resolve_seed(args.seed)?,
        ..SessionOptions::default()
    };

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", args.out.display())))?;
    let journal_path = args.out.join("session.jsonl");

    let mut session = if journal_path.exists() {
        if !args.resume {
            return Err(CliError::usage(format!(
                "{} already holds a session journal; pass --resume to continue it or pick a new --out",
                journal_path.display()
            )));
        }
        TuningSession::resume(&journal_path)?
    } else {
        TuningSession::new(&space, evaluator.as_ref(), options, Some(&journal_path))?
    };
    session.run(evaluator.as_mut())?;

    let front = session.measured_front()?;
    let front_csv = front_to_csv(session.space(), session.objectives(), &front);
    std::fs::write(args.out.join("front.csv"), front_csv)
        .map_err(|e| CliError { code: 1, message: format!("cannot write front.csv: {e}") })?;

    let points_csv = points_to_csv(session.space(), session.objectives(), session.samples());
    std::fs::write(args.out.join("points.csv"), points_csv)
        .map_err(|e| CliError { code: 1, message: format!("cannot write points.csv: {e}") })?;

    let summary = report::summarize(
        session.space(),
        session.objectives(),
        session.samples(),
        session.options().validity_thresholds.as_ref(),
        None,
        report::DefaultSource::SpaceDefaults,
        Some(evaluator.as_mut()),
    )?;
    let summary_json = serde_json::to_string_pretty(&summary).expect("summary serialises");
    std::fs::write(args.out.join("summary.json"), summary_json)
        .map_err(|e| CliError { code: 1, message: format!("cannot write summary.json: {e}") })?;

    eprintln!(
        "session {:?}: {} samples, front of {} ({} iterations)",
        session.status(),
        session.samples().len(),
        front.len(),
        session.iterations().len(),
    );
    Ok(())
}

/// All evaluated samples, tagged by source, for plotting the
/// random-vs-active-learning split.
fn points_to_csv(space: &ParameterSpace, objectives: &[String], samples: &[Sample]) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = space.params().iter().map(|p| p.name().to_string()).collect();
    header.extend(objectives.iter().cloned());
    header.push("source".into());
    header.push("error".into());
    push_csv_row(&mut out, &header);
    for sample in samples {
        let mut row: Vec<String> =
            (0..space.len()).map(|i| space.value_of(&sample.config, i).to_string()).collect();
        match sample.outcome.objectives() {
            Some(values) => row.extend(values.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), objectives.len())),
        }
        row.push(sample.source.label());
        row.push(match &sample.outcome {
            paretotune::SampleOutcome::Failed(reason) => reason.clone(),
            _ => String::new(),
        });
        push_csv_row(&mut out, &row);
    }
    out
}

fn push_csv_row(out: &mut String, cells: &[String]) {
    for (i, cell) in cells.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
            out.push('"');
            out.push_str(&cell.replace('"', "\"\""));
            out.push('"');
        } else {
            out.push_str(cell);
        }
    }
    out.push('\n');
}

fn cmd_sample(args: SampleArgs) -> Result<(), CliError> {
    let space = load_space(&args.space)?;
    let seed = resolve_seed(args.seed)?;
    let configs = space.sample_random(args.n, seed)?;

    let evaluator = match &args.evaluator {
        Some(spec) => Some(build_evaluator(
            spec,
            &space,
            &args.objectives,
            args.parallel,
            args.eval_timeout_s,
        )?),
        None => None,
    };

    let mut out = String::new();
    let mut header: Vec<String> = space.params().iter().map(|p| p.name().to_string()).collect();
    let objective_names: Vec<String> =
        evaluator.as_ref().map(|e| e.objectives().to_vec()).unwrap_or_default();
    header.extend(objective_names.iter().cloned());
    if evaluator.is_some() {
        header.push("error".into());
    }
    push_csv_row(&mut out, &header);

    let results = match evaluator {
        Some(mut evaluator) => {
            let requests: Vec<paretotune::EvaluationRequest> = configs
                .iter()
                .enumerate()
                .map(|(i, config)| paretotune::EvaluationRequest {
                    id: i as u64,
                    config: config.clone(),
                })
                .collect();
            Some(evaluator.evaluate(&requests)?)
        }
        None => None,
    };

    for (i, config) in configs.iter().enumerate() {
        let mut row: Vec<String> =
            (0..space.len()).map(|j| space.value_of(config, j).to_string()).collect();
        if let Some(results) = &results {
            match &results[i].outcome {
                paretotune::evaluator::EvalOutcome::Ok(metrics) => {
                    for name in &objective_names {
                        row.push(metrics[name].to_string());
                    }
                    row.push(String::new());
                }
                paretotune::evaluator::EvalOutcome::Failed(reason) => {
                    row.extend(std::iter::repeat_n(String::new(), objective_names.len()));
                    row.push(reason.clone());
                }
            }
        }
        push_csv_row(&mut out, &row);
    }
    write_or_print(args.out.as_deref(), &out)
}

/// Measured front of arbitrary samples under optional validity thresholds.
pub fn measured_front_of(
    samples: &[Sample],
    objectives: &[String],
    thresholds: Option<&BTreeMap<String, f64>>,
) -> Result<Vec<FrontEntry>, CliError> {
    let kept: Vec<Sample> = match thresholds {
        Some(thresholds) => filter_valid(samples, objectives, thresholds)?,
        None => samples.iter().filter(|s| s.outcome.is_ok()).cloned().collect(),
    };
    let points: Vec<(paretotune::Configuration, Vec<f64>)> = kept
        .iter()
        .map(|s| (s.config.clone(), s.outcome.objectives().expect("ok").to_vec()))
        .collect();
    let keys = pareto_front(&points)?;
    let by_key: BTreeMap<&paretotune::Configuration, &[f64]> =
        points.iter().map(|(c, o)| (c, o.as_slice())).collect();
    Ok(keys
        .into_iter()
        .map(|config| FrontEntry {
            objectives: by_key[&config].to_vec(),
            config,
            provenance: Provenance::Measured,
        })
        .collect())
}

fn load_session(path: &Path) -> Result<TuningSession, CliError> {
    if !path.exists() {
        return Err(CliError::usage(format!("journal {} does not exist", path.display())));
    }
    Ok(TuningSession::resume(path)?)
}

fn cmd_pareto(args: ParetoArgs) -> Result<(), CliError> {
    let session = load_session(&args.samples)?;
    if session.samples().is_empty() {
        return Err(CliError {
            code: EXIT_JOURNAL,
            message: format!("journal {} holds no samples", args.samples.display()),
        });
    }
    let override_thresholds = parse_thresholds(&args.valid)?;
    let thresholds =
        override_thresholds.as_ref().or(session.options().validity_thresholds.as_ref());
    let front = measured_front_of(session.samples(), session.objectives(), thresholds)?;
    let csv = front_to_csv(session.space(), session.objectives(), &front);
    write_or_print(args.out.as_deref(), &csv)
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let session = load_session(&args.samples)?;
    let override_thresholds = parse_thresholds(&args.valid)?;
    let thresholds = override_thresholds
        .as_ref()
        .or(session.options().validity_thresholds.as_ref());

    let reference = match args.r#ref.len() {
        0 => None,
        n if n == session.objectives().len() => Some(args.r#ref.clone()),
        n => {
            return Err(CliError::usage(format!(
                "--ref has {n} components, session has {} objectives",
                session.objectives().len()
            )))
        }
    };

    let default_config = match &args.default {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::usage(format!("cannot read default config {}: {e}", path.display()))
            })?;
            let map: BTreeMap<String, serde_json::Value> = serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("default config is not a JSON map: {e}")))?;
            Some(session.space().config_from_values(&map)?)
        }
        None => None,
    };

    let mut evaluator = match &args.evaluator {
        Some(spec) => {
            Some(build_evaluator(spec, session.space(), session.objectives(), 1, 3600.0)?)
        }
        None => None,
    };

    let default_source = match default_config {
        Some(config) => report::DefaultSource::Explicit(config),
        None => report::DefaultSource::SpaceDefaults,
    };
    let evaluator_ref: Option<&mut dyn Evaluator> = match evaluator.as_mut() {
        Some(boxed) => Some(boxed.as_mut()),
        None => None,
    };
    let summary = report::summarize(
        session.space(),
        session.objectives(),
        session.samples(),
        thresholds,
        reference,
        default_source,
        evaluator_ref,
    )?;

    let rendered = match args.format {
        report::Format::Json => {
            let mut text = serde_json::to_string_pretty(&summary).expect("summary serialises");
            text.push('\n');
            text
        }
        report::Format::Table => report::render_table(&summary),
    };
    write_or_print(args.out.as_deref(), &rendered)
}
