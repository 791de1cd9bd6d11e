//! Wire-protocol stub evaluator over the builtin surfaces: answers
//! line-delimited JSON requests on stdin with metrics on stdout, flushing
//! after every line. Useful for exercising external-evaluator harnesses
//! without a real benchmark; `--fail-ids` injects per-id error responses
//! and `--delay-ms` simulates slow evaluations.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use clap::Args;
use serde_json::Value as Json;

use paretotune::evaluator::{evaluate_builtin, BuiltinSurface};

use crate::CliError;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Builtin surface to serve: synth-kfusion or synth-elasticfusion.
    #[arg(long)]
    pub surface: String,
    /// Ids answered with an injected error line.
    #[arg(long, value_delimiter = ',')]
    pub fail_ids: Vec<u64>,
    /// Artificial per-request delay.
    #[arg(long, default_value_t = 0)]
    pub delay_ms: u64,
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let surface = BuiltinSurface::from_name(&args.surface)
        .ok_or_else(|| CliError::usage(format!("unknown builtin surface {:?}", args.surface)))?;
    let fail_ids: BTreeSet<u64> = args.fail_ids.iter().copied().collect();
    let space = surface.space();

    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| CliError { code: 1, message: format!("stdin: {e}") })?;
        if line.trim().is_empty() {
            continue;
        }
        let Ok(request) = serde_json::from_str::<Json>(&line) else {
            eprintln!("evaluate: ignoring malformed request line");
            continue;
        };
        let Some(id) = request.get("id").and_then(Json::as_u64) else {
            eprintln!("evaluate: ignoring request without id");
            continue;
        };
        if args.delay_ms > 0 {
            std::thread::sleep(std::time::Duration::from_millis(args.delay_ms));
        }
        let response = if fail_ids.contains(&id) {
            serde_json::json!({ "id": id, "error": "injected failure" })
        } else {
            match answer(surface, space, &request) {
                Ok(metrics) => serde_json::json!({ "id": id, "metrics": metrics }),
                Err(reason) => serde_json::json!({ "id": id, "error": reason }),
            }
        };
        writeln!(stdout, "{response}")
            .and_then(|_| stdout.flush())
            .map_err(|e| CliError { code: 1, message: format!("stdout: {e}") })?;
    }
    Ok(())
}

fn answer(
    surface: BuiltinSurface,
    space: &paretotune::ParameterSpace,
    request: &Json,
) -> Result<BTreeMap<String, f64>, String> {
    let values: BTreeMap<String, Json> = request
        .get("config")
        .and_then(Json::as_object)
        .ok_or("request has no config object")?
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let config = space.config_from_values(&values).map_err(|e| e.to_string())?;
    evaluate_builtin(surface.name(), &config).map_err(|e| e.to_string())
}
