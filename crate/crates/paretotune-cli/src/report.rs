//! Session summaries: front size, hypervolume against a reference point,
//! best configuration per objective, and improvement ratios over the
//! default configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use paretotune::pareto::hypervolume_2d;
use paretotune::space::{Configuration, ParameterSpace};
use paretotune::{EvaluationRequest, Evaluator, Sample};

use crate::{measured_front_of, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportSummary {
    pub total_samples: usize,
    pub valid_samples: usize,
    pub front_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypervolume: Option<Hypervolume>,
    pub objectives: Vec<ObjectiveSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_config: Option<BTreeMap<String, Json>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_objectives: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Hypervolume {
    pub value: f64,
    pub reference: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObjectiveSummary {
    pub name: String,
    pub best_value: f64,
    pub best_config: BTreeMap<String, Json>,
    /// default value / best value, when a default configuration is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improvement_vs_default: Option<f64>,
}

/// Where the default configuration (the hand-tuned baseline every result is
/// compared against) comes from.
pub enum DefaultSource {
    /// An explicit configuration, valued from the journal or, failing that,
    /// the evaluator.
    Explicit(Configuration),
    /// The space's declared per-parameter defaults, when complete.
    SpaceDefaults,
}

pub fn summarize(
    space: &ParameterSpace,
    objectives: &[String],
    samples: &[Sample],
    thresholds: Option<&BTreeMap<String, f64>>,
    reference: Option<Vec<f64>>,
    default_source: DefaultSource,
    evaluator: Option<&mut dyn Evaluator>,
) -> Result<ReportSummary, CliError> {
    let valid: Vec<Sample> = match thresholds {
        Some(thresholds) => {
            paretotune::filter_valid(samples, objectives, thresholds)?
        }
        None => samples.iter().filter(|s| s.outcome.is_ok()).cloned().collect(),
    };
    let front = measured_front_of(samples, objectives, thresholds)?;

    let reference = match reference {
        Some(reference) => {
            for entry in &front {
                if entry.objectives.iter().zip(&reference).any(|(o, r)| o > r) {
                    return Err(CliError::usage(format!(
                        "reference point {reference:?} is violated by front point {:?}",
                        entry.objectives
                    )));
                }
            }
            Some(reference)
        }
        None => componentwise_max(&valid, objectives.len()),
    };
    let hypervolume = match (&reference, objectives.len()) {
        (Some(reference), 2) if !front.is_empty() => {
            let points: Vec<&[f64]> = front
                .iter()
                .map(|e| e.objectives.as_slice())
                .filter(|o| o.iter().zip(reference).all(|(v, r)| v <= r))
                .collect();
            Some(Hypervolume {
                value: hypervolume_2d(&points, reference)?,
                reference: reference.clone(),
            })
        }
        _ => None,
    };

    let (default_config, default_objectives) =
        resolve_default(space, objectives, samples, default_source, evaluator)?;

    let objective_summaries = objectives
        .iter()
        .enumerate()
        .filter(|_| !front.is_empty())
        .map(|(i, name)| {
            let best = front
                .iter()
                .min_by(|a, b| a.objectives[i].total_cmp(&b.objectives[i]))
                .expect("front non-empty");
            ObjectiveSummary {
                name: name.clone(),
                best_value: best.objectives[i],
                best_config: space.values_map(&best.config),
                improvement_vs_default: default_objectives
                    .as_ref()
                    .map(|d| d[name] / best.objectives[i]),
            }
        })
        .collect();

    Ok(ReportSummary {
        total_samples: samples.len(),
        valid_samples: valid.len(),
        front_size: front.len(),
        hypervolume,
        objectives: objective_summaries,
        default_config: default_config.map(|c| space.values_map(&c)),
        default_objectives,
    })
}

fn componentwise_max(samples: &[Sample], dim: usize) -> Option<Vec<f64>> {
    let mut max: Option<Vec<f64>> = None;
    for sample in samples {
        if let Some(values) = sample.outcome.objectives() {
            match &mut max {
                None => max = Some(values.to_vec()),
                Some(m) => {
                    for (slot, v) in m.iter_mut().zip(values) {
                        *slot = slot.max(*v);
                    }
                }
            }
        }
    }
    max.filter(|m| m.len() == dim)
}

type ResolvedDefault = (Option<Configuration>, Option<BTreeMap<String, f64>>);

fn resolve_default(
    space: &ParameterSpace,
    objectives: &[String],
    samples: &[Sample],
    source: DefaultSource,
    evaluator: Option<&mut dyn Evaluator>,
) -> Result<ResolvedDefault, CliError> {
    let (config, explicit) = match source {
        DefaultSource::Explicit(config) => (Some(config), true),
        DefaultSource::SpaceDefaults => (space.default_config(), false),
    };
    let Some(config) = config else {
        return Ok((None, None));
    };

    if let Some(sample) = samples.iter().find(|s| s.config == config) {
        if let Some(values) = sample.outcome.objectives() {
            let map = objectives.iter().cloned().zip(values.iter().copied()).collect();
            return Ok((Some(config), Some(map)));
        }
    }
    if let Some(evaluator) = evaluator {
        let request = EvaluationRequest { id: 0, config: config.clone() };
        let results = evaluator.evaluate(std::slice::from_ref(&request))?;
        match &results[0].outcome {
            paretotune::evaluator::EvalOutcome::Ok(metrics) => {
                let mut map = BTreeMap::new();
                for name in objectives {
                    match metrics.get(name) {
                        Some(v) => {
                            map.insert(name.clone(), *v);
                        }
                        None => {
                            return Err(CliError::usage(format!(
                                "evaluator did not answer objective {name:?} for the default configuration"
                            )))
                        }
                    }
                }
                return Ok((Some(config), Some(map)));
            }
            paretotune::evaluator::EvalOutcome::Failed(reason) => {
                return Err(CliError::usage(format!(
                    "default configuration failed to evaluate: {reason}"
                )))
            }
        }
    }
    if explicit {
        return Err(CliError::usage(
            "default configuration is not in the journal and no --evaluator was given",
        ));
    }
    Ok((Some(config), None))
}

pub fn render_table(summary: &ReportSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "samples      {} total, {} valid\n",
        summary.total_samples, summary.valid_samples
    ));
    out.push_str(&format!("front        {} points\n", summary.front_size));
    if let Some(hv) = &summary.hypervolume {
        let reference: Vec<String> = hv.reference.iter().map(f64::to_string).collect();
        out.push_str(&format!(
            "hypervolume  {} (reference {})\n",
            hv.value,
            reference.join(", ")
        ));
    }
    if !summary.objectives.is_empty() {
        out.push_str(&format!(
            "\n{:<16} {:>14} {:>14}\n",
            "objective", "best", "vs default"
        ));
        for objective in &summary.objectives {
            let ratio = objective
                .improvement_vs_default
                .map(|r| format!("{r:.2}x"))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{:<16} {:>14} {:>14}\n",
                objective.name, objective.best_value, ratio
            ));
        }
    }
    if let Some(defaults) = &summary.default_objectives {
        let cells: Vec<String> =
            defaults.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out.push_str(&format!("\ndefault      {}\n", cells.join(" ")));
    }
    out
}
