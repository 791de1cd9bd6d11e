//! Dominance, non-dominated filtering, validity thresholds and 2-D
//! hypervolume. All objectives are minimised; maximisation metrics are
//! expected to be negated at ingestion.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::optimizer::{Sample, SampleOutcome};
use crate::space::Configuration;

#[derive(Debug, Error)]
pub enum ParetoError {
    #[error("objective vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("unknown objective {0:?}")]
    UnknownObjective(String),
    #[error("hypervolume requires 2 objectives, got {0}")]
    NotTwoDimensional(usize),
    #[error("front point ({0}, {1}) exceeds the reference point")]
    PointExceedsReference(f64, f64),
    #[error("non-finite objective value")]
    NonFinite,
}

/// Whether a front entry's objectives were measured by the evaluator or
/// predicted by the surrogate models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Measured,
    Predicted,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::Predicted => "predicted",
        }
    }
}

/// One point of a Pareto front.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEntry {
    pub config: Configuration,
    pub objectives: Vec<f64>,
    pub provenance: Provenance,
}

/// True iff `a` is no worse than `b` in every objective and strictly better
/// in at least one (minimisation). Equal vectors do not dominate each other.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool, ParetoError> {
    if a.len() != b.len() {
        return Err(ParetoError::LengthMismatch { left: a.len(), right: b.len() });
    }
    let mut strictly_better = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return Ok(false);
        }
        if x < y {
            strictly_better = true;
        }
    }
    Ok(strictly_better)
}

/// Keys of the non-dominated points, sorted ascending by first objective,
/// then the remaining objectives, then key. The result is independent of
/// input order; entries sharing a key are collapsed to one, while distinct
/// keys with equal objectives are all retained.
pub fn pareto_front<K, V>(points: &[(K, V)]) -> Result<Vec<K>, ParetoError>
where
    K: Ord + Clone,
    V: AsRef<[f64]>,
{
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let dim = points[0].1.as_ref().len();
    for (_, objectives) in points {
        let objectives = objectives.as_ref();
        if objectives.len() != dim {
            return Err(ParetoError::LengthMismatch { left: dim, right: objectives.len() });
        }
        if objectives.iter().any(|v| !v.is_finite()) {
            return Err(ParetoError::NonFinite);
        }
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        lex_cmp(points[i].1.as_ref(), points[j].1.as_ref()).then_with(|| points[i].0.cmp(&points[j].0))
    });
    // Same key appearing twice is the same underlying configuration; keep
    // the occurrence with the smallest objective vector.
    let mut keys_seen = std::collections::BTreeSet::new();
    order.retain(|&i| keys_seen.insert(points[i].0.clone()));

    let survivors = if dim == 2 {
        front_sweep_2d(&order, |i| points[i].1.as_ref())
    } else {
        front_incremental(&order, |i| points[i].1.as_ref())
    };
    Ok(survivors.into_iter().map(|i| points[i].0.clone()).collect())
}

/// Positions of non-dominated entries in `objectives`, in ascending
/// objective order. Internal variant keyed by index; used where keys are
/// already unique (e.g. pool ranks).
pub(crate) fn pareto_front_indices<V: AsRef<[f64]>>(objectives: &[V]) -> Vec<usize> {
    if objectives.is_empty() {
        return Vec::new();
    }
    let dim = objectives[0].as_ref().len();
    let mut order: Vec<usize> = (0..objectives.len()).collect();
    order.sort_by(|&i, &j| {
        lex_cmp(objectives[i].as_ref(), objectives[j].as_ref()).then(i.cmp(&j))
    });
    if dim == 2 {
        front_sweep_2d(&order, |i| objectives[i].as_ref())
    } else {
        front_incremental(&order, |i| objectives[i].as_ref())
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Sweep over points sorted by (o1, o2): a point survives iff its o2 equals
/// the minimum of its o1-group and strictly undercuts every smaller-o1
/// group, which keeps exact-duplicate objective vectors together on the
/// front.
fn front_sweep_2d<'a, F: Fn(usize) -> &'a [f64]>(order: &[usize], obj: F) -> Vec<usize> {
    let mut survivors = Vec::new();
    let mut best_o2_before = f64::INFINITY;
    let mut pos = 0;
    while pos < order.len() {
        let o1 = obj(order[pos])[0];
        let group_min_o2 = obj(order[pos])[1];
        let mut end = pos;
        while end < order.len() && obj(order[end])[0] == o1 {
            end += 1;
        }
        if group_min_o2 < best_o2_before {
            for &idx in &order[pos..end] {
                if obj(idx)[1] == group_min_o2 {
                    survivors.push(idx);
                }
            }
            best_o2_before = group_min_o2;
        }
        pos = end;
    }
    survivors
}

/// General-dimension filter: in lexicographic order a point can only be
/// dominated by an already-accepted one, so one pass against the running
/// front suffices.
fn front_incremental<'a, F: Fn(usize) -> &'a [f64]>(order: &[usize], obj: F) -> Vec<usize> {
    let mut front: Vec<usize> = Vec::new();
    'candidates: for &idx in order {
        for &kept in &front {
            if dominates(obj(kept), obj(idx)).expect("validated lengths") {
                continue 'candidates;
            }
        }
        front.push(idx);
    }
    front
}

/// Keep the samples whose every thresholded objective lies strictly below
/// its bound. Failed samples carry no objectives and are dropped.
pub fn filter_valid(
    samples: &[Sample],
    objective_names: &[String],
    thresholds: &BTreeMap<String, f64>,
) -> Result<Vec<Sample>, ParetoError> {
    let mut bounds = Vec::with_capacity(thresholds.len());
    for (name, bound) in thresholds {
        let idx = objective_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ParetoError::UnknownObjective(name.clone()))?;
        bounds.push((idx, *bound));
    }
    Ok(samples
        .iter()
        .filter(|sample| match &sample.outcome {
            SampleOutcome::Ok(objectives) => {
                bounds.iter().all(|&(idx, bound)| objectives[idx] < bound)
            }
            SampleOutcome::Failed(_) => false,
        })
        .cloned()
        .collect())
}

/// Area dominated by a minimisation front within the box bounded by
/// `reference`, computed by a sweep over points sorted by first objective.
/// Dominated or duplicate input points contribute nothing; every point must
/// lie componentwise at or below the reference.
pub fn hypervolume_2d<V: AsRef<[f64]>>(front: &[V], reference: &[f64]) -> Result<f64, ParetoError> {
    if reference.len() != 2 {
        return Err(ParetoError::NotTwoDimensional(reference.len()));
    }
    let mut points = Vec::with_capacity(front.len());
    for entry in front {
        let objectives = entry.as_ref();
        if objectives.len() != 2 {
            return Err(ParetoError::NotTwoDimensional(objectives.len()));
        }
        if objectives.iter().any(|v| !v.is_finite()) {
            return Err(ParetoError::NonFinite);
        }
        if objectives[0] > reference[0] || objectives[1] > reference[1] {
            return Err(ParetoError::PointExceedsReference(objectives[0], objectives[1]));
        }
        points.push((objectives[0], objectives[1]));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    // Staircase: strictly decreasing o2 as o1 grows.
    let mut staircase: Vec<(f64, f64)> = Vec::new();
    for &(x, y) in &points {
        if y < staircase.last().map_or(f64::INFINITY, |&(_, last_y)| last_y) {
            staircase.push((x, y));
        }
    }
    let mut area = 0.0;
    for (i, &(x, y)) in staircase.iter().enumerate() {
        let next_x = staircase.get(i + 1).map_or(reference[0], |&(nx, _)| nx);
        area += (next_x - x) * (reference[1] - y);
    }
    Ok(area)
}

/// Front CSV export: one column per parameter (space order), one per
/// objective (session order), then provenance. Comma separated, header row,
/// LF line endings, `.` decimal separator.
pub fn front_to_csv(
    space: &crate::space::ParameterSpace,
    objective_names: &[String],
    entries: &[FrontEntry],
) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header: Vec<String> = space.params().iter().map(|p| p.name().to_string()).collect();
    header.extend(objective_names.iter().cloned());
    header.push("provenance".to_string());
    writer.write_record(&header).expect("write to vec");
    for entry in entries {
        let mut row: Vec<String> = (0..space.len())
            .map(|i| space.value_of(&entry.config, i).to_string())
            .collect();
        row.extend(entry.objectives.iter().map(|v| v.to_string()));
        row.push(entry.provenance.as_str().to_string());
        writer.write_record(&row).expect("write to vec");
    }
    String::from_utf8(writer.into_inner().expect("flush to vec")).expect("utf8 csv")
}

/// Re-parse a front CSV produced by [`front_to_csv`].
pub fn front_from_csv(
    space: &crate::space::ParameterSpace,
    objective_names: &[String],
    text: &str,
) -> Result<Vec<FrontEntry>, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let expected: Vec<&str> = space
        .params()
        .iter()
        .map(|p| p.name())
        .chain(objective_names.iter().map(String::as_str))
        .chain(std::iter::once("provenance"))
        .collect();
    let actual: Vec<&str> = headers.iter().collect();
    if actual != expected {
        return Err(format!("unexpected columns {actual:?}"));
    }
    let n_params = space.len();
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let mut values = std::collections::BTreeMap::new();
        for (i, param) in space.params().iter().enumerate() {
            let raw = &record[i];
            let json = parse_cell(param, raw)
                .ok_or_else(|| format!("bad value {raw:?} for {:?}", param.name()))?;
            values.insert(param.name().to_string(), json);
        }
        let config = space.config_from_values(&values).map_err(|e| e.to_string())?;
        let objectives = (0..objective_names.len())
            .map(|j| record[n_params + j].parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<Vec<f64>, _>>()?;
        let provenance = match &record[n_params + objective_names.len()] {
            "measured" => Provenance::Measured,
            "predicted" => Provenance::Predicted,
            other => return Err(format!("bad provenance {other:?}")),
        };
        entries.push(FrontEntry { config, objectives, provenance });
    }
    Ok(entries)
}

fn parse_cell(param: &crate::space::ParameterSpec, raw: &str) -> Option<serde_json::Value> {
    use crate::space::ParamKind;
    match param.kind() {
        ParamKind::Ordinal(_) | ParamKind::IntRange { .. } => {
            raw.parse::<f64>().ok().map(serde_json::Value::from)
        }
        ParamKind::Boolean => raw.parse::<bool>().ok().map(serde_json::Value::from),
        ParamKind::Categorical(_) => Some(serde_json::Value::from(raw)),
    }
}
