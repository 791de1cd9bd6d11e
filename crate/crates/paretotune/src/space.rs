//! Finite configuration spaces: definition, parsing, enumeration, distinct
//! uniform sampling, and numeric feature encoding.
//!
//! A [`ParameterSpace`] is an ordered list of named, typed, finite parameter
//! dimensions — the configuration pool the tuner searches. Configurations
//! are stored as per-parameter value indices, which makes equality, ordering
//! (the canonical key) and ranking cheap; values are materialised on demand.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value as Json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("malformed space document: {0}")]
    Malformed(String),
    #[error("parameter {name:?}: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("space cardinality overflows u128")]
    CardinalityOverflow,
    #[error("requested {requested} distinct samples but the space holds only {cardinality} configurations")]
    SampleExceedsSpace { requested: usize, cardinality: u128 },
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
}

/// One admissible value of a parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Label(String),
}

impl ParamValue {
    /// Numeric view used by the builtin benchmark surfaces; booleans map to
    /// 0/1, labels have none.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Float(v) => Some(*v),
            ParamValue::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            ParamValue::Label(_) => None,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            ParamValue::Int(v) => Json::from(*v),
            ParamValue::Float(v) => Json::from(*v),
            ParamValue::Bool(b) => Json::from(*b),
            ParamValue::Label(s) => Json::from(s.clone()),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Label(s) => write!(f, "{s}"),
        }
    }
}

/// The kind of a parameter dimension together with its admissible values.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    /// Explicit strictly increasing list of numeric values.
    Ordinal(Vec<f64>),
    /// Integers `lo, lo+step, ..., <= hi`.
    IntRange { lo: i64, hi: i64, step: i64 },
    Boolean,
    /// Unordered labels, one-hot encoded.
    Categorical(Vec<String>),
}

/// A named, validated parameter dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec {
    name: String,
    kind: ParamKind,
    default: Option<u32>,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, kind: ParamKind) -> Result<Self, SpaceError> {
        let name = name.into();
        let invalid = |reason: &str| SpaceError::InvalidParameter {
            name: name.clone(),
            reason: reason.to_string(),
        };
        match &kind {
            ParamKind::Ordinal(values) => {
                if values.is_empty() {
                    return Err(invalid("empty value list"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("non-finite ordinal value"));
                }
                if values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid("non-increasing ordinal list"));
                }
            }
            ParamKind::IntRange { lo, hi, step } => {
                if step < &1 {
                    return Err(invalid("step must be >= 1"));
                }
                if lo > hi {
                    return Err(invalid("empty value list (lo > hi)"));
                }
            }
            ParamKind::Boolean => {}
            ParamKind::Categorical(labels) => {
                if labels.is_empty() {
                    return Err(invalid("empty label list"));
                }
                let mut seen = HashSet::new();
                for label in labels {
                    if !seen.insert(label.as_str()) {
                        return Err(invalid(&format!("duplicate label {label:?}")));
                    }
                }
            }
        }
        Ok(ParameterSpec { name, kind, default: None })
    }

    pub fn with_default(mut self, value: &ParamValue) -> Result<Self, SpaceError> {
        match self.index_of(value) {
            Some(idx) => {
                self.default = Some(idx as u32);
                Ok(self)
            }
            None => Err(SpaceError::InvalidParameter {
                name: self.name.clone(),
                reason: format!("default value {value} is not admissible"),
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ParamKind {
        &self.kind
    }

    pub fn value_count(&self) -> usize {
        match &self.kind {
            ParamKind::Ordinal(values) => values.len(),
            ParamKind::IntRange { lo, hi, step } => ((hi - lo) / step + 1) as usize,
            ParamKind::Boolean => 2,
            ParamKind::Categorical(labels) => labels.len(),
        }
    }

    pub fn value_at(&self, idx: usize) -> ParamValue {
        debug_assert!(idx < self.value_count());
        match &self.kind {
            ParamKind::Ordinal(values) => ParamValue::Float(values[idx]),
            ParamKind::IntRange { lo, step, .. } => ParamValue::Int(lo + idx as i64 * step),
            ParamKind::Boolean => ParamValue::Bool(idx == 1),
            ParamKind::Categorical(labels) => ParamValue::Label(labels[idx].clone()),
        }
    }

    /// Index of an admissible value. Numeric kinds accept both `Int` and
    /// `Float` spellings of the same number; booleans also accept 0/1.
    pub fn index_of(&self, value: &ParamValue) -> Option<usize> {
        match (&self.kind, value) {
            (ParamKind::Ordinal(values), v) => {
                let x = numeric_of(v)?;
                values.iter().position(|&o| o == x)
            }
            (ParamKind::IntRange { lo, hi, step }, v) => {
                let x = numeric_of(v)?;
                if x.fract() != 0.0 {
                    return None;
                }
                let x = x as i64;
                if x < *lo || x > *hi || (x - lo) % step != 0 {
                    return None;
                }
                Some(((x - lo) / step) as usize)
            }
            (ParamKind::Boolean, ParamValue::Bool(b)) => Some(usize::from(*b)),
            (ParamKind::Boolean, ParamValue::Int(0)) => Some(0),
            (ParamKind::Boolean, ParamValue::Int(1)) => Some(1),
            (ParamKind::Categorical(labels), ParamValue::Label(s)) => {
                labels.iter().position(|l| l == s)
            }
            _ => None,
        }
    }

    /// Number of feature components this parameter contributes.
    pub fn encoding_width(&self) -> usize {
        match &self.kind {
            ParamKind::Categorical(labels) => labels.len(),
            _ => 1,
        }
    }

    pub fn default_value(&self) -> Option<ParamValue> {
        self.default.map(|idx| self.value_at(idx as usize))
    }
}

fn numeric_of(value: &ParamValue) -> Option<f64> {
    match value {
        ParamValue::Int(v) => Some(*v as f64),
        ParamValue::Float(v) => Some(*v),
        _ => None,
    }
}

/// One assignment of a value to every parameter, stored as value indices in
/// space parameter order. Ordering is the canonical key used for
/// deduplication and deterministic journaling.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    indices: Vec<u32>,
}

impl Configuration {
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// Fixed-width numeric encoding of a configuration: ordinal and integer
/// parameters keep their value, booleans map to 0/1, categoricals one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(components: Vec<f64>) -> Self {
        FeatureVector(components)
    }
}

/// An ordered, finite configuration pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    params: Vec<ParameterSpec>,
    cardinality: u128,
    width: usize,
}

impl ParameterSpace {
    pub fn new(params: Vec<ParameterSpec>) -> Result<Self, SpaceError> {
        let mut names = HashSet::new();
        for p in &params {
            if !names.insert(p.name.clone()) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        let mut cardinality: u128 = 1;
        for p in &params {
            cardinality = cardinality
                .checked_mul(p.value_count() as u128)
                .ok_or(SpaceError::CardinalityOverflow)?;
        }
        let width = params.iter().map(|p| p.encoding_width()).sum();
        Ok(ParameterSpace { params, cardinality, width })
    }

    /// Parse a space-definition document: a JSON object with a top-level
    /// `"parameters"` list of `{"name", "type", ...}` entries. See the
    /// bundled `fixtures/*.space` files for the format.
    pub fn parse(doc: &str) -> Result<Self, SpaceError> {
        let root: Json =
            serde_json::from_str(doc).map_err(|e| SpaceError::Malformed(e.to_string()))?;
        let params_json = root
            .get("parameters")
            .and_then(Json::as_array)
            .ok_or_else(|| SpaceError::Malformed("missing \"parameters\" list".into()))?;

        let mut params = Vec::with_capacity(params_json.len());
        for (pos, entry) in params_json.iter().enumerate() {
            let obj = entry.as_object().ok_or_else(|| {
                SpaceError::Malformed(format!("parameter #{pos} is not an object"))
            })?;
            let name = obj
                .get("name")
                .and_then(Json::as_str)
                .ok_or_else(|| SpaceError::Malformed(format!("parameter #{pos} has no name")))?
                .to_string();
            let invalid = |reason: String| SpaceError::InvalidParameter {
                name: name.clone(),
                reason,
            };
            let ty = obj
                .get("type")
                .and_then(Json::as_str)
                .ok_or_else(|| invalid("missing \"type\"".into()))?;
            let kind = match ty {
                "ordinal" => {
                    let values = obj
                        .get("values")
                        .and_then(Json::as_array)
                        .ok_or_else(|| invalid("ordinal requires a \"values\" list".into()))?
                        .iter()
                        .map(|v| v.as_f64().ok_or_else(|| invalid("non-numeric ordinal value".into())))
                        .collect::<Result<Vec<f64>, _>>()?;
                    ParamKind::Ordinal(values)
                }
                "int_range" => {
                    let field = |key: &str| {
                        obj.get(key)
                            .and_then(Json::as_i64)
                            .ok_or_else(|| invalid(format!("int_range requires integer \"{key}\"")))
                    };
                    ParamKind::IntRange { lo: field("lo")?, hi: field("hi")?, step: field("step")? }
                }
                "boolean" => ParamKind::Boolean,
                "categorical" => {
                    let labels = obj
                        .get("labels")
                        .and_then(Json::as_array)
                        .ok_or_else(|| invalid("categorical requires a \"labels\" list".into()))?
                        .iter()
                        .map(|v| {
                            v.as_str()
                                .map(str::to_string)
                                .ok_or_else(|| invalid("non-string label".into()))
                        })
                        .collect::<Result<Vec<String>, _>>()?;
                    ParamKind::Categorical(labels)
                }
                other => return Err(invalid(format!("unknown type {other:?}"))),
            };
            let mut spec = ParameterSpec::new(name, kind)?;
            if let Some(default) = obj.get("default") {
                let value = json_to_value(default)
                    .ok_or_else(|| SpaceError::InvalidParameter {
                        name: spec.name.clone(),
                        reason: "unsupported default value".into(),
                    })?;
                spec = spec.with_default(&value)?;
            }
            params.push(spec);
        }
        ParameterSpace::new(params)
    }

    /// Serialise back to the space-definition document format.
    pub fn to_json(&self) -> Json {
        let params: Vec<Json> = self
            .params
            .iter()
            .map(|p| {
                let mut obj = serde_json::Map::new();
                obj.insert("name".into(), Json::from(p.name.clone()));
                match &p.kind {
                    ParamKind::Ordinal(values) => {
                        obj.insert("type".into(), "ordinal".into());
                        obj.insert("values".into(), Json::from(values.clone()));
                    }
                    ParamKind::IntRange { lo, hi, step } => {
                        obj.insert("type".into(), "int_range".into());
                        obj.insert("lo".into(), Json::from(*lo));
                        obj.insert("hi".into(), Json::from(*hi));
                        obj.insert("step".into(), Json::from(*step));
                    }
                    ParamKind::Boolean => {
                        obj.insert("type".into(), "boolean".into());
                    }
                    ParamKind::Categorical(labels) => {
                        obj.insert("type".into(), "categorical".into());
                        obj.insert("labels".into(), Json::from(labels.clone()));
                    }
                }
                if let Some(default) = p.default_value() {
                    obj.insert("default".into(), default.to_json());
                }
                Json::Object(obj)
            })
            .collect();
        serde_json::json!({ "parameters": params })
    }

    pub fn params(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param(&self, name: &str) -> Option<(usize, &ParameterSpec)> {
        self.params.iter().enumerate().find(|(_, p)| p.name == name)
    }

    /// Exact number of configurations: the product of per-parameter value
    /// counts.
    pub fn cardinality(&self) -> u128 {
        self.cardinality
    }

    pub fn encoding_width(&self) -> usize {
        self.width
    }

    /// Configuration at `rank` in lexicographic order of value indices
    /// (first parameter most significant).
    pub fn config_from_rank(&self, rank: u128) -> Configuration {
        debug_assert!(rank < self.cardinality);
        let mut indices = vec![0u32; self.params.len()];
        let mut rest = rank;
        for (i, p) in self.params.iter().enumerate().rev() {
            let count = p.value_count() as u128;
            indices[i] = (rest % count) as u32;
            rest /= count;
        }
        Configuration { indices }
    }

    pub fn rank_of(&self, config: &Configuration) -> u128 {
        let mut rank: u128 = 0;
        for (p, &idx) in self.params.iter().zip(&config.indices) {
            rank = rank * p.value_count() as u128 + idx as u128;
        }
        rank
    }

    /// Every configuration exactly once, in lexicographic order of value
    /// indices.
    pub fn enumerate(&self) -> impl Iterator<Item = Configuration> + '_ {
        (0..self.cardinality).map(|rank| self.config_from_rank(rank))
    }

    /// Exactly `n` pairwise-distinct configurations, uniform over the space
    /// without replacement; deterministic per `(space, n, seed)`.
    ///
    /// Rejection sampling against a hash set when `n` is small relative to
    /// the space; index-shuffle enumeration when `n` exceeds half the
    /// cardinality, so both regimes stay O(n) expected.
    pub fn sample_random(&self, n: usize, seed: u64) -> Result<Vec<Configuration>, SpaceError> {
        if (n as u128) > self.cardinality {
            return Err(SpaceError::SampleExceedsSpace {
                requested: n,
                cardinality: self.cardinality,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranks: Vec<u128> = if (n as u128) * 2 > self.cardinality {
            let mut all: Vec<u128> = (0..self.cardinality).collect();
            let (chosen, _) = all.partial_shuffle(&mut rng, n);
            chosen.to_vec()
        } else {
            let mut seen = HashSet::with_capacity(n * 2);
            let mut ranks = Vec::with_capacity(n);
            while ranks.len() < n {
                let rank = rng.random_range(0..self.cardinality);
                if seen.insert(rank) {
                    ranks.push(rank);
                }
            }
            ranks
        };
        Ok(ranks.into_iter().map(|r| self.config_from_rank(r)).collect())
    }

    pub fn validate(&self, config: &Configuration) -> Result<(), SpaceError> {
        if config.indices.len() != self.params.len() {
            return Err(SpaceError::InvalidConfiguration(format!(
                "expected {} values, got {}",
                self.params.len(),
                config.indices.len()
            )));
        }
        for (p, &idx) in self.params.iter().zip(&config.indices) {
            if idx as usize >= p.value_count() {
                return Err(SpaceError::InvalidConfiguration(format!(
                    "parameter {:?}: value index {} out of range",
                    p.name, idx
                )));
            }
        }
        Ok(())
    }

    pub fn encode(&self, config: &Configuration) -> Result<FeatureVector, SpaceError> {
        self.validate(config)?;
        let mut out = Vec::with_capacity(self.width);
        self.encode_indices_into(&config.indices, &mut out);
        Ok(FeatureVector(out))
    }

    fn encode_indices_into(&self, indices: &[u32], out: &mut Vec<f64>) {
        out.clear();
        for (p, &idx) in self.params.iter().zip(indices) {
            match &p.kind {
                ParamKind::Ordinal(values) => out.push(values[idx as usize]),
                ParamKind::IntRange { lo, step, .. } => {
                    out.push((lo + idx as i64 * step) as f64)
                }
                ParamKind::Boolean => out.push(idx as f64),
                ParamKind::Categorical(labels) => {
                    for j in 0..labels.len() {
                        out.push(if j == idx as usize { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }

    /// Fused unrank + encode, allocation-free given a reused buffer. Hot
    /// path of pool-wide surrogate prediction.
    pub fn encode_rank_into(&self, rank: u128, out: &mut Vec<f64>) {
        debug_assert!(rank < self.cardinality);
        out.clear();
        out.resize(self.width, 0.0);
        let mut rest = rank;
        let mut offset = self.width;
        for p in self.params.iter().rev() {
            let count = p.value_count() as u128;
            let idx = (rest % count) as usize;
            rest /= count;
            offset -= p.encoding_width();
            match &p.kind {
                ParamKind::Ordinal(values) => out[offset] = values[idx],
                ParamKind::IntRange { lo, step, .. } => {
                    out[offset] = (lo + idx as i64 * step) as f64
                }
                ParamKind::Boolean => out[offset] = idx as f64,
                ParamKind::Categorical(_) => out[offset + idx] = 1.0,
            }
        }
    }

    /// Build a configuration from per-parameter indices, validating ranges.
    pub fn config_from_indices(&self, indices: Vec<u32>) -> Result<Configuration, SpaceError> {
        let config = Configuration { indices };
        self.validate(&config)?;
        Ok(config)
    }

    /// Build a configuration from a `name -> value` map; every parameter
    /// must be present, admissible, and nothing extra.
    pub fn config_from_values(
        &self,
        values: &BTreeMap<String, Json>,
    ) -> Result<Configuration, SpaceError> {
        if values.len() != self.params.len() {
            let known: HashSet<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
            if let Some(extra) = values.keys().find(|k| !known.contains(k.as_str())) {
                return Err(SpaceError::InvalidConfiguration(format!(
                    "unknown parameter {extra:?}"
                )));
            }
        }
        let mut indices = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let raw = values.get(&p.name).ok_or_else(|| {
                SpaceError::InvalidConfiguration(format!("missing parameter {:?}", p.name))
            })?;
            let value = json_to_value(raw).ok_or_else(|| {
                SpaceError::InvalidConfiguration(format!(
                    "parameter {:?}: unsupported value {raw}",
                    p.name
                ))
            })?;
            let idx = p.index_of(&value).ok_or_else(|| {
                SpaceError::InvalidConfiguration(format!(
                    "parameter {:?}: value {value} not admissible",
                    p.name
                ))
            })?;
            indices.push(idx as u32);
        }
        Ok(Configuration { indices })
    }

    pub fn value_of(&self, config: &Configuration, param_idx: usize) -> ParamValue {
        self.params[param_idx].value_at(config.indices[param_idx] as usize)
    }

    /// `name -> value` view of a configuration, in a sorted map so JSON
    /// serialisations are deterministic.
    pub fn values_map(&self, config: &Configuration) -> BTreeMap<String, Json> {
        self.params
            .iter()
            .zip(&config.indices)
            .map(|(p, &idx)| (p.name.clone(), p.value_at(idx as usize).to_json()))
            .collect()
    }

    /// The default configuration, if every parameter declares a default.
    pub fn default_config(&self) -> Option<Configuration> {
        let indices = self
            .params
            .iter()
            .map(|p| p.default)
            .collect::<Option<Vec<u32>>>()?;
        Some(Configuration { indices })
    }
}

fn json_to_value(raw: &Json) -> Option<ParamValue> {
    match raw {
        Json::Bool(b) => Some(ParamValue::Bool(*b)),
        Json::Number(n) => {
            if let Some(i) = n.as_i64() {
                Some(ParamValue::Int(i))
            } else {
                n.as_f64().map(ParamValue::Float)
            }
        }
        Json::String(s) => Some(ParamValue::Label(s.clone())),
        _ => None,
    }
}
