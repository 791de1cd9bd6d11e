//! Random-decision-forest regression surrogates.
//!
//! Each forest maps feature vectors to one predicted metric. Trees are CART
//! regressors: exhaustive splits over midpoints of consecutive sorted
//! distinct feature values, weighted variance reduction as the criterion,
//! ties broken by lowest feature index then lowest threshold. Training
//! pairs are canonically pre-sorted before any randomness is drawn, and
//! per-tree RNG streams are derived from `seed + tree index`, so a fit is
//! independent of both training-pair order and tree-training parallelism.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::space::FeatureVector;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training size mismatch: {inputs} inputs vs {targets} targets")]
    SizeMismatch { inputs: usize, targets: usize },
    #[error("feature width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("non-finite target value at index {0}")]
    NonFiniteTarget(usize),
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
}

/// Forest hyperparameters. The defaults follow common regression-forest
/// convention: 100 trees, unlimited depth, leaves of at least two samples,
/// a third of the features considered per split, bootstrap resampling.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Fraction of features considered per split, in (0, 1].
    pub feature_subsample: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 2,
            feature_subsample: 1.0 / 3.0,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<(), SurrogateError> {
        if self.n_trees == 0 {
            return Err(SurrogateError::InvalidParams("n_trees must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(SurrogateError::InvalidParams("min_samples_leaf must be >= 1".into()));
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return Err(SurrogateError::InvalidParams(
                "feature_subsample must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64 },
}

/// One CART regression tree, stored as a flat node arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    root: u32,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = self.root;
        loop {
            match &self.nodes[at as usize] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature as usize] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// A trained forest for one objective. Prediction is the arithmetic mean of
/// the tree predictions and always lies within the training target range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<RegressionTree>,
    objective_name: String,
    feature_width: usize,
    training_size: usize,
    target_min: f64,
    target_max: f64,
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, SurrogateError> {
        if x.len() != self.feature_width {
            return Err(SurrogateError::WidthMismatch {
                expected: self.feature_width,
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        for tree in &self.trees {
            sum += tree.predict(x);
        }
        sum / self.trees.len() as f64
    }

    /// Elementwise identical to [`predict`](Self::predict), in input order.
    pub fn predict_batch(&self, xs: &[FeatureVector]) -> Result<Vec<f64>, SurrogateError> {
        for x in xs {
            if x.len() != self.feature_width {
                return Err(SurrogateError::WidthMismatch {
                    expected: self.feature_width,
                    got: x.len(),
                });
            }
        }
        Ok(exec::map_slice(xs, |x| self.predict_unchecked(x.as_slice())))
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn objective_name(&self) -> &str {
        &self.objective_name
    }

    pub fn named(mut self, objective: impl Into<String>) -> Self {
        self.objective_name = objective.into();
        self
    }

    pub fn training_size(&self) -> usize {
        self.training_size
    }

    pub fn target_range(&self) -> (f64, f64) {
        (self.target_min, self.target_max)
    }

    /// Debug dump of the trees. Not a stability-guaranteed format.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("forest serialises")
    }
}

/// Fit a forest; tree training runs in parallel with the `parallel`
/// feature. The result is identical to [`fit_forest_seq`].
pub fn fit_forest(
    xs: &[FeatureVector],
    ys: &[f64],
    params: &ForestParams,
) -> Result<ForestModel, SurrogateError> {
    fit_impl(xs, ys, params, true)
}

/// Sequential reference path, kept public for equivalence tests and the
/// bench suite.
pub fn fit_forest_seq(
    xs: &[FeatureVector],
    ys: &[f64],
    params: &ForestParams,
) -> Result<ForestModel, SurrogateError> {
    fit_impl(xs, ys, params, false)
}

fn fit_impl(
    xs: &[FeatureVector],
    ys: &[f64],
    params: &ForestParams,
    parallel: bool,
) -> Result<ForestModel, SurrogateError> {
    params.validate()?;
    if xs.is_empty() {
        return Err(SurrogateError::EmptyTrainingSet);
    }
    if xs.len() != ys.len() {
        return Err(SurrogateError::SizeMismatch { inputs: xs.len(), targets: ys.len() });
    }
    let width = xs[0].len();
    for x in xs {
        if x.len() != width {
            return Err(SurrogateError::WidthMismatch { expected: width, got: x.len() });
        }
    }
    if let Some(i) = ys.iter().position(|y| !y.is_finite()) {
        return Err(SurrogateError::NonFiniteTarget(i));
    }

    // Canonical pre-sort by (input, target) so the fit does not depend on
    // the order training pairs arrive in.
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        lex_cmp(xs[i].as_slice(), xs[j].as_slice()).then(ys[i].total_cmp(&ys[j]))
    });
    let mut flat = Vec::with_capacity(n * width);
    let mut targets = Vec::with_capacity(n);
    for &i in &order {
        flat.extend_from_slice(xs[i].as_slice());
        targets.push(ys[i]);
    }

    let build = |tree_idx: usize| build_tree(&flat, &targets, width, params, tree_idx as u64);
    let trees = if parallel {
        exec::map_indices(params.n_trees, build)
    } else {
        exec::map_indices_seq(params.n_trees, build)
    };

    let target_min = targets.iter().cloned().fold(f64::INFINITY, f64::min);
    let target_max = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ForestModel {
        trees,
        objective_name: String::new(),
        feature_width: width,
        training_size: n,
        target_min,
        target_max,
    })
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

struct TreeBuilder<'a> {
    flat: &'a [f64],
    targets: &'a [f64],
    width: usize,
    params: &'a ForestParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    feature_pool: Vec<u32>,
}

fn build_tree(
    flat: &[f64],
    targets: &[f64],
    width: usize,
    params: &ForestParams,
    tree_idx: u64,
) -> RegressionTree {
    let n = targets.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(tree_idx));
    let mut indices: Vec<u32> = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n) as u32).collect()
    } else {
        (0..n as u32).collect()
    };
    let mut builder = TreeBuilder {
        flat,
        targets,
        width,
        params,
        rng,
        nodes: Vec::new(),
        feature_pool: (0..width as u32).collect(),
    };
    let root = builder.grow(&mut indices, 0);
    RegressionTree { nodes: builder.nodes, root }
}

impl TreeBuilder<'_> {
    fn feature(&self, sample: u32, feature: u32) -> f64 {
        self.flat[sample as usize * self.width + feature as usize]
    }

    fn grow(&mut self, indices: &mut [u32], depth: usize) -> u32 {
        let n = indices.len();
        let mean = indices.iter().map(|&i| self.targets[i as usize]).sum::<f64>() / n as f64;

        let first = self.targets[indices[0] as usize];
        let all_equal = indices.iter().all(|&i| self.targets[i as usize] == first);
        let depth_capped = self.params.max_depth.is_some_and(|cap| depth >= cap);
        if all_equal || depth_capped || n < 2 * self.params.min_samples_leaf || self.width == 0 {
            return self.push(Node::Leaf { value: mean });
        }

        let Some((feature, threshold)) = self.find_split(indices) else {
            return self.push(Node::Leaf { value: mean });
        };

        // Stable partition keeps each side's relative order deterministic.
        let (mut left, mut right): (Vec<u32>, Vec<u32>) = (Vec::new(), Vec::new());
        for &i in indices.iter() {
            if self.feature(i, feature) <= threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        let left_id = self.grow(&mut left, depth + 1);
        let right_id = self.grow(&mut right, depth + 1);
        self.push(Node::Split { feature, threshold, left: left_id, right: right_id })
    }

    /// Best split over a random feature subset; when the subset offers no
    /// valid boundary the remaining features are searched too, so leaves
    /// only ever mix differing targets when no feature separates them.
    fn find_split(&mut self, indices: &[u32]) -> Option<(u32, f64)> {
        let k = ((self.params.feature_subsample * self.width as f64).ceil() as usize)
            .clamp(1, self.width);
        let mut pool = std::mem::take(&mut self.feature_pool);
        let (chosen, rest) = pool.partial_shuffle(&mut self.rng, k);
        chosen.sort_unstable();
        rest.sort_unstable();

        let mut best: Option<(f64, u32, f64)> = None;
        for phase in 0..2 {
            let features: &[u32] = if phase == 0 { &pool[..k] } else { &pool[k..] };
            for &feature in features {
                self.scan_feature(indices, feature, &mut best);
            }
            if best.is_some() {
                break;
            }
        }
        self.feature_pool = pool;
        best.map(|(_, feature, threshold)| (feature, threshold))
    }

    fn scan_feature(&self, indices: &[u32], feature: u32, best: &mut Option<(f64, u32, f64)>) {
        let n = indices.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut pairs: Vec<(f64, f64)> = indices
            .iter()
            .map(|&i| (self.feature(i, feature), self.targets[i as usize]))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
        let total_sumsq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
        let parent_sse = total_sumsq - total_sum * total_sum / n as f64;

        let mut left_sum = 0.0;
        let mut left_sumsq = 0.0;
        for (count, window) in pairs.windows(2).enumerate() {
            let left_n = count + 1;
            left_sum += window[0].1;
            left_sumsq += window[0].1 * window[0].1;
            if window[0].0 == window[1].0 {
                continue;
            }
            let right_n = n - left_n;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let left_sse = left_sumsq - left_sum * left_sum / left_n as f64;
            let right_sum = total_sum - left_sum;
            let right_sse = (total_sumsq - left_sumsq) - right_sum * right_sum / right_n as f64;
            let reduction = parent_sse - (left_sse + right_sse);
            let threshold = 0.5 * (window[0].0 + window[1].0);
            // Strict improvement keeps the lowest-feature, lowest-threshold
            // candidate on ties. Zero-reduction splits are still taken so
            // separable-but-balanced targets (e.g. XOR patterns) get split.
            if best.is_none() || reduction > best.unwrap().0 {
                *best = Some((reduction, feature, threshold));
            }
        }
    }

    fn push(&mut self, node: Node) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }
}
