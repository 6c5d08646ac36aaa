//! CART random forests for regression and classification.
//!
//! Trees split on variance reduction (regression) or Gini impurity
//! (classification) over a random subset of features at each node. Rows
//! with a MISSING split value follow the child that received more training
//! rows. Tree `t` draws its bootstrap sample and feature subsets from a
//! stream seeded by `(seed, t)`, so training is reproducible whether trees
//! are grown serially or in parallel, and the bootstrap sets can be
//! regenerated from the stored seeds for out-of-bag evaluation.

mod impute;
mod importance;
mod matrix;
pub mod tree;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use impute::{impute, impute_report, nrmse, ImputeParams, ImputeReport};
pub use importance::{permutation_importance, PermutationImportance};
pub use matrix::{DesignMatrix, Target};
pub use tree::{Node, Tree};

use crate::rng::{derive_seed, tag, Stream};
use tree::{argmax, bootstrap, grow, GrowParams, TargetRef};

/// Version of the serialized [`ForestModel`] document.
pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ForestError {
    #[error("design matrix has no rows or no feature columns")]
    EmptyMatrix,
    #[error("row {row} has {found} cells, expected {expected}")]
    NonRectangular { row: usize, expected: usize, found: usize },
    #[error("design matrix has no target column")]
    NoTarget,
    #[error("target is MISSING at row {0}")]
    MissingTarget(usize),
    #[error("feature vector has {found} values, model expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` has no observed values")]
    EmptyColumn(String),
    #[error("model is a {0:?} forest")]
    WrongTask(Task),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` means ⌈√p⌉ for classification and ⌈p/3⌉ for regression.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl ForestParams {
    pub fn regression(seed: u64) -> Self {
        ForestParams { n_trees: 100, max_depth: None, min_leaf: 5, features_per_split: None, seed }
    }

    pub fn classification(seed: u64) -> Self {
        ForestParams { min_leaf: 1, ..Self::regression(seed) }
    }

    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidParams("n_trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(ForestError::InvalidParams("min_leaf must be at least 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(ForestError::InvalidParams("features_per_split must be at least 1".into()));
        }
        Ok(())
    }

    fn features_for(&self, task: Task, p: usize) -> usize {
        let default = match task {
            Task::Classification => (p as f64).sqrt().ceil() as usize,
            Task::Regression => p.div_ceil(3),
        };
        self.features_per_split.unwrap_or(default).clamp(1, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Value(f64),
    Label(usize),
}

/// A trained ensemble. Serializes to a versioned JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub task: Task,
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    /// Zero for regression.
    pub n_classes: usize,
    pub trees: Vec<Tree>,
    /// Seed of each tree's stream; regenerates its bootstrap sample.
    pub tree_seeds: Vec<u64>,
    pub n_train_rows: usize,
    /// Out-of-bag R² (regression) or accuracy (classification).
    pub oob_score: f64,
    /// Mean impurity decrease per feature, normalized to sum to 1.
    pub feature_importances: Vec<f64>,
    pub train_target_range: (f64, f64),
}

fn check_target(m: &DesignMatrix) -> Result<(Task, usize), ForestError> {
    match m.target() {
        None => Err(ForestError::NoTarget),
        Some(Target::Numeric(y)) => match y.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(ForestError::MissingTarget(i)),
            None => Ok((Task::Regression, 0)),
        },
        Some(Target::Labels(y)) => Ok((Task::Classification, y.iter().max().map_or(1, |m| m + 1))),
    }
}

/// Train a forest on `m`'s target.
pub fn train_forest(m: &DesignMatrix, params: &ForestParams) -> Result<ForestModel, ForestError> {
    params.validate()?;
    let (task, n_classes) = check_target(m)?;
    let n = m.n_rows();
    let p = m.n_cols();
    let columns = m.to_columns();
    let target = match m.target() {
        Some(Target::Numeric(y)) => TargetRef::Numeric(y),
        Some(Target::Labels(y)) => TargetRef::Labels(y, n_classes),
        None => unreachable!("checked above"),
    };
    let grow_params = GrowParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        features_per_split: params.features_for(task, p),
    };

    let tree_seeds: Vec<u64> = (0..params.n_trees as u64).map(|t| derive_seed(params.seed, &[tag::TREE, t])).collect();
    let grown: Vec<(Tree, Vec<f64>)> = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = Stream::seed_from_u64(s);
            let sample = bootstrap(&mut rng, n);
            let mut imp = vec![0.0; p];
            let tree = grow(&columns, &target, sample, &grow_params, &mut rng, &mut imp);
            (tree, imp)
        })
        .collect();

    let mut importances = vec![0.0; p];
    for (_, imp) in &grown {
        for (a, b) in importances.iter_mut().zip(imp) {
            *a += b;
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }

    let train_target_range = match m.target() {
        Some(Target::Numeric(y)) => y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        Some(Target::Labels(y)) => (0.0, y.iter().max().copied().unwrap_or(0) as f64),
        None => unreachable!(),
    };

    let mut model = ForestModel {
        format_version: FOREST_FORMAT_VERSION,
        task,
        params: params.clone(),
        feature_names: m.columns().to_vec(),
        n_classes,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        tree_seeds,
        n_train_rows: n,
        oob_score: 0.0,
        feature_importances: importances,
        train_target_range,
    };
    let rows: Vec<&[f64]> = (0..n).map(|r| m.row(r)).collect();
    let oob = model.oob_predictions(&rows);
    model.oob_score = score(task, m.target().expect("checked"), &oob);
    Ok(model)
}

/// OOB R² or accuracy over rows with at least one out-of-bag tree.
fn score(task: Task, target: &Target, oob: &[Option<Prediction>]) -> f64 {
    match (task, target) {
        (Task::Regression, Target::Numeric(y)) => {
            let pairs: Vec<(f64, f64)> = oob
                .iter()
                .zip(y)
                .filter_map(|(p, &y)| match p {
                    Some(Prediction::Value(v)) => Some((y, *v)),
                    _ => None,
                })
                .collect();
            if pairs.is_empty() {
                return 0.0;
            }
            let mean = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
            let sst: f64 = pairs.iter().map(|p| (p.0 - mean).powi(2)).sum();
            let sse: f64 = pairs.iter().map(|p| (p.0 - p.1).powi(2)).sum();
            if sst <= 0.0 {
                0.0
            } else {
                1.0 - sse / sst
            }
        }
        (Task::Classification, Target::Labels(y)) => {
            let (hit, total) = oob.iter().zip(y).fold((0usize, 0usize), |(h, t), (p, &y)| match p {
                Some(Prediction::Label(l)) => (h + usize::from(*l == y), t + 1),
                _ => (h, t),
            });
            if total == 0 {
                0.0
            } else {
                hit as f64 / total as f64
            }
        }
        _ => 0.0,
    }
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Regenerate tree `t`'s in-bag multiplicities.
    pub fn in_bag_counts(&self, t: usize) -> Vec<u32> {
        let mut rng = Stream::seed_from_u64(self.tree_seeds[t]);
        let mut counts = vec![0u32; self.n_train_rows];
        for r in bootstrap(&mut rng, self.n_train_rows) {
            counts[r] += 1;
        }
        counts
    }

    fn check_arity(&self, row: &[f64]) -> Result<(), ForestError> {
        if row.len() != self.n_features() {
            return Err(ForestError::ArityMismatch { expected: self.n_features(), found: row.len() });
        }
        Ok(())
    }

    /// Aggregate the leaves of `trees` for one row.
    fn aggregate<'a>(&self, leaves: impl Iterator<Item = &'a [f64]>) -> Option<Prediction> {
        match self.task {
            Task::Regression => {
                let (sum, n) = leaves.fold((0.0, 0usize), |(s, n), l| (s + l[0], n + 1));
                (n > 0).then(|| Prediction::Value((sum / n as f64).clamp(self.train_target_range.0, self.train_target_range.1)))
            }
            Task::Classification => {
                let mut votes = vec![0.0; self.n_classes.max(1)];
                let mut any = false;
                for l in leaves {
                    votes[argmax(l)] += 1.0;
                    any = true;
                }
                any.then(|| Prediction::Label(argmax(&votes)))
            }
        }
    }

    /// Mean of tree leaf means (regression) or majority vote with ties to
    /// the lowest label (classification).
    pub fn predict(&self, row: &[f64]) -> Result<Prediction, ForestError> {
        self.check_arity(row)?;
        Ok(self.aggregate(self.trees.iter().map(|t| t.leaf(row))).expect("forest has at least one tree"))
    }

    pub fn predict_value(&self, row: &[f64]) -> Result<f64, ForestError> {
        match self.predict(row)? {
            Prediction::Value(v) => Ok(v),
            Prediction::Label(_) => Err(ForestError::WrongTask(self.task)),
        }
    }

    pub fn predict_label(&self, row: &[f64]) -> Result<usize, ForestError> {
        match self.predict(row)? {
            Prediction::Label(l) => Ok(l),
            Prediction::Value(_) => Err(ForestError::WrongTask(self.task)),
        }
    }

    /// Per-row prediction from the trees that did not see the row.
    pub(crate) fn oob_predictions(&self, rows: &[&[f64]]) -> Vec<Option<Prediction>> {
        let in_bag: Vec<Vec<u32>> = (0..self.trees.len()).into_par_iter().map(|t| self.in_bag_counts(t)).collect();
        (0..rows.len())
            .into_par_iter()
            .map(|r| {
                let leaves = self
                    .trees
                    .iter()
                    .zip(&in_bag)
                    .filter(|(_, bag)| bag[r] == 0)
                    .map(|(t, _)| t.leaf(rows[r]));
                self.aggregate(leaves)
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<ForestModel> {
        serde_json::from_str(s)
    }
}
