//! Assessment-trend clustering.
//!
//! Complete assessment histories become percent-change series, which are
//! reduced to binary "did the value move" signatures, compared with a binary
//! distance and grouped with Ward agglomeration. Each cluster's mean annual
//! change outside the excluded years is its forecast trend.

mod distance;
mod series;
mod ward;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use distance::{binarize, distance_matrix, hamming_distance, jaccard_distance, BinaryMetric, BinarySignature, CondensedMatrix};
pub use series::{to_pct_changes, PctChangeSeries, PctStep};
pub use ward::{cut_tree, ward_cluster, Dendrogram, Merge};

use crate::data::AssessmentSeries;

pub const CLUSTER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ClusterError {
    #[error("assessment series for {0} is incomplete")]
    IncompleteSeries(String),
    #[error("signature lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid distance matrix: {0}")]
    InvalidDistances(String),
    #[error("need at least 2 leaves to cluster, got {0}")]
    TooFewLeaves(usize),
    #[error("k = {k} is outside 1..={leaves}")]
    InvalidK { k: usize, leaves: usize },
    #[error("{labels} labels for {series} series")]
    LabelCount { labels: usize, series: usize },
    #[error("series {0} has a different step layout")]
    StepLayout(String),
    #[error("cluster {0} has no series")]
    EmptyCluster(usize),
    #[error("every step is excluded")]
    NoRetainedSteps,
    #[error("epsilon must be >= 0")]
    NegativeEpsilon,
}

/// One retained interval of a cluster trend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendStep {
    /// Position in the projection cycle.
    pub index: usize,
    pub from_year: i32,
    pub to_year: i32,
    /// Mean annualized change across the cluster's series.
    pub mean_pct_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTrend {
    pub cluster: usize,
    pub size: usize,
    pub steps: Vec<TrendStep>,
}

impl ClusterTrend {
    pub fn rates(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.mean_pct_change).collect()
    }
}

/// A step is dropped when either endpoint year is excluded.
pub fn is_retained(step: &PctStep, excluded: &BTreeSet<i32>) -> bool {
    !excluded.contains(&step.from_year) && !excluded.contains(&step.to_year)
}

/// Default recession exclusion window.
pub fn default_excluded_years() -> BTreeSet<i32> {
    (2008..=2012).collect()
}

/// Per-cluster mean change for every retained step. `labels[i]` is the
/// cluster of `series[i]`; clusters are `0..=max(label)`.
pub fn cluster_trends(labels: &[usize], series: &[PctChangeSeries], excluded: &BTreeSet<i32>) -> Result<Vec<ClusterTrend>, ClusterError> {
    if labels.len() != series.len() {
        return Err(ClusterError::LabelCount { labels: labels.len(), series: series.len() });
    }
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    let layout: Vec<(i32, i32)> = first.steps.iter().map(|s| (s.from_year, s.to_year)).collect();
    for s in series {
        if s.steps.len() != layout.len() || s.steps.iter().zip(&layout).any(|(a, b)| (a.from_year, a.to_year) != *b) {
            return Err(ClusterError::StepLayout(s.parcel_id.clone()));
        }
    }
    let retained: Vec<usize> = (0..layout.len()).filter(|&i| is_retained(&first.steps[i], excluded)).collect();
    if retained.is_empty() {
        return Err(ClusterError::NoRetainedSteps);
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![vec![0.0; retained.len()]; k];
    let mut sizes = vec![0usize; k];
    for (s, &label) in series.iter().zip(labels) {
        sizes[label] += 1;
        for (acc, &i) in sums[label].iter_mut().zip(&retained) {
            *acc += s.steps[i].annualized();
        }
    }
    (0..k)
        .map(|c| {
            if sizes[c] == 0 {
                return Err(ClusterError::EmptyCluster(c));
            }
            let steps = retained
                .iter()
                .enumerate()
                .map(|(index, &i)| TrendStep {
                    index,
                    from_year: layout[i].0,
                    to_year: layout[i].1,
                    mean_pct_change: sums[c][index] / sizes[c] as f64,
                })
                .collect();
            Ok(ClusterTrend { cluster: c, size: sizes[c], steps })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    pub epsilon: f64,
    pub metric: BinaryMetric,
    pub excluded_years: BTreeSet<i32>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { k: 4, epsilon: 0.0, metric: BinaryMetric::Jaccard, excluded_years: default_excluded_years() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub format_version: u32,
    pub config: ClusterConfig,
    pub k: usize,
    /// Leaf order of the dendrogram.
    pub parcel_ids: Vec<String>,
    pub labels: BTreeMap<String, usize>,
    pub cluster_sizes: Vec<usize>,
    /// Trends over the retained steps, used for projection.
    pub trends: Vec<ClusterTrend>,
    /// Trends over every step, for cumulative-change reporting.
    pub full_trends: Vec<ClusterTrend>,
    pub dendrogram: Dendrogram,
}

impl ClusterModel {
    pub fn trend(&self, cluster: usize) -> Option<&ClusterTrend> {
        self.trends.get(cluster)
    }

    /// Cumulative percent change per cluster from the first observed year,
    /// over all steps.
    pub fn cumulative_change(&self) -> Vec<Vec<(i32, f64)>> {
        self.full_trends
            .iter()
            .map(|t| {
                let mut level = 1.0;
                let mut out = Vec::with_capacity(t.steps.len() + 1);
                if let Some(s) = t.steps.first() {
                    out.push((s.from_year, 0.0));
                }
                for s in &t.steps {
                    level *= (1.0 + s.mean_pct_change).powi(s.to_year - s.from_year);
                    out.push((s.to_year, 100.0 * (level - 1.0)));
                }
                out
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster model serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Full clustering pipeline over complete training histories. Series are
/// processed in parcel-id order so the result does not depend on input
/// order beyond that.
pub fn fit_cluster_model(series: &[AssessmentSeries], cfg: &ClusterConfig) -> Result<ClusterModel, ClusterError> {
    if !(cfg.epsilon >= 0.0) {
        return Err(ClusterError::NegativeEpsilon);
    }
    let mut sorted: Vec<&AssessmentSeries> = series.iter().collect();
    sorted.sort_by(|a, b| a.parcel_id.cmp(&b.parcel_id));
    let pct = sorted.iter().map(|s| to_pct_changes(s)).collect::<Result<Vec<_>, _>>()?;
    if pct.len() < cfg.k.max(2) {
        return Err(ClusterError::InvalidK { k: cfg.k, leaves: pct.len() });
    }
    let sigs: Vec<_> = pct.iter().map(|p| binarize(p, cfg.epsilon)).collect();
    let d = distance_matrix(&sigs, cfg.metric)?;
    let dendrogram = ward_cluster(&d)?;
    let labels = cut_tree(&dendrogram, cfg.k)?;
    let trends = cluster_trends(&labels, &pct, &cfg.excluded_years)?;
    let full_trends = cluster_trends(&labels, &pct, &BTreeSet::new())?;
    let parcel_ids: Vec<String> = pct.iter().map(|p| p.parcel_id.clone()).collect();
    Ok(ClusterModel {
        format_version: CLUSTER_FORMAT_VERSION,
        config: cfg.clone(),
        k: cfg.k,
        labels: parcel_ids.iter().cloned().zip(labels.iter().copied()).collect(),
        cluster_sizes: trends.iter().map(|t| t.size).collect(),
        parcel_ids,
        trends,
        full_trends,
        dendrogram,
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len() as f64;
    let pairs = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_a * sum_b / pairs(n);
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
