use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClusterError, PctChangeSeries};

/// One bit per step: set when the absolute change exceeds the threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarySignature {
    pub parcel_id: String,
    pub bits: Vec<bool>,
}

impl BinarySignature {
    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// `bit_i = |step_i| > epsilon`.
pub fn binarize(p: &PctChangeSeries, epsilon: f64) -> BinarySignature {
    BinarySignature {
        parcel_id: p.parcel_id.clone(),
        bits: p.steps.iter().map(|s| s.pct_change.abs() > epsilon).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryMetric {
    /// 1 − |a∩b| / |a∪b| over set bits; two empty signatures are at 0.
    #[default]
    Jaccard,
    /// Fraction of positions that differ.
    Hamming,
}

impl BinaryMetric {
    pub fn distance(self, a: &BinarySignature, b: &BinarySignature) -> Result<f64, ClusterError> {
        match self {
            BinaryMetric::Jaccard => jaccard_distance(a, b),
            BinaryMetric::Hamming => hamming_distance(a, b),
        }
    }
}

fn check_len(a: &BinarySignature, b: &BinarySignature) -> Result<(), ClusterError> {
    if a.bits.len() != b.bits.len() {
        return Err(ClusterError::LengthMismatch(a.bits.len(), b.bits.len()));
    }
    Ok(())
}

pub fn jaccard_distance(a: &BinarySignature, b: &BinarySignature) -> Result<f64, ClusterError> {
    check_len(a, b)?;
    let (mut both, mut either) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        both += usize::from(x && y);
        either += usize::from(x || y);
    }
    Ok(if either == 0 { 0.0 } else { 1.0 - both as f64 / either as f64 })
}

pub fn hamming_distance(a: &BinarySignature, b: &BinarySignature) -> Result<f64, ClusterError> {
    check_len(a, b)?;
    if a.bits.is_empty() {
        return Ok(0.0);
    }
    let differ = a.bits.iter().zip(&b.bits).filter(|(x, y)| x != y).count();
    Ok(differ as f64 / a.bits.len() as f64)
}

/// Upper triangle of a symmetric matrix with zero diagonal, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedMatrix {
    n: usize,
    data: Vec<f64>,
}

#[inline]
pub(crate) fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    n * i - i * (i + 1) / 2 + (j - i - 1)
}

impl CondensedMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.data[condensed_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.data[condensed_index(self.n, j, i)],
        }
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.data
    }

    /// Build from a full square matrix, which must be symmetric with zero
    /// diagonal and nonnegative entries.
    pub fn from_square(m: &[Vec<f64>]) -> Result<Self, ClusterError> {
        let n = m.len();
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for (i, row) in m.iter().enumerate() {
            if row.len() != n {
                return Err(ClusterError::InvalidDistances(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if row[i] != 0.0 {
                return Err(ClusterError::InvalidDistances(format!("diagonal entry {i} is nonzero")));
            }
            for j in i + 1..n {
                let v = row[j];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(ClusterError::InvalidDistances(format!("entry ({i},{j}) = {v}")));
                }
                if v != m[j][i] {
                    return Err(ClusterError::InvalidDistances(format!("entry ({i},{j}) is not symmetric")));
                }
                data.push(v);
            }
        }
        Ok(CondensedMatrix { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let data = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let f = &f;
                (i + 1..n).map(move |j| f(i, j))
            })
            .collect();
        CondensedMatrix { n, data }
    }
}

/// Pairwise distances between signatures.
pub fn distance_matrix(sigs: &[BinarySignature], metric: BinaryMetric) -> Result<CondensedMatrix, ClusterError> {
    if let Some(first) = sigs.first() {
        if let Some(bad) = sigs.iter().find(|s| s.bits.len() != first.bits.len()) {
            return Err(ClusterError::LengthMismatch(first.bits.len(), bad.bits.len()));
        }
    }
    Ok(CondensedMatrix::from_fn(sigs.len(), |i, j| metric.distance(&sigs[i], &sigs[j]).expect("lengths checked")))
}
