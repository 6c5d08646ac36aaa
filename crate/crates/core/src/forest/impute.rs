//! Iterative random-forest imputation.
//!
//! MISSING cells start at their column mean. Columns with missing cells are
//! then revisited in ascending order of missingness: a regression forest is
//! fit on the rows where the column is observed, using every other column
//! as features, and predicts the missing rows. Sweeps repeat until the
//! relative Frobenius change of the imputed cells falls below `tol` or
//! `max_iters` sweeps have run. Observed cells are never written.

use serde::{Deserialize, Serialize};

use super::{train_forest, DesignMatrix, ForestError, ForestParams, Target};
use crate::rng::{derive_seed, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeParams {
    pub forest: ForestParams,
    pub max_iters: usize,
    /// Stop once Σ(new − old)² / Σ new² over imputed cells drops below this.
    pub tol: f64,
}

impl ImputeParams {
    pub fn new(seed: u64) -> Self {
        ImputeParams { forest: ForestParams::regression(seed), max_iters: 10, tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputeReport {
    pub matrix: DesignMatrix,
    pub iterations: usize,
    pub last_change: f64,
    pub converged: bool,
}

/// Fill every MISSING cell of `m`. See the module docs for the scheme.
pub fn impute(m: &DesignMatrix, params: &ForestParams, max_iters: usize, tol: f64) -> Result<DesignMatrix, ForestError> {
    impute_report(m, &ImputeParams { forest: params.clone(), max_iters, tol }).map(|r| r.matrix)
}

pub fn impute_report(m: &DesignMatrix, params: &ImputeParams) -> Result<ImputeReport, ForestError> {
    if !m.has_missing() {
        return Ok(ImputeReport { matrix: m.clone(), iterations: 0, last_change: 0.0, converged: true });
    }
    let (n, p) = (m.n_rows(), m.n_cols());
    let mut out = m.clone();
    let mut missing: Vec<Vec<usize>> = vec![Vec::new(); p];

    for c in 0..p {
        let observed: Vec<f64> = m.column(c).filter(|v| !v.is_nan()).collect();
        if observed.is_empty() {
            return Err(ForestError::EmptyColumn(m.columns()[c].clone()));
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for r in 0..n {
            if m.get(r, c).is_none() {
                out.set(r, c, mean);
                missing[c].push(r);
            }
        }
    }

    let mut order: Vec<usize> = (0..p).filter(|&c| !missing[c].is_empty()).collect();
    order.sort_by_key(|&c| (missing[c].len(), c));

    // A single column has nothing to regress on; the mean stays.
    if p == 1 {
        return Ok(ImputeReport { matrix: out, iterations: 0, last_change: 0.0, converged: true });
    }

    let names: Vec<String> = m.columns().to_vec();
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    while iterations < params.max_iters {
        let previous: Vec<Vec<f64>> =
            order.iter().map(|&c| missing[c].iter().map(|&r| out.row(r)[c]).collect()).collect();

        for &c in &order {
            let features: Vec<String> = names.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, s)| s.clone()).collect();
            let feature_row = |r: usize| -> Vec<f64> {
                out.row(r).iter().enumerate().filter(|(j, _)| *j != c).map(|(_, v)| *v).collect()
            };
            let observed_rows: Vec<usize> = (0..n).filter(|&r| m.get(r, c).is_some()).collect();
            let x: Vec<Vec<f64>> = observed_rows.iter().map(|&r| feature_row(r)).collect();
            let y: Vec<f64> = observed_rows.iter().map(|&r| m.row(r)[c]).collect();
            let train = DesignMatrix::from_dense(features, &x)?.with_target(Target::Numeric(y))?;
            let forest_params = ForestParams {
                seed: derive_seed(params.forest.seed, &[tag::IMPUTE, iterations as u64, c as u64]),
                ..params.forest.clone()
            };
            let forest = train_forest(&train, &forest_params)?;
            let predictions: Vec<f64> = missing[c]
                .iter()
                .map(|&r| forest.predict_value(&feature_row(r)))
                .collect::<Result<_, _>>()?;
            for (&r, v) in missing[c].iter().zip(predictions) {
                out.set(r, c, v);
            }
        }
        iterations += 1;

        let (mut diff, mut norm) = (0.0, 0.0);
        for (k, &c) in order.iter().enumerate() {
            for (i, &r) in missing[c].iter().enumerate() {
                let new = out.row(r)[c];
                diff += (new - previous[k][i]).powi(2);
                norm += new * new;
            }
        }
        last_change = if norm > 0.0 { diff / norm } else { 0.0 };
        if last_change < params.tol {
            break;
        }
    }

    Ok(ImputeReport { matrix: out, iterations, last_change, converged: last_change < params.tol })
}

/// Normalized RMSE over the cells that are MISSING in `masked`: squared
/// errors in each column are scaled by that column's variance in `truth`,
/// pooled, and square-rooted. Mean imputation scores about 1.
pub fn nrmse(truth: &DesignMatrix, imputed: &DesignMatrix, masked: &DesignMatrix) -> f64 {
    let (mut total, mut cells) = (0.0, 0usize);
    for c in 0..truth.n_cols() {
        let values: Vec<f64> = truth.column(c).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        for r in (0..truth.n_rows()).filter(|&r| masked.get(r, c).is_none()) {
            let err = (imputed.row(r)[c] - values[r]).powi(2);
            total += if var > 0.0 { err / var } else { err };
            cells += 1;
        }
    }
    if cells == 0 {
        0.0
    } else {
        (total / cells as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn complete_matrix_is_unchanged() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let m = DesignMatrix::from_dense(vec!["a".into(), "b".into()], &rows).unwrap();
        let out = impute(&m, &ForestParams::regression(0), 10, 1e-3).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn empty_column_is_an_error() {
        let rows = vec![vec![1.0, f64::NAN], vec![3.0, f64::NAN]];
        let m = DesignMatrix::from_dense(vec!["a".into(), "b".into()], &rows).unwrap();
        assert!(matches!(impute(&m, &ForestParams::regression(0), 3, 1e-3), Err(ForestError::EmptyColumn(c)) if c == "b"));
    }

    #[test]
    fn observed_cells_are_bit_identical() {
        let mut rng = stream(4, &[]);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..1.0);
                let b = if rng.random_bool(0.2) { f64::NAN } else { 2.0 * a + 0.1 };
                vec![a, b, rng.random_range(0.0..1.0)]
            })
            .collect();
        let m = DesignMatrix::from_dense(vec!["a".into(), "b".into(), "c".into()], &rows).unwrap();
        let out = impute(&m, &ForestParams::regression(1).with_trees(20), 4, 1e-3).unwrap();
        assert!(!out.has_missing());
        for r in 0..m.n_rows() {
            for c in 0..m.n_cols() {
                if let Some(v) = m.get(r, c) {
                    assert_eq!(out.get(r, c).unwrap().to_bits(), v.to_bits());
                }
            }
        }
    }
}
