use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DesignMatrix, ForestError, ForestModel, Prediction, Target, Task};
use crate::rng::{stream, tag};

/// Increase in error when each feature column is shuffled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationImportance {
    pub feature_names: Vec<String>,
    /// Mean error increase per feature; may be negative.
    pub raw: Vec<f64>,
    pub baseline_error: f64,
    /// Whether errors were computed out-of-bag (the matrix is the training
    /// matrix) or from the full ensemble (any other matrix).
    pub out_of_bag: bool,
}

impl PermutationImportance {
    /// Scores with negative values clamped to zero, for reporting.
    pub fn clamped(&self) -> Vec<f64> {
        self.raw.iter().map(|v| v.max(0.0)).collect()
    }

    /// Feature indices from most to least important (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.raw.len()).collect();
        idx.sort_by(|&a, &b| self.raw[b].total_cmp(&self.raw[a]).then(a.cmp(&b)));
        idx
    }
}

fn error(task: Task, target: &Target, preds: &[Option<Prediction>]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, p) in preds.iter().enumerate() {
        match (task, target, p) {
            (Task::Regression, Target::Numeric(y), Some(Prediction::Value(v))) => {
                sum += (y[i] - v).powi(2);
                n += 1;
            }
            (Task::Classification, Target::Labels(y), Some(Prediction::Label(l))) => {
                sum += f64::from(u8::from(*l != y[i]));
                n += 1;
            }
            _ => {}
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean over `repeats` of (error with column j shuffled − baseline error),
/// using mean squared error or misclassification rate. When `m` is the
/// training matrix, errors are out-of-bag.
pub fn permutation_importance(
    f: &ForestModel,
    m: &DesignMatrix,
    repeats: usize,
    seed: u64,
) -> Result<PermutationImportance, ForestError> {
    let target = m.target().ok_or(ForestError::NoTarget)?;
    if m.n_cols() != f.n_features() {
        return Err(ForestError::ArityMismatch { expected: f.n_features(), found: m.n_cols() });
    }
    let n = m.n_rows();
    let out_of_bag = n == f.n_train_rows;
    let predict_all = |rows: &[&[f64]]| -> Vec<Option<Prediction>> {
        if out_of_bag {
            f.oob_predictions(rows)
        } else {
            rows.par_iter().map(|r| f.predict(r).ok()).collect()
        }
    };

    let rows: Vec<&[f64]> = (0..n).map(|r| m.row(r)).collect();
    let baseline_error = error(f.task, target, &predict_all(&rows));
    let repeats = repeats.max(1);

    let raw = (0..m.n_cols())
        .map(|j| {
            let mut total = 0.0;
            for rep in 0..repeats {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut stream(seed, &[tag::PERMUTE, j as u64, rep as u64]));
                let shuffled: Vec<Vec<f64>> = (0..n)
                    .map(|r| {
                        let mut row = rows[r].to_vec();
                        row[j] = rows[perm[r]][j];
                        row
                    })
                    .collect();
                let refs: Vec<&[f64]> = shuffled.iter().map(Vec::as_slice).collect();
                total += error(f.task, target, &predict_all(&refs)) - baseline_error;
            }
            total / repeats as f64
        })
        .collect();

    Ok(PermutationImportance { feature_names: m.columns().to_vec(), raw, baseline_error, out_of_bag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{train_forest, ForestParams};
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn signal_and_noise(seed: u64) -> DesignMatrix {
        let mut rng = stream(seed, &[]);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let rows: Vec<Vec<f64>> =
            (0..300).map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), 4.0]).collect();
        let y = rows.iter().map(|r| r[0] + noise.sample(&mut rng)).collect();
        DesignMatrix::from_dense(vec!["x1".into(), "x2".into(), "const".into()], &rows)
            .unwrap()
            .with_target(Target::Numeric(y))
            .unwrap()
    }

    #[test]
    fn signal_outranks_noise_and_constant_scores_zero() {
        let m = signal_and_noise(3);
        let f = train_forest(&m, &ForestParams::regression(1).with_trees(40)).unwrap();
        let imp = permutation_importance(&f, &m, 3, 9).unwrap();
        assert!(imp.out_of_bag);
        assert!(imp.raw[0] > imp.raw[1]);
        assert_eq!(imp.raw[2], 0.0);
        assert_eq!(imp.ranking()[0], 0);
        assert!(imp.clamped().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let m = signal_and_noise(4);
        let f = train_forest(&m, &ForestParams::regression(1).with_trees(20)).unwrap();
        assert_eq!(permutation_importance(&f, &m, 2, 5).unwrap(), permutation_importance(&f, &m, 2, 5).unwrap());
    }
}
