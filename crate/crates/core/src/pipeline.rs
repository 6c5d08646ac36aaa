//! One function per pipeline stage, in memory. The command-line stages
//! wrap these with file input and output.

use serde::{Deserialize, Serialize};

use crate::cluster::{fit_cluster_model, ClusterConfig, ClusterError, ClusterModel};
use crate::data::{complete_series, Dataset};
use crate::eligibility::{evaluate_dataset, DatasetEligibility, DatasetModeSettings, EligibilityError, ModelIncome};
use crate::forecast::{
    classifier_importance, fit_cluster_classifier, forecast_all, training_matrix, ClusterClassifier, ForecastConfig, ForecastError,
    ForecastTable,
};
use crate::forest::{ForestParams, ImputeParams, PermutationImportance};
use crate::income::{prepare_cex, train_income_model, IncomeError, IncomeFeatures, IncomeModel};
use crate::policy::PolicyConfig;
use crate::rng::{derive_seed, tag};

/// Permutation rounds per feature when ranking classifier features.
pub const IMPORTANCE_REPEATS: usize = 3;

pub fn cluster_stage(d: &Dataset, cfg: &ClusterConfig) -> Result<ClusterModel, ClusterError> {
    fit_cluster_model(&complete_series(d), cfg)
}

/// Everything the forecast stage produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastOutputs {
    pub classifier: ClusterClassifier,
    pub importance: PermutationImportance,
    pub table: ForecastTable,
}

pub fn forecast_stage(d: &Dataset, cm: &ClusterModel, cfg: &ForecastConfig, config_year: i32, seed: u64) -> Result<ForecastOutputs, ForecastError> {
    let (m, labels) = training_matrix(d, cm, config_year)?;
    let classifier = fit_cluster_classifier(&m, &labels, &ForestParams::classification(seed), config_year)?;
    let importance = classifier_importance(&classifier, &m, &labels, IMPORTANCE_REPEATS, derive_seed(seed, &[tag::PERMUTE]))?;
    let table = forecast_all(d, cm, &classifier, cfg)?;
    Ok(ForecastOutputs { classifier, importance, table })
}

pub fn income_stage(d: &Dataset, policy: &PolicyConfig, features: IncomeFeatures, seed: u64) -> Result<IncomeModel, IncomeError> {
    let m = prepare_cex(&d.cex, &policy.cex_filter, features)?;
    train_income_model(&m, &ForestParams::regression(seed), &ImputeParams::new(derive_seed(seed, &[tag::IMPUTE])))
}

pub fn eligibility_stage(d: &Dataset, policy: &PolicyConfig, im: &IncomeModel, settings: &DatasetModeSettings) -> Result<DatasetEligibility, EligibilityError> {
    let ctx = policy.context_with_stats(&d.neighborhood_stats);
    let incomes = ModelIncome { model: im, config_year: policy.config_year };
    let results = evaluate_dataset(&d.index(), &d.parcels, &incomes, &ctx, settings)?;
    Ok(DatasetEligibility { settings: *settings, policy_checksum: policy.checksum(), results })
}
