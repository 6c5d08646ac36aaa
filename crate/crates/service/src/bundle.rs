//! The immutable set of inputs and trained artifacts the API serves.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use taxfund_core::artifacts::{files, sha256_hex, sorted_json, ArtifactError, RunManifest, Stage, WorkDir};
use taxfund_core::cluster::ClusterModel;
use taxfund_core::cost::{run_prepared, prepare_scenario, CostError, CostEstimate, ScenarioConfig};
use taxfund_core::data::{load_dataset, DataError, Dataset, DatasetPaths, ParcelRecord};
use taxfund_core::eligibility::{DatasetEligibility, EligibilityContext, ModelIncome};
use taxfund_core::forecast::{ClusterClassifier, ForecastTable};
use taxfund_core::income::IncomeModel;
use taxfund_core::policy::{PolicyConfig, PolicyError};

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("eligibility results were computed under policy {found}, but the loaded policy is {expected}")]
    PolicyMismatch { expected: String, found: String },
}

/// Build facts reported alongside every response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleMetadata {
    pub checksum: String,
    pub tool_version: String,
    pub policy_checksum: String,
    /// SHA-256 of each component's canonical JSON.
    pub components: BTreeMap<String, String>,
    /// Seed recorded by each stage that produced a loaded artifact.
    pub stage_seeds: BTreeMap<String, u64>,
}

#[derive(Debug)]
pub struct Bundle {
    pub dataset: Dataset,
    pub policy: PolicyConfig,
    pub cluster_model: ClusterModel,
    pub classifier: ClusterClassifier,
    pub income_model: IncomeModel,
    pub forecasts: ForecastTable,
    pub eligibility: DatasetEligibility,
    pub metadata: BundleMetadata,
    /// Program-area parcels sorted by id.
    program: Vec<usize>,
}

fn digest<T: Serialize>(v: &T) -> String {
    sha256_hex(sorted_json(v).as_bytes())
}

impl Bundle {
    /// Assemble a bundle from in-memory parts. `stage_seeds` is informational.
    pub fn from_parts(
        dataset: Dataset,
        policy: PolicyConfig,
        cluster_model: ClusterModel,
        classifier: ClusterClassifier,
        income_model: IncomeModel,
        forecasts: ForecastTable,
        eligibility: DatasetEligibility,
        stage_seeds: BTreeMap<String, u64>,
    ) -> Result<Self, BundleError> {
        let policy_checksum = policy.checksum();
        if eligibility.policy_checksum != policy_checksum {
            return Err(BundleError::PolicyMismatch { expected: policy_checksum, found: eligibility.policy_checksum });
        }
        let components: BTreeMap<String, String> = [
            ("dataset", digest(&dataset)),
            ("cluster_model", digest(&cluster_model)),
            ("classifier", digest(&classifier)),
            ("income_model", digest(&income_model)),
            ("forecasts", digest(&forecasts)),
            ("eligibility", digest(&eligibility)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        let checksum = sha256_hex(sorted_json(&(&policy_checksum, &components)).as_bytes());
        let mut program: Vec<usize> = (0..dataset.parcels.len()).filter(|&i| dataset.parcels[i].neighborhood.in_program_area()).collect();
        program.sort_by(|&a, &b| dataset.parcels[a].parcel_id.cmp(&dataset.parcels[b].parcel_id));
        let metadata = BundleMetadata {
            checksum,
            tool_version: taxfund_core::artifacts::TOOL_VERSION.to_owned(),
            policy_checksum,
            components,
            stage_seeds,
        };
        Ok(Bundle { dataset, policy, cluster_model, classifier, income_model, forecasts, eligibility, metadata, program })
    }

    /// Load the dataset from `data_dir`, the policy from `policy_path`, and
    /// the cluster, income, forecast and eligibility outputs from `work`.
    pub fn load(data_dir: &Path, policy_path: &Path, work: &WorkDir) -> Result<Self, BundleError> {
        let dataset = load_dataset(&DatasetPaths::in_dir(data_dir))?.dataset;
        let policy_text = std::fs::read_to_string(policy_path).map_err(|e| ArtifactError::io(policy_path, e))?;
        let policy = PolicyConfig::from_json(&policy_text)?;
        let mut seeds = BTreeMap::new();
        for stage in [Stage::Cluster, Stage::TrainIncome, Stage::Forecast, Stage::Eligibility] {
            seeds.insert(stage.as_str().to_owned(), RunManifest::read(&work.require(stage)?)?.seed);
        }
        let read = |stage, file| -> Result<String, BundleError> {
            let path = work.artifact(stage, file)?;
            Ok(std::fs::read_to_string(&path).map_err(|e| ArtifactError::io(&path, e))?)
        };
        let json_err = |stage: Stage, file: &str, source| ArtifactError::Json { path: work.stage_dir(stage).join(file), source };
        let cluster_model = ClusterModel::from_json(&read(Stage::Cluster, files::CLUSTER_MODEL)?)
            .map_err(|e| json_err(Stage::Cluster, files::CLUSTER_MODEL, e))?;
        let classifier = ClusterClassifier::from_json(&read(Stage::Forecast, files::CLASSIFIER)?)
            .map_err(|e| json_err(Stage::Forecast, files::CLASSIFIER, e))?;
        let income_model = IncomeModel::from_json(&read(Stage::TrainIncome, files::INCOME_MODEL)?)
            .map_err(|e| json_err(Stage::TrainIncome, files::INCOME_MODEL, e))?;
        let forecasts: ForecastTable = serde_json::from_str(&read(Stage::Forecast, files::FORECAST_JSON)?)
            .map_err(|e| json_err(Stage::Forecast, files::FORECAST_JSON, e))?;
        let eligibility: DatasetEligibility = serde_json::from_str(&read(Stage::Eligibility, files::ELIGIBILITY_JSON)?)
            .map_err(|e| json_err(Stage::Eligibility, files::ELIGIBILITY_JSON, e))?;
        Self::from_parts(dataset, policy, cluster_model, classifier, income_model, forecasts, eligibility, seeds)
    }

    pub fn checksum(&self) -> &str {
        &self.metadata.checksum
    }

    /// Program-area parcels in id order.
    pub fn program_parcels(&self) -> impl Iterator<Item = &ParcelRecord> {
        self.program.iter().map(|&i| &self.dataset.parcels[i])
    }

    pub fn program_parcel(&self, id: &str) -> Option<&ParcelRecord> {
        self.program
            .binary_search_by(|&i| self.dataset.parcels[i].parcel_id.as_str().cmp(id))
            .ok()
            .map(|k| &self.dataset.parcels[self.program[k]])
    }

    /// The policy context with neighborhood ratios, before any scenario or
    /// dataset-mode settings.
    pub fn policy_context(&self) -> EligibilityContext {
        self.policy.context_with_stats(&self.dataset.neighborhood_stats)
    }

    /// The context the dataset-mode results were computed under.
    pub fn dataset_context(&self) -> EligibilityContext {
        self.eligibility.settings.apply_to(&self.policy_context())
    }

    pub fn incomes(&self) -> ModelIncome<'_> {
        ModelIncome { model: &self.income_model, config_year: self.policy.config_year }
    }

    /// Run a scenario exactly as the `simulate` stage does.
    pub fn run_scenario(&self, sc: &ScenarioConfig) -> Result<CostEstimate, CostError> {
        let idx = self.dataset.index();
        let prepared = prepare_scenario(&idx, &self.dataset.parcels, &self.forecasts, &self.incomes(), &self.policy_context(), sc, &self.policy.millage)?;
        Ok(run_prepared(&prepared))
    }
}
