//! On-disk layout of pipeline outputs and the manifest written beside them.
//!
//! A work directory holds one subdirectory per stage. Every stage directory
//! carries a `manifest.json` naming the command, seed, configuration
//! checksums and SHA-256 digests of the files it read and wrote.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// File names inside stage directories.
pub mod files {
    pub const POLICY: &str = "policy.json";
    pub const TRUTH: &str = "ground_truth.json";
    pub const VALIDATION_REPORT: &str = "validation_report.json";
    pub const CLUSTER_MODEL: &str = "cluster_model.json";
    pub const CUMULATIVE_TRENDS: &str = "cumulative_trends.csv";
    pub const INCOME_MODEL: &str = "income_model.json";
    pub const CLASSIFIER: &str = "classifier.json";
    pub const IMPORTANCE: &str = "importance.json";
    pub const FORECAST_CSV: &str = "forecast.csv";
    pub const FORECAST_JSON: &str = "forecast.json";
    pub const ELIGIBILITY_JSON: &str = "eligibility.json";
    pub const ELIGIBILITY_CSV: &str = "eligibility.csv";
    pub const COST_ESTIMATE: &str = "cost_estimate.json";
    pub const PER_YEAR_CSV: &str = "per_year.csv";
    pub const AUDIT_CSV: &str = "audit.csv";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Synth,
    Ingest,
    Cluster,
    TrainIncome,
    Forecast,
    Eligibility,
    Simulate,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Synth, Stage::Ingest, Stage::Cluster, Stage::TrainIncome, Stage::Forecast, Stage::Eligibility, Stage::Simulate];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Cluster => "cluster",
            Stage::TrainIncome => "train-income",
            Stage::Forecast => "forecast",
            Stage::Eligibility => "eligibility",
            Stage::Simulate => "simulate",
        }
    }

    /// Stages whose outputs this one reads from the work directory.
    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Synth | Stage::Ingest => &[],
            Stage::Cluster | Stage::TrainIncome => &[Stage::Ingest],
            Stage::Forecast => &[Stage::Cluster],
            Stage::Eligibility => &[Stage::TrainIncome],
            Stage::Simulate => &[Stage::Forecast, Stage::TrainIncome],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("missing {} output in {}: run stage {stage} first", stage, dir.display())]
    MissingStage { stage: Stage, dir: PathBuf },
    #[error("missing artifact {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
}

impl ArtifactError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ArtifactError::Io { path: path.to_path_buf(), source }
    }
}

/// Provenance record for one stage directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub stage: Stage,
    /// The command line, program name excluded.
    pub command: Vec<String>,
    pub seed: u64,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
    pub config_checksums: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(stage: Stage, command: Vec<String>, seed: u64) -> Self {
        RunManifest {
            manifest_version: MANIFEST_VERSION,
            tool_version: TOOL_VERSION.to_owned(),
            stage,
            command,
            seed,
            timestamp: build_timestamp(),
            config_checksums: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Record the digest of an input file under `label`.
    pub fn add_input(&mut self, label: impl Into<String>, path: &Path) -> Result<(), ArtifactError> {
        self.inputs.insert(label.into(), sha256_file(path)?);
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, ArtifactError> {
        read_json(&dir.join(MANIFEST_FILE))
    }
}

/// `SOURCE_DATE_EPOCH` if set and numeric, otherwise the current time.
pub fn build_timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()).unwrap_or_else(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, ArtifactError> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ArtifactError::MissingFile(path.to_path_buf()),
        _ => ArtifactError::io(path, e),
    })?;
    Ok(sha256_hex(&bytes))
}

/// Pretty JSON with object keys sorted, ending in a newline.
///
/// ```
/// use std::collections::HashMap;
/// let m: HashMap<&str, u32> = [("b", 2), ("a", 1)].into();
/// assert_eq!(taxfund_core::artifacts::sorted_json(&m), "{\n  \"a\": 1,\n  \"b\": 2\n}\n");
/// ```
pub fn sorted_json<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value serializes to JSON");
    let mut s = serde_json::to_string_pretty(&v).expect("JSON value prints");
    s.push('\n');
    s
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ArtifactError::MissingFile(path.to_path_buf()),
        _ => ArtifactError::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|source| ArtifactError::Json { path: path.to_path_buf(), source })
}

/// A work directory of stage outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkDir {
    root: PathBuf,
}

impl WorkDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        WorkDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.as_str())
    }

    /// The directory of a finished stage; an error naming the stage to run
    /// when its manifest is absent.
    pub fn require(&self, stage: Stage) -> Result<PathBuf, ArtifactError> {
        let dir = self.stage_dir(stage);
        if dir.join(MANIFEST_FILE).is_file() {
            Ok(dir)
        } else {
            Err(ArtifactError::MissingStage { stage, dir })
        }
    }

    pub fn artifact(&self, stage: Stage, file: &str) -> Result<PathBuf, ArtifactError> {
        let path = self.require(stage)?.join(file);
        if path.is_file() {
            Ok(path)
        } else {
            Err(ArtifactError::MissingFile(path))
        }
    }
}
