//! Policy inputs: income limits, lien rates, tax rates and the survey
//! filter, loaded from one JSON document and fingerprinted so results can
//! name the exact policy they were computed under.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::{CostError, MillageConfig};
use crate::data::{Neighborhood, NeighborhoodStats};
use crate::eligibility::{AmiTable, EligibilityContext, EligibilityError};
use crate::income::CexFilter;

pub const POLICY_VERSION: u32 = 1;

const EXAMPLE: &str = include_str!("../data/policy.example.json");

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("policy JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("policy version {0} is not supported (expected {POLICY_VERSION})")]
    Version(u32),
    #[error(transparent)]
    Eligibility(#[from] EligibilityError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub version: u32,
    pub name: String,
    pub config_year: i32,
    pub ami_limits: AmiTable,
    pub lien_rates: BTreeMap<Neighborhood, f64>,
    pub default_lien_rate: f64,
    pub millage: MillageConfig,
    #[serde(default)]
    pub cex_filter: CexFilter,
}

impl PolicyConfig {
    /// The shipped example. Its dollar figures are placeholders to be
    /// replaced with the program's published limits and rates.
    pub fn example() -> Self {
        Self::from_json(EXAMPLE).expect("bundled example policy is valid")
    }

    pub fn example_json() -> &'static str {
        EXAMPLE
    }

    pub fn from_json(s: &str) -> Result<Self, PolicyError> {
        let p: PolicyConfig = serde_json::from_str(s)?;
        if p.version != POLICY_VERSION {
            return Err(PolicyError::Version(p.version));
        }
        p.context().validate()?;
        p.millage.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }

    /// SHA-256 of the compact canonical serialization, hex encoded.
    pub fn checksum(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("policy serializes");
        hex::encode(Sha256::digest(canonical))
    }

    /// Eligibility context with the policy's limits and lien rates and no
    /// neighborhood ratios.
    pub fn context(&self) -> EligibilityContext {
        let mut ctx = EligibilityContext::new(self.ami_limits.clone());
        ctx.lien_rates = self.lien_rates.clone();
        ctx.default_lien_rate = self.default_lien_rate;
        ctx
    }

    pub fn context_with_stats(&self, stats: &[NeighborhoodStats]) -> EligibilityContext {
        self.context().with_stats(stats)
    }
}
