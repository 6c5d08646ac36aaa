//! Cluster assignment and assessed-value projection.
//!
//! A classification forest learns the training-area cluster labels from
//! house characteristics, assigns program-area parcels to those clusters,
//! and each parcel's base-year value is projected along its cluster's trend.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterModel;
use crate::data::{Dataset, LandUse, ParcelRecord, UnknownVariant};
use crate::forest::{permutation_importance, train_forest, DesignMatrix, ForestError, ForestModel, ForestParams, PermutationImportance, Target};

/// Bumped whenever the classifier feature layout changes.
pub const FEATURE_ENCODING_VERSION: u32 = 1;

const LAND_USE_COLUMNS: [(LandUse, &str); 8] = [
    (LandUse::OneFamily, "land_use_one_family"),
    (LandUse::TwoFamily, "land_use_two_family"),
    (LandUse::ThreeFamily, "land_use_three_family"),
    (LandUse::Condo, "land_use_condo"),
    (LandUse::Townhouse, "land_use_townhouse"),
    (LandUse::CondoLoft, "land_use_condo_loft"),
    (LandUse::EmptyLot, "land_use_empty_lot"),
    (LandUse::Other, "land_use_other"),
];

const OTHER_COLUMNS: [&str; 15] = [
    "living_units_1",
    "living_units_2",
    "living_units_3_plus",
    "land_acres",
    "heated_sqft",
    "rooms",
    "bedrooms",
    "bathrooms",
    "distance_to_beltline_m",
    "city_exemption",
    "county_exemption",
    "homestead_exemption",
    "owner_occupied",
    "home_age",
    "reference_value",
];

/// Classifier feature names in encoding order.
pub fn feature_names() -> Vec<String> {
    LAND_USE_COLUMNS.iter().map(|(_, n)| *n).chain(OTHER_COLUMNS).map(str::to_owned).collect()
}

/// Encode one parcel. `reference_value` is the parcel's value in its
/// reference year: the first observed year for training parcels, the base
/// year for parcels being forecast.
pub fn encode_parcel(p: &ParcelRecord, config_year: i32, reference_value: f64) -> Vec<f64> {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let mut row: Vec<f64> = LAND_USE_COLUMNS.iter().map(|(u, _)| flag(p.land_use == *u)).collect();
    row.extend([
        flag(p.living_units == 1),
        flag(p.living_units == 2),
        flag(p.living_units >= 3),
        p.land_acres,
        p.heated_sqft,
        f64::from(p.rooms),
        f64::from(p.bedrooms),
        f64::from(p.bathrooms),
        p.distance_to_beltline,
        flag(p.city_exemption),
        flag(p.county_exemption),
        flag(p.homestead_exemption),
        flag(p.owner_occupied()),
        p.home_age(config_year),
        reference_value,
    ]);
    row
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ForecastError {
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("cluster {cluster} has {count} training parcels, fewer than min_leaf {min_leaf}")]
    SparseCluster { cluster: usize, count: usize, min_leaf: usize },
    #[error("{0} training rows but {1} labels")]
    LabelCount(usize, usize),
    #[error("classifier was trained with feature encoding v{found}, expected v{expected}")]
    EncodingVersion { found: u32, expected: u32 },
    #[error("classifier features do not match the current encoding")]
    FeatureMismatch,
    #[error("base value must be positive, got {0}")]
    NonPositiveBase(f64),
    #[error("trend is empty")]
    EmptyTrend,
    #[error("trend step {0} is <= -1")]
    CollapsingStep(f64),
    #[error("cluster {0} has no trend")]
    UnknownCluster(usize),
    #[error("training parcel {0} has no assessment history")]
    MissingHistory(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterClassifier {
    pub encoding_version: u32,
    pub config_year: i32,
    pub forest: ForestModel,
    pub training_accuracy: f64,
    pub oob_accuracy: f64,
}

impl ClusterClassifier {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classifier serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    fn check_encoding(&self) -> Result<(), ForecastError> {
        if self.encoding_version != FEATURE_ENCODING_VERSION {
            return Err(ForecastError::EncodingVersion { found: self.encoding_version, expected: FEATURE_ENCODING_VERSION });
        }
        if self.forest.feature_names != feature_names() {
            return Err(ForecastError::FeatureMismatch);
        }
        Ok(())
    }
}

/// Design matrix of training parcels labelled by cluster, using the first
/// observed value of each history as the reference value.
pub fn training_matrix(d: &Dataset, cm: &ClusterModel, config_year: i32) -> Result<(DesignMatrix, Vec<usize>), ForecastError> {
    let idx = d.index();
    let mut rows = Vec::with_capacity(cm.parcel_ids.len());
    let mut labels = Vec::with_capacity(cm.parcel_ids.len());
    for id in &cm.parcel_ids {
        let (Some(p), Some(s)) = (idx.parcels.get(id.as_str()), idx.assessments.get(id.as_str())) else {
            return Err(ForecastError::MissingHistory(id.clone()));
        };
        let Some((_, first)) = s.observations.iter().next() else {
            return Err(ForecastError::MissingHistory(id.clone()));
        };
        rows.push(encode_parcel(p, config_year, *first));
        labels.push(cm.labels[id]);
    }
    let m = DesignMatrix::from_dense(feature_names(), &rows)?;
    Ok((m, labels))
}

pub fn fit_cluster_classifier(m: &DesignMatrix, labels: &[usize], params: &ForestParams, config_year: i32) -> Result<ClusterClassifier, ForecastError> {
    if m.n_rows() != labels.len() {
        return Err(ForecastError::LabelCount(m.n_rows(), labels.len()));
    }
    if m.columns() != feature_names().as_slice() {
        return Err(ForecastError::FeatureMismatch);
    }
    let k = labels.iter().max().map_or(0, |x| x + 1);
    for cluster in 0..k {
        let count = labels.iter().filter(|&&l| l == cluster).count();
        if count < params.min_leaf.max(1) {
            return Err(ForecastError::SparseCluster { cluster, count, min_leaf: params.min_leaf });
        }
    }
    let m = m.clone().with_target(Target::Labels(labels.to_vec()))?;
    let forest = train_forest(&m, params)?;
    let hits = (0..m.n_rows()).filter(|&r| forest.predict_label(m.row(r)).ok() == Some(labels[r])).count();
    Ok(ClusterClassifier {
        encoding_version: FEATURE_ENCODING_VERSION,
        config_year,
        training_accuracy: hits as f64 / m.n_rows() as f64,
        oob_accuracy: forest.oob_score,
        forest,
    })
}

/// Permutation importance of the classifier features on its training rows.
pub fn classifier_importance(c: &ClusterClassifier, m: &DesignMatrix, labels: &[usize], repeats: usize, seed: u64) -> Result<PermutationImportance, ForecastError> {
    let m = m.clone().with_target(Target::Labels(labels.to_vec()))?;
    Ok(permutation_importance(&c.forest, &m, repeats, seed)?)
}

/// Label every target parcel. Each entry is `(parcel, reference value)`.
pub fn assign_clusters(c: &ClusterClassifier, targets: &[(&ParcelRecord, f64)]) -> Result<BTreeMap<String, usize>, ForecastError> {
    c.check_encoding()?;
    targets
        .par_iter()
        .map(|(p, v)| Ok((p.parcel_id.clone(), c.forest.predict_label(&encode_parcel(p, c.config_year, *v))?)))
        .collect::<Result<Vec<_>, ForecastError>>()
        .map(|v| v.into_iter().collect())
}

/// `v_{t+1} = v_t·(1 + step_t)`; when the horizon is longer than the trend
/// the steps repeat from the start.
pub fn project_values(base_value: f64, trend: &[f64], horizon: usize) -> Result<Vec<f64>, ForecastError> {
    if !(base_value > 0.0) {
        return Err(ForecastError::NonPositiveBase(base_value));
    }
    if trend.is_empty() {
        return Err(ForecastError::EmptyTrend);
    }
    if let Some(&bad) = trend.iter().find(|s| !(**s > -1.0)) {
        return Err(ForecastError::CollapsingStep(bad));
    }
    let mut v = base_value;
    Ok(trend
        .iter()
        .cycle()
        .take(horizon)
        .map(|s| {
            v *= 1.0 + s;
            v
        })
        .collect())
}

/// Flat-rate appreciation used before the trend model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegacyAppreciationConfig {
    pub base_rate: f64,
    pub low_value_rate: f64,
    pub threshold: f64,
}

impl Default for LegacyAppreciationConfig {
    fn default() -> Self {
        LegacyAppreciationConfig { base_rate: 0.12, low_value_rate: 0.50, threshold: 37_000.0 }
    }
}

/// Values below the threshold grow at `low_value_rate`, others at
/// `base_rate`; the rate is chosen before each step.
pub fn legacy_forecast(base_value: f64, cfg: &LegacyAppreciationConfig, horizon: usize) -> Vec<f64> {
    let mut v = base_value;
    (0..horizon)
        .map(|_| {
            let rate = if v < cfg.threshold { cfg.low_value_rate } else { cfg.base_rate };
            v *= 1.0 + rate;
            v
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMethod {
    #[default]
    ClusterTrend,
    LegacyFlat,
}

impl ForecastMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ForecastMethod::ClusterTrend => "cluster_trend",
            ForecastMethod::LegacyFlat => "legacy_flat",
        }
    }
}

impl fmt::Display for ForecastMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForecastMethod {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cluster_trend" | "ClusterTrend" => Ok(ForecastMethod::ClusterTrend),
            "legacy_flat" | "LegacyFlat" => Ok(ForecastMethod::LegacyFlat),
            _ => Err(UnknownVariant { kind: "forecast method", value: s.to_owned() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub base_year: i32,
    pub horizon: usize,
    pub method: ForecastMethod,
    pub legacy: LegacyAppreciationConfig,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig { base_year: 2017, horizon: 7, method: ForecastMethod::ClusterTrend, legacy: LegacyAppreciationConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub parcel_id: String,
    pub cluster: usize,
    pub method: ForecastMethod,
    pub base_year: i32,
    pub base_value: f64,
    pub projected: BTreeMap<i32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTable {
    pub base_year: i32,
    pub horizon: usize,
    pub rows: Vec<ForecastRow>,
    /// Parcels left out because they have no assessment at or before the
    /// base year.
    pub excluded: Vec<String>,
    pub warnings: Vec<String>,
}

impl ForecastTable {
    pub fn forecast_years(&self) -> Vec<i32> {
        (1..=self.horizon as i32).map(|h| self.base_year + h).collect()
    }

    pub fn get(&self, parcel_id: &str) -> Option<&ForecastRow> {
        self.rows.binary_search_by(|r| r.parcel_id.as_str().cmp(parcel_id)).ok().map(|i| &self.rows[i])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["parcel_id".to_owned(), "cluster".into(), "method".into(), "base_value".into()];
        header.extend(self.forecast_years().iter().map(|y| format!("y{y}")));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.parcel_id.clone(), r.cluster.to_string(), r.method.to_string(), r.base_value.to_string()];
            rec.extend(self.forecast_years().iter().map(|y| r.projected[y].to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Forecast every program-area parcel. Rows are sorted by parcel id.
pub fn forecast_all(d: &Dataset, cm: &ClusterModel, c: &ClusterClassifier, cfg: &ForecastConfig) -> Result<ForecastTable, ForecastError> {
    c.check_encoding()?;
    let idx = d.index();
    let mut targets = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    let mut parcels: Vec<&ParcelRecord> = d.parcels.iter().filter(|p| p.neighborhood.in_program_area()).collect();
    parcels.sort_by(|a, b| a.parcel_id.cmp(&b.parcel_id));
    for p in parcels {
        match idx.assessments.get(p.parcel_id.as_str()).and_then(|s| s.latest_at_or_before(cfg.base_year)) {
            Some((year, value)) => {
                if year != cfg.base_year {
                    warnings.push(format!("{}: no {} assessment, using {year}", p.parcel_id, cfg.base_year));
                }
                targets.push((p, year, value));
            }
            None => excluded.push(p.parcel_id.clone()),
        }
    }
    let pairs: Vec<(&ParcelRecord, f64)> = targets.iter().map(|(p, _, v)| (*p, *v)).collect();
    let labels = assign_clusters(c, &pairs)?;
    let years: Vec<i32> = (1..=cfg.horizon as i32).map(|h| cfg.base_year + h).collect();
    let rows = targets
        .par_iter()
        .map(|(p, year, value)| {
            let cluster = labels[&p.parcel_id];
            let values = match cfg.method {
                ForecastMethod::ClusterTrend => {
                    let trend = cm.trend(cluster).ok_or(ForecastError::UnknownCluster(cluster))?;
                    project_values(*value, &trend.rates(), cfg.horizon)?
                }
                ForecastMethod::LegacyFlat => {
                    if !(*value > 0.0) {
                        return Err(ForecastError::NonPositiveBase(*value));
                    }
                    legacy_forecast(*value, &cfg.legacy, cfg.horizon)
                }
            };
            Ok(ForecastRow {
                parcel_id: p.parcel_id.clone(),
                cluster,
                method: cfg.method,
                base_year: *year,
                base_value: *value,
                projected: years.iter().copied().zip(values).collect(),
            })
        })
        .collect::<Result<Vec<_>, ForecastError>>()?;
    Ok(ForecastTable { base_year: cfg.base_year, horizon: cfg.horizon, rows, excluded, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let p = project_values(100_000.0, &[0.10, 0.05], 2).unwrap();
        assert!((p[0] - 110_000.0).abs() < 1e-6 && (p[1] - 115_500.0).abs() < 1e-6);
        assert_eq!(project_values(5.0, &[0.0], 4).unwrap(), vec![5.0; 4]);
        let c = project_values(100.0, &[0.02, 0.03], 3).unwrap();
        assert!((c[2] - 100.0 * 1.02 * 1.03 * 1.02).abs() < 1e-9);
    }

    #[test]
    fn projection_errors() {
        assert_eq!(project_values(1.0, &[0.1, -1.0], 2), Err(ForecastError::CollapsingStep(-1.0)));
        assert_eq!(project_values(1.0, &[], 2), Err(ForecastError::EmptyTrend));
        assert_eq!(project_values(0.0, &[0.1], 2), Err(ForecastError::NonPositiveBase(0.0)));
    }

    #[test]
    fn legacy_examples() {
        let cfg = LegacyAppreciationConfig::default();
        let a = legacy_forecast(40_000.0, &cfg, 2);
        assert!((a[0] - 44_800.0).abs() < 1e-6 && (a[1] - 50_176.0).abs() < 1e-6);
        assert_eq!(legacy_forecast(20_000.0, &cfg, 2), vec![30_000.0, 45_000.0]);
        let at = legacy_forecast(37_000.0, &cfg, 1);
        assert!((at[0] - 41_440.0).abs() < 1e-9);
        let seven = legacy_forecast(37_000.0, &cfg, 7);
        assert!((seven[6] - 37_000.0 * 1.12f64.powi(7)).abs() < 1e-6);
        assert_eq!(seven[6].round(), 81_795.0);
    }

    #[test]
    fn encoding_layout() {
        assert_eq!(feature_names().len(), 23);
        let p = ParcelRecord {
            parcel_id: "x".into(),
            neighborhood: crate::data::Neighborhood::VineCity,
            situs_address: "12 Vine St".into(),
            owner_address: "12 VINE STREET".into(),
            land_use: LandUse::Condo,
            living_units: 1,
            land_acres: 0.02,
            heated_sqft: 900.0,
            rooms: 4,
            bedrooms: 2,
            bathrooms: 1,
            year_built: 1990,
            city_exemption: false,
            county_exemption: false,
            homestead_exemption: false,
            distance_to_beltline: 300.0,
        };
        let row = encode_parcel(&p, 2017, 50_000.0);
        let names = feature_names();
        let at = |n: &str| row[names.iter().position(|x| x == n).unwrap()];
        assert_eq!(at("land_use_condo"), 1.0);
        assert_eq!(at("land_use_one_family"), 0.0);
        assert_eq!(at("owner_occupied"), 1.0);
        assert_eq!(at("home_age"), 27.0);
        assert_eq!(at("reference_value"), 50_000.0);
    }
}
