//! Household income from rent and house characteristics.
//!
//! Survey households are filtered to the relevant subpopulation, their
//! missing cells imputed, and a regression forest is trained on income.
//! Program-area parcels are then scored from their rent estimate and
//! assessor characteristics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{CexRecord, ParcelRecord, RentEstimate};
use crate::forest::{impute_report, train_forest, DesignMatrix, ForestError, ForestModel, ForestParams, ImputeParams, Target};

pub const INCOME_FORMAT_VERSION: u32 = 1;
pub const INCOME_COLUMN: &str = "income_usd";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum IncomeError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("filter column {0} does not appear in the survey records")]
    UnknownFilterColumn(String),
    #[error("income column has {observed} of {rows} values observed; at least half are required")]
    SparseIncome { observed: usize, rows: usize },
    #[error("matrix has no {0} column")]
    MissingColumn(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

/// Which survey columns the model regresses income on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IncomeFeatures {
    #[default]
    RentAndHouse,
    RentOnly,
}

impl IncomeFeatures {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            IncomeFeatures::RentAndHouse => &["monthly_rent_usd", "bedrooms", "bathrooms", "rooms", "home_age"],
            IncomeFeatures::RentOnly => &["monthly_rent_usd"],
        }
    }
}

/// Keep records whose extra columns equal the given values. A missing
/// value fails the filter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CexFilter {
    pub equals: BTreeMap<String, f64>,
}

impl CexFilter {
    /// Atlanta homeowners.
    pub fn atlanta_homeowners() -> Self {
        CexFilter { equals: [("atlanta".to_owned(), 1.0), ("homeowner".to_owned(), 1.0)].into() }
    }

    pub fn accepts(&self, r: &CexRecord) -> bool {
        self.equals.iter().all(|(k, v)| r.extra(k) == Some(*v))
    }
}

/// Income column followed by the selected feature columns, MISSING kept.
pub fn prepare_cex(records: &[CexRecord], filter: &CexFilter, features: IncomeFeatures) -> Result<DesignMatrix, IncomeError> {
    for name in filter.equals.keys() {
        if !records.iter().any(|r| r.extra_features.iter().any(|(n, _)| n == name)) {
            return Err(IncomeError::UnknownFilterColumn(name.clone()));
        }
    }
    let wanted = features.columns();
    let rows: Vec<Vec<Option<f64>>> = records
        .iter()
        .filter(|r| filter.accepts(r))
        .map(|r| {
            let core = r.core_values();
            std::iter::once(core[0])
                .chain(wanted.iter().map(|c| {
                    let i = CexRecord::CORE_COLUMNS.iter().position(|x| x == c).expect("feature is a core column");
                    core[i]
                }))
                .collect()
        })
        .collect();
    if rows.is_empty() {
        return Err(IncomeError::EmptyTrainingSet);
    }
    let columns = std::iter::once(INCOME_COLUMN).chain(wanted.iter().copied()).map(str::to_owned).collect();
    Ok(DesignMatrix::from_rows(columns, &rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeModel {
    pub format_version: u32,
    pub features: IncomeFeatures,
    pub forest: ForestModel,
    pub training_rows: usize,
    pub observed_incomes: usize,
    pub oob_r2: f64,
    pub impute_iterations: usize,
    pub impute_converged: bool,
}

/// Income estimate for one parcel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "income_usd", rename_all = "snake_case")]
pub enum IncomeEstimate {
    Estimated(f64),
    /// No rent estimate exists; the parcel is not scored.
    Indeterminate,
}

impl IncomeEstimate {
    pub fn value(self) -> Option<f64> {
        match self {
            IncomeEstimate::Estimated(v) => Some(v),
            IncomeEstimate::Indeterminate => None,
        }
    }
}

/// Impute the prepared matrix, then fit a regression forest on income.
pub fn train_income_model(m: &DesignMatrix, forest: &ForestParams, impute: &ImputeParams) -> Result<IncomeModel, IncomeError> {
    let income_col = m.column_index(INCOME_COLUMN).ok_or_else(|| IncomeError::MissingColumn(INCOME_COLUMN.into()))?;
    let features = if m.columns().len() == 2 { IncomeFeatures::RentOnly } else { IncomeFeatures::RentAndHouse };
    for c in features.columns() {
        if m.column_index(c).is_none() {
            return Err(IncomeError::MissingColumn((*c).to_owned()));
        }
    }
    let rows = m.n_rows();
    let observed = rows - m.missing_count(income_col);
    if 2 * observed < rows {
        return Err(IncomeError::SparseIncome { observed, rows });
    }
    let report = impute_report(m, impute)?;
    let filled = report.matrix;
    let y: Vec<f64> = filled.column(income_col).collect();
    let train = filled.select(features.columns())?.with_target(Target::Numeric(y))?;
    let forest = train_forest(&train, forest)?;
    Ok(IncomeModel {
        format_version: INCOME_FORMAT_VERSION,
        features,
        training_rows: rows,
        observed_incomes: observed,
        oob_r2: forest.oob_score,
        impute_iterations: report.iterations,
        impute_converged: report.converged,
        forest,
    })
}

impl IncomeModel {
    /// Model input for a parcel, in feature order.
    pub fn parcel_row(&self, parcel: &ParcelRecord, rent: &RentEstimate, config_year: i32) -> Vec<f64> {
        self.features
            .columns()
            .iter()
            .map(|c| match *c {
                "monthly_rent_usd" => rent.monthly_rent_low,
                "bedrooms" => f64::from(parcel.bedrooms),
                "bathrooms" => f64::from(parcel.bathrooms),
                "rooms" => f64::from(parcel.rooms),
                "home_age" => parcel.home_age(config_year),
                other => unreachable!("unmapped income feature {other}"),
            })
            .collect()
    }

    pub fn income_range(&self) -> (f64, f64) {
        self.forest.train_target_range
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("income model serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Score a parcel. Without a rent estimate the result is
/// [`IncomeEstimate::Indeterminate`].
pub fn predict_income(im: &IncomeModel, parcel: &ParcelRecord, rent: Option<&RentEstimate>, config_year: i32) -> Result<IncomeEstimate, IncomeError> {
    let Some(rent) = rent else {
        return Ok(IncomeEstimate::Indeterminate);
    };
    let v = im.forest.predict_value(&im.parcel_row(parcel, rent, config_year))?;
    Ok(IncomeEstimate::Estimated(v.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(income: Option<f64>, rent: f64, atlanta: f64) -> CexRecord {
        CexRecord {
            before_tax_income: income,
            monthly_rent: Some(rent),
            bedrooms: Some(2.0),
            bathrooms: Some(1.0),
            rooms: Some(5.0),
            home_age: Some(40.0),
            extra_features: vec![("atlanta".into(), Some(atlanta)), ("homeowner".into(), Some(1.0))],
        }
    }

    #[test]
    fn prepare_keeps_missing_income() {
        let rs = vec![rec(Some(40_000.0), 1000.0, 1.0), rec(None, 900.0, 1.0), rec(Some(1.0), 1.0, 0.0)];
        let m = prepare_cex(&rs, &CexFilter::atlanta_homeowners(), IncomeFeatures::RentAndHouse).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.columns()[0], INCOME_COLUMN);
        assert_eq!(m.get(1, 0), None);
        let all = prepare_cex(&rs, &CexFilter::default(), IncomeFeatures::RentOnly).unwrap();
        assert_eq!((all.n_rows(), all.n_cols()), (3, 2));
    }

    #[test]
    fn empty_filter_result() {
        let rs = vec![rec(Some(1.0), 1.0, 0.0)];
        let f = CexFilter { equals: [("atlanta".to_owned(), 1.0)].into() };
        let err = prepare_cex(&rs, &f, IncomeFeatures::RentOnly).unwrap_err();
        assert_eq!(err, IncomeError::EmptyTrainingSet);
        assert_eq!(err.to_string(), "empty training set");
        let f = CexFilter { equals: [("region".to_owned(), 1.0)].into() };
        assert_eq!(prepare_cex(&rs, &f, IncomeFeatures::RentOnly).unwrap_err(), IncomeError::UnknownFilterColumn("region".into()));
    }

    #[test]
    fn sparse_income_rejected() {
        let rs = vec![rec(Some(1.0), 1.0, 1.0), rec(None, 2.0, 1.0), rec(None, 3.0, 1.0)];
        let m = prepare_cex(&rs, &CexFilter::default(), IncomeFeatures::RentOnly).unwrap();
        let err = train_income_model(&m, &ForestParams::regression(1), &ImputeParams::new(1)).unwrap_err();
        assert_eq!(err, IncomeError::SparseIncome { observed: 1, rows: 3 });
    }
}
