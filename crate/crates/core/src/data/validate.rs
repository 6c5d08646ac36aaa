use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::io::DatasetFile;
use super::{complete_years, Dataset, MISSING_YEAR};

/// A record locator plus the rule it violates. `row` is the 1-based data
/// row in the file (header excluded).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub file: DatasetFile,
    pub row: usize,
    pub parcel_id: Option<String>,
    pub rule: String,
}

impl Issue {
    pub fn new(file: DatasetFile, row: usize, parcel_id: Option<String>, rule: impl Into<String>) -> Self {
        Issue { file, row, parcel_id, rule: rule.into() }
    }

    pub(crate) fn locator_cmp(a: &Issue, b: &Issue) -> Ordering {
        (a.file, a.row, &a.rule).cmp(&(b.file, b.row, &b.rule))
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.row)?;
        if let Some(id) = &self.parcel_id {
            write!(f, " [{id}]")?;
        }
        write!(f, " {}", self.rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRules {
    /// No parcel may be built after this year.
    pub config_year: i32,
}

impl Default for ValidationRules {
    fn default() -> Self {
        ValidationRules { config_year: 2017 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
    pub counts: BTreeMap<DatasetFile, usize>,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Check every dataset invariant. Never fails; findings are sorted by
/// (file, row).
pub fn validate_dataset(d: &Dataset, rules: &ValidationRules) -> ValidationReport {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let err = |v: &mut Vec<Issue>, file, row, id: Option<&str>, rule: &str| {
        v.push(Issue::new(file, row, id.map(str::to_owned), rule));
    };

    let mut ids = HashSet::new();
    for (i, p) in d.parcels.iter().enumerate() {
        let (row, id) = (i + 1, Some(p.parcel_id.as_str()));
        let f = DatasetFile::Parcels;
        if !ids.insert(p.parcel_id.as_str()) {
            err(&mut errors, f, row, id, "duplicate parcel_id");
        }
        if p.bedrooms > p.rooms {
            err(&mut errors, f, row, id, "bedrooms exceed rooms");
        }
        if p.year_built > rules.config_year {
            err(&mut errors, f, row, id, "year_built after config year");
        }
        if !(p.land_acres >= 0.0) {
            err(&mut errors, f, row, id, "negative land_acres");
        }
        if !(p.heated_sqft >= 0.0) {
            err(&mut errors, f, row, id, "negative heated_sqft");
        }
        if !(p.distance_to_beltline >= 0.0) {
            err(&mut errors, f, row, id, "negative distance_to_beltline");
        }
    }

    let mut row = 0;
    for s in &d.assessments {
        let f = DatasetFile::Assessments;
        let id = Some(s.parcel_id.as_str());
        let first_row = row + 1;
        for (&year, &value) in &s.observations {
            row += 1;
            if !ids.contains(s.parcel_id.as_str()) {
                err(&mut errors, f, row, id, "unknown parcel_id");
            }
            if year == MISSING_YEAR {
                err(&mut warnings, f, row, id, "unexpected 2009 observation");
            }
            if !(value > 0.0) {
                err(&mut warnings, f, row, id, "non-positive assessed value");
            }
        }
        let has_history = s.observations.keys().any(|&y| y <= super::LAST_YEAR);
        if has_history && !complete_years().all(|y| s.observations.contains_key(&y)) {
            err(&mut warnings, f, first_row, id, "incomplete series");
        }
    }

    let keyed = |file: DatasetFile, keys: Vec<&str>, errors: &mut Vec<Issue>, dup_rule: &str| {
        let mut seen = HashSet::new();
        for (i, k) in keys.into_iter().enumerate() {
            if !ids.contains(k) {
                err(errors, file, i + 1, Some(k), "unknown parcel_id");
            }
            if !seen.insert(k) {
                err(errors, file, i + 1, Some(k), dup_rule);
            }
        }
    };
    keyed(DatasetFile::Rents, d.rents.iter().map(|r| r.parcel_id.as_str()).collect(), &mut errors, "duplicate rent estimate");
    keyed(DatasetFile::Liens, d.liens.iter().map(|l| l.parcel_id.as_str()).collect(), &mut errors, "duplicate lien observation");
    for (i, r) in d.rents.iter().enumerate() {
        if !(r.monthly_rent_low > 0.0) {
            err(&mut errors, DatasetFile::Rents, i + 1, Some(&r.parcel_id), "non-positive rent");
        }
    }

    let extra_names: Option<Vec<&str>> =
        d.cex.first().map(|r| r.extra_features.iter().map(|(n, _)| n.as_str()).collect());
    for (i, r) in d.cex.iter().enumerate() {
        let f = DatasetFile::Cex;
        let names: Vec<&str> = r.extra_features.iter().map(|(n, _)| n.as_str()).collect();
        if Some(&names) != extra_names.as_ref() {
            err(&mut errors, f, i + 1, None, "inconsistent column names");
        }
        let any_present = r.core_values().iter().any(Option::is_some)
            || r.extra_features.iter().any(|(_, v)| v.is_some());
        if !any_present {
            err(&mut errors, f, i + 1, None, "record has no observed values");
        }
        if r.core_values().iter().flatten().any(|v| *v < 0.0) {
            err(&mut warnings, f, i + 1, None, "negative survey value");
        }
    }

    let mut seen = HashMap::new();
    for (i, s) in d.neighborhood_stats.iter().enumerate() {
        let f = DatasetFile::Neighborhoods;
        if seen.insert(s.neighborhood, i).is_some() {
            err(&mut errors, f, i + 1, None, "duplicate neighborhood");
        }
        if !(s.population_estimate > 0.0) {
            err(&mut errors, f, i + 1, None, "population_estimate must be positive");
        }
        if s.total_bedrooms == 0 {
            err(&mut errors, f, i + 1, None, "total_bedrooms must be positive");
        }
    }

    errors.sort_by(Issue::locator_cmp);
    warnings.sort_by(Issue::locator_cmp);
    let counts = [
        (DatasetFile::Parcels, d.parcels.len()),
        (DatasetFile::Assessments, d.assessments.iter().map(|s| s.observations.len()).sum()),
        (DatasetFile::Rents, d.rents.len()),
        (DatasetFile::Cex, d.cex.len()),
        (DatasetFile::Liens, d.liens.len()),
        (DatasetFile::Neighborhoods, d.neighborhood_stats.len()),
    ]
    .into_iter()
    .collect();
    ValidationReport { errors, warnings, counts }
}
