//! CSV ingestion and export for the six input files.
//!
//! All files are UTF-8 with a header row. Empty cells in `cex.csv` mean
//! MISSING; every other cell is required. Type errors, unresolved parcel
//! references and duplicate keys are collected and reported together
//! rather than dropped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    AssessmentSeries, CexRecord, Dataset, Issue, LienObservation, NeighborhoodStats, ParcelRecord,
    RentEstimate, MISSING_YEAR,
};

pub const PARCELS_HEADER: [&str; 16] = [
    "parcel_id",
    "neighborhood",
    "situs_address",
    "owner_address",
    "land_use",
    "living_units",
    "land_acres",
    "heated_sqft",
    "rooms",
    "bedrooms",
    "bathrooms",
    "year_built",
    "city_exemption",
    "county_exemption",
    "homestead_exemption",
    "distance_to_beltline_m",
];
pub const ASSESSMENTS_HEADER: [&str; 3] = ["parcel_id", "year", "assessed_value_usd"];
pub const RENTS_HEADER: [&str; 2] = ["parcel_id", "monthly_rent_low_usd"];
pub const LIENS_HEADER: [&str; 2] = ["parcel_id", "has_lien"];
pub const NEIGHBORHOODS_HEADER: [&str; 3] = ["neighborhood", "population_estimate", "total_bedrooms"];

/// Which input file a record came from. Ordering follows load order and is
/// used to sort report entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFile {
    Parcels,
    Assessments,
    Rents,
    Cex,
    Liens,
    Neighborhoods,
}

impl DatasetFile {
    pub const ALL: [DatasetFile; 6] = [
        DatasetFile::Parcels,
        DatasetFile::Assessments,
        DatasetFile::Rents,
        DatasetFile::Cex,
        DatasetFile::Liens,
        DatasetFile::Neighborhoods,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            DatasetFile::Parcels => "parcels.csv",
            DatasetFile::Assessments => "assessments.csv",
            DatasetFile::Rents => "rents.csv",
            DatasetFile::Cex => "cex.csv",
            DatasetFile::Liens => "liens.csv",
            DatasetFile::Neighborhoods => "neighborhoods.csv",
        }
    }
}

impl fmt::Display for DatasetFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub parcels: PathBuf,
    pub assessments: PathBuf,
    pub rents: PathBuf,
    pub cex: PathBuf,
    pub liens: PathBuf,
    pub neighborhoods: PathBuf,
}

impl DatasetPaths {
    /// The conventional file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            parcels: dir.join(DatasetFile::Parcels.file_name()),
            assessments: dir.join(DatasetFile::Assessments.file_name()),
            rents: dir.join(DatasetFile::Rents.file_name()),
            cex: dir.join(DatasetFile::Cex.file_name()),
            liens: dir.join(DatasetFile::Liens.file_name()),
            neighborhoods: dir.join(DatasetFile::Neighborhoods.file_name()),
        }
    }

    pub fn get(&self, file: DatasetFile) -> &Path {
        match file {
            DatasetFile::Parcels => &self.parcels,
            DatasetFile::Assessments => &self.assessments,
            DatasetFile::Rents => &self.rents,
            DatasetFile::Cex => &self.cex,
            DatasetFile::Liens => &self.liens,
            DatasetFile::Neighborhoods => &self.neighborhoods,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{file}: header {found:?} does not match expected {expected:?}")]
    MalformedHeader { file: DatasetFile, expected: Vec<String>, found: Vec<String> },
    #[error("{} rejected row(s): {}", issues.len(), summarize(issues))]
    Rejected { issues: Vec<Issue> },
}

fn summarize(issues: &[Issue]) -> String {
    let mut s: Vec<String> = issues.iter().take(10).map(|i| i.to_string()).collect();
    if issues.len() > 10 {
        s.push(format!("... and {} more", issues.len() - 10));
    }
    s.join("; ")
}

/// A loaded dataset plus the non-fatal findings of ingestion.
#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub warnings: Vec<Issue>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let csv_err = |source| DataError::Csv { path: path.to_path_buf(), source };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_owned()).collect();
    let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
    Ok(Table { header, rows })
}

fn check_header(file: DatasetFile, found: &[String], expected: &[&str]) -> Result<(), DataError> {
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(DataError::MalformedHeader {
            file,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: found.to_vec(),
        });
    }
    Ok(())
}

/// Cell-level parse failures for one row.
struct RowParser<'a> {
    file: DatasetFile,
    row: usize,
    rec: &'a csv::StringRecord,
    header: &'a [String],
    issues: &'a mut Vec<Issue>,
    ok: bool,
}

impl<'a> RowParser<'a> {
    fn raw(&self, col: usize) -> &'a str {
        self.rec.get(col).map(str::trim).unwrap_or("")
    }

    fn fail(&mut self, col: usize, what: &str) {
        let name = self.header.get(col).map(String::as_str).unwrap_or("?");
        let parcel = if self.header.first().map(String::as_str) == Some("parcel_id") {
            Some(self.raw(0).to_owned())
        } else {
            None
        };
        self.issues.push(Issue::new(
            self.file,
            self.row,
            parcel,
            format!("column `{name}`: {what} `{}`", self.raw(col)),
        ));
        self.ok = false;
    }

    fn parse<T: FromStr>(&mut self, col: usize, what: &str) -> Option<T> {
        match self.raw(col).parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.fail(col, what);
                None
            }
        }
    }

    fn number(&mut self, col: usize) -> Option<f64> {
        match self.raw(col).parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.fail(col, "not a finite number");
                None
            }
        }
    }

    fn optional_number(&mut self, col: usize) -> Option<Option<f64>> {
        if self.raw(col).is_empty() {
            return Some(None);
        }
        self.number(col).map(Some)
    }

    fn flag(&mut self, col: usize) -> Option<bool> {
        match self.raw(col) {
            "0" | "false" | "FALSE" => Some(false),
            "1" | "true" | "TRUE" => Some(true),
            _ => {
                self.fail(col, "not a 0/1 flag");
                None
            }
        }
    }

    fn text(&mut self, col: usize) -> Option<String> {
        let v = self.raw(col);
        if v.is_empty() {
            self.fail(col, "empty value");
            None
        } else {
            Some(v.to_owned())
        }
    }
}

fn rows<'a>(
    file: DatasetFile,
    table: &'a Table,
    issues: &'a mut Vec<Issue>,
) -> impl Iterator<Item = (usize, &'a csv::StringRecord)> + 'a {
    let width = table.header.len();
    table.rows.iter().enumerate().filter_map(move |(i, rec)| {
        if rec.len() != width {
            issues.push(Issue::new(file, i + 1, None, format!("expected {width} cells, found {}", rec.len())));
            None
        } else {
            Some((i + 1, rec))
        }
    })
}

fn parse_parcel(p: &mut RowParser<'_>) -> Option<ParcelRecord> {
    let parcel = ParcelRecord {
        parcel_id: p.text(0).unwrap_or_default(),
        neighborhood: p.parse(1, "unknown neighborhood").unwrap_or(super::Neighborhood::Other),
        situs_address: p.raw(2).to_owned(),
        owner_address: p.raw(3).to_owned(),
        land_use: p.parse(4, "unknown land use").unwrap_or(super::LandUse::Other),
        living_units: p.parse(5, "not a count").unwrap_or_default(),
        land_acres: p.number(6).unwrap_or_default(),
        heated_sqft: p.number(7).unwrap_or_default(),
        rooms: p.parse(8, "not a count").unwrap_or_default(),
        bedrooms: p.parse(9, "not a count").unwrap_or_default(),
        bathrooms: p.parse(10, "not a count").unwrap_or_default(),
        year_built: p.parse(11, "not a year").unwrap_or_default(),
        city_exemption: p.flag(12).unwrap_or_default(),
        county_exemption: p.flag(13).unwrap_or_default(),
        homestead_exemption: p.flag(14).unwrap_or_default(),
        distance_to_beltline: p.number(15).unwrap_or_default(),
    };
    p.ok.then_some(parcel)
}

/// Read, type-check and cross-link the six input files.
pub fn load_dataset(paths: &DatasetPaths) -> Result<LoadOutcome, DataError> {
    let mut issues = Vec::new();
    let mut warnings = Vec::new();

    let tables = DatasetFile::ALL
        .iter()
        .map(|&f| read_table(paths.get(f)).map(|t| (f, t)))
        .collect::<Result<HashMap<_, _>, _>>()?;
    let table = |f: DatasetFile| &tables[&f];

    check_header(DatasetFile::Parcels, &table(DatasetFile::Parcels).header, &PARCELS_HEADER)?;
    check_header(DatasetFile::Assessments, &table(DatasetFile::Assessments).header, &ASSESSMENTS_HEADER)?;
    check_header(DatasetFile::Rents, &table(DatasetFile::Rents).header, &RENTS_HEADER)?;
    check_header(DatasetFile::Liens, &table(DatasetFile::Liens).header, &LIENS_HEADER)?;
    check_header(DatasetFile::Neighborhoods, &table(DatasetFile::Neighborhoods).header, &NEIGHBORHOODS_HEADER)?;
    let cex_header = &table(DatasetFile::Cex).header;
    if cex_header.len() < CexRecord::CORE_COLUMNS.len() {
        check_header(DatasetFile::Cex, cex_header, &CexRecord::CORE_COLUMNS)?;
    }
    check_header(DatasetFile::Cex, &cex_header[..CexRecord::CORE_COLUMNS.len()], &CexRecord::CORE_COLUMNS)?;

    // parcels
    let t = table(DatasetFile::Parcels);
    let mut parcels = Vec::with_capacity(t.rows.len());
    let mut seen = HashSet::new();
    let mut row_issues = Vec::new();
    for (row, rec) in rows(DatasetFile::Parcels, t, &mut row_issues) {
        let mut p = RowParser { file: DatasetFile::Parcels, row, rec, header: &t.header, issues: &mut issues, ok: true };
        if let Some(parcel) = parse_parcel(&mut p) {
            if !seen.insert(parcel.parcel_id.clone()) {
                issues.push(Issue::new(DatasetFile::Parcels, row, Some(parcel.parcel_id.clone()), "duplicate parcel_id"));
                continue;
            }
            parcels.push(parcel);
        }
    }
    issues.append(&mut row_issues);
    let known: HashSet<&str> = parcels.iter().map(|p| p.parcel_id.as_str()).collect();
    let unresolved = |file, row, id: &str, issues: &mut Vec<Issue>| {
        if known.contains(id) {
            true
        } else {
            issues.push(Issue::new(file, row, Some(id.to_owned()), "unknown parcel_id"));
            false
        }
    };

    // assessments, grouped by parcel in first-appearance order
    let t = table(DatasetFile::Assessments);
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, BTreeMap<i32, f64>> = HashMap::new();
    for (row, rec) in rows(DatasetFile::Assessments, t, &mut row_issues) {
        let mut p = RowParser { file: DatasetFile::Assessments, row, rec, header: &t.header, issues: &mut issues, ok: true };
        let id = p.text(0);
        let year: Option<i32> = p.parse(1, "not a year");
        let value = p.number(2);
        let (Some(id), Some(year), Some(value)) = (id, year, value) else { continue };
        if !unresolved(DatasetFile::Assessments, row, &id, &mut issues) {
            continue;
        }
        if year == MISSING_YEAR {
            warnings.push(Issue::new(DatasetFile::Assessments, row, Some(id.clone()), "unexpected 2009 observation"));
        }
        let entry = grouped.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            BTreeMap::new()
        });
        if entry.insert(year, value).is_some() {
            issues.push(Issue::new(DatasetFile::Assessments, row, Some(id), format!("duplicate year {year}")));
        }
    }
    issues.append(&mut row_issues);
    let assessments = order
        .into_iter()
        .map(|id| {
            let obs = grouped.remove(&id).unwrap_or_default();
            AssessmentSeries { parcel_id: id, observations: obs }
        })
        .collect();

    // rents
    let t = table(DatasetFile::Rents);
    let mut rents = Vec::new();
    let mut seen = HashSet::new();
    for (row, rec) in rows(DatasetFile::Rents, t, &mut row_issues) {
        let mut p = RowParser { file: DatasetFile::Rents, row, rec, header: &t.header, issues: &mut issues, ok: true };
        let (Some(id), Some(rent)) = (p.text(0), p.number(1)) else { continue };
        if !unresolved(DatasetFile::Rents, row, &id, &mut issues) {
            continue;
        }
        if !seen.insert(id.clone()) {
            issues.push(Issue::new(DatasetFile::Rents, row, Some(id), "duplicate rent estimate"));
            continue;
        }
        rents.push(RentEstimate { parcel_id: id, monthly_rent_low: rent });
    }
    issues.append(&mut row_issues);

    // cex
    let t = table(DatasetFile::Cex);
    let extra_names = &t.header[CexRecord::CORE_COLUMNS.len()..];
    let mut cex = Vec::new();
    for (row, rec) in rows(DatasetFile::Cex, t, &mut row_issues) {
        let mut p = RowParser { file: DatasetFile::Cex, row, rec, header: &t.header, issues: &mut issues, ok: true };
        let core: Vec<Option<f64>> = (0..6).map(|c| p.optional_number(c).flatten()).collect();
        let extras: Vec<(String, Option<f64>)> = extra_names
            .iter()
            .enumerate()
            .map(|(j, name)| (name.clone(), p.optional_number(6 + j).flatten()))
            .collect();
        if !p.ok {
            continue;
        }
        cex.push(CexRecord {
            before_tax_income: core[0],
            monthly_rent: core[1],
            bedrooms: core[2],
            bathrooms: core[3],
            rooms: core[4],
            home_age: core[5],
            extra_features: extras,
        });
    }
    issues.append(&mut row_issues);

    // liens
    let t = table(DatasetFile::Liens);
    let mut liens = Vec::new();
    let mut seen = HashSet::new();
    for (row, rec) in rows(DatasetFile::Liens, t, &mut row_issues) {
        let mut p = RowParser { file: DatasetFile::Liens, row, rec, header: &t.header, issues: &mut issues, ok: true };
        let (Some(id), Some(has_lien)) = (p.text(0), p.flag(1)) else { continue };
        if !unresolved(DatasetFile::Liens, row, &id, &mut issues) {
            continue;
        }
        if !seen.insert(id.clone()) {
            issues.push(Issue::new(DatasetFile::Liens, row, Some(id), "duplicate lien observation"));
            continue;
        }
        liens.push(LienObservation { parcel_id: id, has_lien });
    }
    issues.append(&mut row_issues);

    // neighborhoods
    let t = table(DatasetFile::Neighborhoods);
    let mut neighborhood_stats = Vec::new();
    for (row, rec) in rows(DatasetFile::Neighborhoods, t, &mut row_issues) {
        let mut p = RowParser { file: DatasetFile::Neighborhoods, row, rec, header: &t.header, issues: &mut issues, ok: true };
        let n = p.parse(0, "unknown neighborhood");
        let pop = p.number(1);
        let beds: Option<u64> = p.parse(2, "not a count");
        if let (Some(neighborhood), Some(population_estimate), Some(total_bedrooms)) = (n, pop, beds) {
            neighborhood_stats.push(NeighborhoodStats { neighborhood, population_estimate, total_bedrooms });
        }
    }
    issues.append(&mut row_issues);

    if !issues.is_empty() {
        issues.sort_by(Issue::locator_cmp);
        return Err(DataError::Rejected { issues });
    }
    warnings.sort_by(Issue::locator_cmp);
    Ok(LoadOutcome {
        dataset: Dataset { parcels, assessments, rents, cex, liens, neighborhood_stats },
        warnings,
    })
}

fn num(v: f64) -> String {
    v.to_string()
}

fn flag(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

/// Write `d` in the CSV schemas read by [`load_dataset`]. Floats use the
/// shortest representation that parses back to the same value, so a
/// write/load cycle is lossless.
pub fn write_dataset(d: &Dataset, paths: &DatasetPaths) -> Result<(), DataError> {
    fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, DataError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| DataError::Io { path: dir.to_path_buf(), source })?;
        }
        csv::Writer::from_path(path).map_err(|source| DataError::Csv { path: path.to_path_buf(), source })
    }
    fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<(), DataError> {
        w.flush().map_err(|source| DataError::Io { path: path.to_path_buf(), source })
    }
    let e = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DataError::Csv { path: path.clone(), source }
    };

    let mut w = writer(&paths.parcels)?;
    w.write_record(PARCELS_HEADER).map_err(e(&paths.parcels))?;
    for p in &d.parcels {
        w.write_record([
            p.parcel_id.clone(),
            p.neighborhood.to_string(),
            p.situs_address.clone(),
            p.owner_address.clone(),
            p.land_use.to_string(),
            p.living_units.to_string(),
            num(p.land_acres),
            num(p.heated_sqft),
            p.rooms.to_string(),
            p.bedrooms.to_string(),
            p.bathrooms.to_string(),
            p.year_built.to_string(),
            flag(p.city_exemption).into(),
            flag(p.county_exemption).into(),
            flag(p.homestead_exemption).into(),
            num(p.distance_to_beltline),
        ])
        .map_err(e(&paths.parcels))?;
    }
    finish(w, &paths.parcels)?;

    let mut w = writer(&paths.assessments)?;
    w.write_record(ASSESSMENTS_HEADER).map_err(e(&paths.assessments))?;
    for s in &d.assessments {
        for (year, value) in &s.observations {
            w.write_record([s.parcel_id.clone(), year.to_string(), num(*value)]).map_err(e(&paths.assessments))?;
        }
    }
    finish(w, &paths.assessments)?;

    let mut w = writer(&paths.rents)?;
    w.write_record(RENTS_HEADER).map_err(e(&paths.rents))?;
    for r in &d.rents {
        w.write_record([r.parcel_id.clone(), num(r.monthly_rent_low)]).map_err(e(&paths.rents))?;
    }
    finish(w, &paths.rents)?;

    let mut w = writer(&paths.cex)?;
    let extras: Vec<String> =
        d.cex.first().map(|r| r.extra_features.iter().map(|(n, _)| n.clone()).collect()).unwrap_or_default();
    let header: Vec<String> = CexRecord::CORE_COLUMNS.iter().map(|s| s.to_string()).chain(extras).collect();
    w.write_record(&header).map_err(e(&paths.cex))?;
    let cell = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in &d.cex {
        let row: Vec<String> = r
            .core_values()
            .into_iter()
            .map(cell)
            .chain(r.extra_features.iter().map(|(_, v)| cell(*v)))
            .collect();
        w.write_record(&row).map_err(e(&paths.cex))?;
    }
    finish(w, &paths.cex)?;

    let mut w = writer(&paths.liens)?;
    w.write_record(LIENS_HEADER).map_err(e(&paths.liens))?;
    for l in &d.liens {
        w.write_record([l.parcel_id.as_str(), flag(l.has_lien)]).map_err(e(&paths.liens))?;
    }
    finish(w, &paths.liens)?;

    let mut w = writer(&paths.neighborhoods)?;
    w.write_record(NEIGHBORHOODS_HEADER).map_err(e(&paths.neighborhoods))?;
    for s in &d.neighborhood_stats {
        w.write_record([s.neighborhood.to_string(), num(s.population_estimate), s.total_bedrooms.to_string()])
            .map_err(e(&paths.neighborhoods))?;
    }
    finish(w, &paths.neighborhoods)
}
