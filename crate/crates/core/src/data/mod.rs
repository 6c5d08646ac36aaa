//! Parcel, assessment, rent, survey, lien and neighborhood records.
//!
//! A [`Dataset`] is loaded once from six CSV files (see [`io`]) and never
//! mutated afterwards. [`validate_dataset`] reports every invariant
//! violation, [`complete_series`] selects the assessment histories usable
//! for clustering, and [`synth::generate_synthetic`] produces a seeded
//! stand-in for the non-redistributable county data.

pub mod address;
pub mod io;
pub mod synth;
mod validate;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use io::{load_dataset, write_dataset, DataError, DatasetFile, DatasetPaths, LoadOutcome};
pub use validate::{validate_dataset, Issue, ValidationReport, ValidationRules};

/// First and last assessment years of a complete history.
pub const FIRST_YEAR: i32 = 2005;
pub const LAST_YEAR: i32 = 2016;
/// The year missing from every county history.
pub const MISSING_YEAR: i32 = 2009;

/// Years a complete history must contain: 2005..=2016 without 2009.
pub fn complete_years() -> impl Iterator<Item = i32> + Clone {
    (FIRST_YEAR..=LAST_YEAR).filter(|&y| y != MISSING_YEAR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Neighborhood {
    AshviewHeights,
    AtlantaUniversityCenter,
    EnglishAvenue,
    VineCity,
    WashingtonPark,
    Other,
}

impl Neighborhood {
    pub const ALL: [Neighborhood; 6] = [
        Neighborhood::AshviewHeights,
        Neighborhood::AtlantaUniversityCenter,
        Neighborhood::EnglishAvenue,
        Neighborhood::VineCity,
        Neighborhood::WashingtonPark,
        Neighborhood::Other,
    ];

    /// The five neighborhoods covered by forecasts (the program area plus
    /// Washington Park).
    pub const PROGRAM_AREA: [Neighborhood; 5] = [
        Neighborhood::AshviewHeights,
        Neighborhood::AtlantaUniversityCenter,
        Neighborhood::EnglishAvenue,
        Neighborhood::VineCity,
        Neighborhood::WashingtonPark,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Neighborhood::AshviewHeights => "AshviewHeights",
            Neighborhood::AtlantaUniversityCenter => "AtlantaUniversityCenter",
            Neighborhood::EnglishAvenue => "EnglishAvenue",
            Neighborhood::VineCity => "VineCity",
            Neighborhood::WashingtonPark => "WashingtonPark",
            Neighborhood::Other => "Other",
        }
    }

    pub fn in_program_area(self) -> bool {
        self != Neighborhood::Other
    }
}

impl fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{value}`")]
pub struct UnknownVariant {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for Neighborhood {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Neighborhood::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| UnknownVariant { kind: "neighborhood", value: s.to_owned() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LandUse {
    OneFamily,
    TwoFamily,
    ThreeFamily,
    Condo,
    Townhouse,
    CondoLoft,
    EmptyLot,
    Other,
}

impl LandUse {
    pub const ALL: [LandUse; 8] = [
        LandUse::OneFamily,
        LandUse::TwoFamily,
        LandUse::ThreeFamily,
        LandUse::Condo,
        LandUse::Townhouse,
        LandUse::CondoLoft,
        LandUse::EmptyLot,
        LandUse::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LandUse::OneFamily => "OneFamily",
            LandUse::TwoFamily => "TwoFamily",
            LandUse::ThreeFamily => "ThreeFamily",
            LandUse::Condo => "Condo",
            LandUse::Townhouse => "Townhouse",
            LandUse::CondoLoft => "CondoLoft",
            LandUse::EmptyLot => "EmptyLot",
            LandUse::Other => "Other",
        }
    }
}

impl fmt::Display for LandUse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandUse {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LandUse::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| UnknownVariant { kind: "land use", value: s.to_owned() })
    }
}

/// One residential parcel as recorded by the tax assessor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelRecord {
    pub parcel_id: String,
    pub neighborhood: Neighborhood,
    pub situs_address: String,
    pub owner_address: String,
    pub land_use: LandUse,
    pub living_units: u32,
    pub land_acres: f64,
    pub heated_sqft: f64,
    pub rooms: u32,
    pub bedrooms: u32,
    pub bathrooms: u32,
    pub year_built: i32,
    pub city_exemption: bool,
    pub county_exemption: bool,
    pub homestead_exemption: bool,
    /// Meters to the nearest trail segment.
    pub distance_to_beltline: f64,
}

impl ParcelRecord {
    pub fn is_empty_lot(&self) -> bool {
        self.land_use == LandUse::EmptyLot
    }

    pub fn home_age(&self, config_year: i32) -> f64 {
        f64::from(config_year - self.year_built)
    }

    /// The owner's mailing address matches the parcel after normalization,
    /// or the parcel carries a homestead exemption.
    pub fn owner_occupied(&self) -> bool {
        self.homestead_exemption || address::same_address(&self.situs_address, &self.owner_address)
    }
}

/// Year → assessed fair-market value history of one parcel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentSeries {
    pub parcel_id: String,
    pub observations: BTreeMap<i32, f64>,
}

impl AssessmentSeries {
    pub fn new(parcel_id: impl Into<String>, observations: impl IntoIterator<Item = (i32, f64)>) -> Self {
        AssessmentSeries { parcel_id: parcel_id.into(), observations: observations.into_iter().collect() }
    }

    /// All of 2005..=2016 except 2009 present, every value positive.
    pub fn is_complete(&self) -> bool {
        complete_years().all(|y| self.observations.contains_key(&y))
            && self.observations.values().all(|&v| v > 0.0)
    }

    pub fn value_at(&self, year: i32) -> Option<f64> {
        self.observations.get(&year).copied()
    }

    /// Latest observation at or before `year`.
    pub fn latest_at_or_before(&self, year: i32) -> Option<(i32, f64)> {
        self.observations.range(..=year).next_back().map(|(&y, &v)| (y, v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RentEstimate {
    pub parcel_id: String,
    pub monthly_rent_low: f64,
}

/// One consumer-expenditure survey household. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CexRecord {
    pub before_tax_income: Option<f64>,
    pub monthly_rent: Option<f64>,
    pub bedrooms: Option<f64>,
    pub bathrooms: Option<f64>,
    pub rooms: Option<f64>,
    pub home_age: Option<f64>,
    pub extra_features: Vec<(String, Option<f64>)>,
}

impl CexRecord {
    pub const CORE_COLUMNS: [&'static str; 6] =
        ["income_usd", "monthly_rent_usd", "bedrooms", "bathrooms", "rooms", "home_age"];

    pub fn core_values(&self) -> [Option<f64>; 6] {
        [
            self.before_tax_income,
            self.monthly_rent,
            self.bedrooms,
            self.bathrooms,
            self.rooms,
            self.home_age,
        ]
    }

    pub fn extra(&self, name: &str) -> Option<f64> {
        self.extra_features.iter().find(|(n, _)| n == name).and_then(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LienObservation {
    pub parcel_id: String,
    pub has_lien: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodStats {
    pub neighborhood: Neighborhood,
    pub population_estimate: f64,
    pub total_bedrooms: u64,
}

impl NeighborhoodStats {
    pub fn residents_per_bedroom(&self) -> f64 {
        self.population_estimate / self.total_bedrooms as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub parcels: Vec<ParcelRecord>,
    pub assessments: Vec<AssessmentSeries>,
    pub rents: Vec<RentEstimate>,
    pub cex: Vec<CexRecord>,
    pub liens: Vec<LienObservation>,
    pub neighborhood_stats: Vec<NeighborhoodStats>,
}

impl Dataset {
    pub fn index(&self) -> DatasetIndex<'_> {
        DatasetIndex::new(self)
    }
}

/// Keyed lookups over a borrowed [`Dataset`].
#[derive(Debug, Clone)]
pub struct DatasetIndex<'a> {
    pub parcels: HashMap<&'a str, &'a ParcelRecord>,
    pub assessments: HashMap<&'a str, &'a AssessmentSeries>,
    pub rents: HashMap<&'a str, &'a RentEstimate>,
    pub liens: HashMap<&'a str, &'a LienObservation>,
    pub stats: HashMap<Neighborhood, &'a NeighborhoodStats>,
}

impl<'a> DatasetIndex<'a> {
    pub fn new(d: &'a Dataset) -> Self {
        DatasetIndex {
            parcels: d.parcels.iter().map(|p| (p.parcel_id.as_str(), p)).collect(),
            assessments: d.assessments.iter().map(|s| (s.parcel_id.as_str(), s)).collect(),
            rents: d.rents.iter().map(|r| (r.parcel_id.as_str(), r)).collect(),
            liens: d.liens.iter().map(|l| (l.parcel_id.as_str(), l)).collect(),
            stats: d.neighborhood_stats.iter().map(|s| (s.neighborhood, s)).collect(),
        }
    }
}

/// Histories with every year 2005..=2016 except 2009 and only positive
/// values, in input order.
pub fn complete_series(d: &Dataset) -> Vec<AssessmentSeries> {
    d.assessments.iter().filter(|s| s.is_complete()).cloned().collect()
}
