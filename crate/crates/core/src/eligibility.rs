//! Household eligibility: location, owner occupancy, liens and income
//! against the area median income for the household's size.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetIndex, Neighborhood, NeighborhoodStats, ParcelRecord, RentEstimate};
use crate::income::{predict_income, IncomeError, IncomeEstimate, IncomeModel};
use crate::rng::Stream;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EligibilityError {
    #[error("AMI table must list household sizes 1 through 8, missing {0}")]
    AmiSizeMissing(u32),
    #[error("AMI limit for size {0} is lower than for the size before it")]
    AmiDecreasing(u32),
    #[error("AMI limit for size {0} is not a positive number")]
    AmiInvalid(u32),
    #[error("probability {name} = {value} is outside [0, 1]")]
    Probability { name: String, value: f64 },
    #[error("no neighborhood statistics for {0}")]
    MissingStats(Neighborhood),
    #[error(transparent)]
    Income(#[from] IncomeError),
}

/// Income limit by household size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u32, f64>", into = "BTreeMap<u32, f64>")]
pub struct AmiTable {
    limits: BTreeMap<u32, f64>,
}

impl AmiTable {
    pub const MAX_SIZE: u32 = 8;

    pub fn new(limits: BTreeMap<u32, f64>) -> Result<Self, EligibilityError> {
        let mut previous = 0.0;
        for size in 1..=Self::MAX_SIZE {
            let limit = *limits.get(&size).ok_or(EligibilityError::AmiSizeMissing(size))?;
            if !(limit > 0.0) || !limit.is_finite() {
                return Err(EligibilityError::AmiInvalid(size));
            }
            if limit < previous {
                return Err(EligibilityError::AmiDecreasing(size));
            }
            previous = limit;
        }
        Ok(AmiTable { limits })
    }

    /// Limit for `size`; sizes above the table clamp to its largest entry.
    pub fn limit(&self, size: u32) -> f64 {
        let key = size.clamp(1, Self::MAX_SIZE);
        self.limits[&key]
    }

    pub fn limits(&self) -> &BTreeMap<u32, f64> {
        &self.limits
    }

    /// Every limit multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        AmiTable { limits: self.limits.iter().map(|(&k, &v)| (k, v * factor)).collect() }
    }
}

impl TryFrom<BTreeMap<u32, f64>> for AmiTable {
    type Error = EligibilityError;

    fn try_from(limits: BTreeMap<u32, f64>) -> Result<Self, Self::Error> {
        AmiTable::new(limits)
    }
}

impl From<AmiTable> for BTreeMap<u32, f64> {
    fn from(t: AmiTable) -> Self {
        t.limits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LienMode {
    /// Only an observed clean record passes.
    ObservedOnly,
    /// Observed records win; unobserved parcels draw against the
    /// neighborhood lien rate.
    #[default]
    SampledRate,
    /// Liens are not considered.
    Ignore,
}

/// How parcels without a rent estimate are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncomeMode {
    #[default]
    Liberal,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityContext {
    pub ami: AmiTable,
    pub include_washington_park: bool,
    pub lien_mode: LienMode,
    pub lien_rates: BTreeMap<Neighborhood, f64>,
    /// Used for neighborhoods without their own rate.
    pub default_lien_rate: f64,
    pub income_mode: IncomeMode,
    pub residents_per_bedroom: BTreeMap<Neighborhood, f64>,
}

impl EligibilityContext {
    pub fn new(ami: AmiTable) -> Self {
        EligibilityContext {
            ami,
            include_washington_park: true,
            lien_mode: LienMode::default(),
            lien_rates: BTreeMap::new(),
            default_lien_rate: 0.0,
            income_mode: IncomeMode::default(),
            residents_per_bedroom: BTreeMap::new(),
        }
    }

    /// Residents-per-bedroom ratios from neighborhood statistics.
    pub fn with_stats(mut self, stats: &[NeighborhoodStats]) -> Self {
        self.residents_per_bedroom = stats.iter().map(|s| (s.neighborhood, s.residents_per_bedroom())).collect();
        self
    }

    pub fn lien_rate(&self, n: Neighborhood) -> f64 {
        self.lien_rates.get(&n).copied().unwrap_or(self.default_lien_rate)
    }

    pub fn validate(&self) -> Result<(), EligibilityError> {
        let rates = self.lien_rates.iter().map(|(n, r)| (format!("lien_rates.{n}"), *r));
        for (name, value) in rates.chain([("default_lien_rate".to_owned(), self.default_lien_rate)]) {
            if !(0.0..=1.0).contains(&value) {
                return Err(EligibilityError::Probability { name, value });
            }
        }
        Ok(())
    }
}

pub fn location_eligible(p: &ParcelRecord, ctx: &EligibilityContext) -> bool {
    if p.is_empty_lot() {
        return false;
    }
    match p.neighborhood {
        Neighborhood::WashingtonPark => ctx.include_washington_park,
        n => n.in_program_area(),
    }
}

/// Address match after normalization, or a homestead exemption.
pub fn owner_occupied(p: &ParcelRecord) -> bool {
    p.owner_occupied()
}

/// Where a lien decision came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum LienProvenance {
    Observed { has_lien: bool },
    /// Uniform draw `u`; passes when `u < 1 − rate`.
    Simulated { draw: f64, rate: f64 },
    Ignored,
    Unobserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LienCheck {
    pub ok: bool,
    pub provenance: LienProvenance,
}

/// Lien decision from a pre-drawn uniform `u` in `[0, 1)`. The draw is only
/// consulted for unobserved parcels under [`LienMode::SampledRate`].
pub fn lien_check_with_draw(observed: Option<bool>, rate: f64, mode: LienMode, u: f64) -> LienCheck {
    match (mode, observed) {
        (LienMode::Ignore, _) => LienCheck { ok: true, provenance: LienProvenance::Ignored },
        (_, Some(has_lien)) => LienCheck { ok: !has_lien, provenance: LienProvenance::Observed { has_lien } },
        (LienMode::ObservedOnly, None) => LienCheck { ok: false, provenance: LienProvenance::Unobserved },
        (LienMode::SampledRate, None) => LienCheck { ok: u < 1.0 - rate, provenance: LienProvenance::Simulated { draw: u, rate } },
    }
}

/// Lien decision drawing from `rng` when a simulated draw is needed.
pub fn lien_ok(p: &ParcelRecord, observed: Option<bool>, ctx: &EligibilityContext, rng: &mut Stream) -> LienCheck {
    let needs_draw = ctx.lien_mode == LienMode::SampledRate && observed.is_none();
    let u = if needs_draw { rng.random::<f64>() } else { 0.0 };
    lien_check_with_draw(observed, ctx.lien_rate(p.neighborhood), ctx.lien_mode, u)
}

/// Round half up, at least one person.
pub fn household_size(bedrooms: u32, residents_per_bedroom: f64) -> u32 {
    ((f64::from(bedrooms) * residents_per_bedroom + 0.5).floor() as u32).max(1)
}

pub fn estimate_household_size(p: &ParcelRecord, stats: &NeighborhoodStats) -> Result<u32, EligibilityError> {
    if stats.neighborhood != p.neighborhood {
        return Err(EligibilityError::MissingStats(p.neighborhood));
    }
    Ok(household_size(p.bedrooms, stats.residents_per_bedroom()))
}

/// Strictly below the limit; indeterminate incomes follow the mode.
pub fn income_eligible(income: IncomeEstimate, size: u32, ctx: &EligibilityContext) -> bool {
    match income {
        IncomeEstimate::Estimated(v) => v < ctx.ami.limit(size),
        IncomeEstimate::Indeterminate => ctx.income_mode == IncomeMode::Liberal,
    }
}

/// Supplies income estimates for parcels.
pub trait IncomeSource: Sync {
    fn income(&self, p: &ParcelRecord, rent: Option<&RentEstimate>) -> Result<IncomeEstimate, EligibilityError>;
}

/// Scores parcels with a trained income model.
pub struct ModelIncome<'a> {
    pub model: &'a IncomeModel,
    pub config_year: i32,
}

impl IncomeSource for ModelIncome<'_> {
    fn income(&self, p: &ParcelRecord, rent: Option<&RentEstimate>) -> Result<IncomeEstimate, EligibilityError> {
        Ok(predict_income(self.model, p, rent, self.config_year)?)
    }
}

/// Fixed incomes by parcel id; parcels not listed are indeterminate.
impl IncomeSource for BTreeMap<String, IncomeEstimate> {
    fn income(&self, p: &ParcelRecord, _rent: Option<&RentEstimate>) -> Result<IncomeEstimate, EligibilityError> {
        Ok(self.get(&p.parcel_id).copied().unwrap_or(IncomeEstimate::Indeterminate))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Location,
    OwnerOccupancy,
    Liens,
    Income,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::Location, Criterion::OwnerOccupancy, Criterion::Liens, Criterion::Income];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Location => "location",
            Criterion::OwnerOccupancy => "owner_occupancy",
            Criterion::Liens => "liens",
            Criterion::Income => "income",
        }
    }

    pub fn explanation(self) -> &'static str {
        match self {
            Criterion::Location => "home is not a residence in a participating neighborhood",
            Criterion::OwnerOccupancy => "owner does not appear to live in the home",
            Criterion::Liens => "property has a standing lien",
            Criterion::Income => "household income is not below the area median for its size",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reason {
    pub criterion: Criterion,
    pub message: String,
}

/// The parts of an evaluation that do not depend on random draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticEligibility {
    pub parcel_id: String,
    pub neighborhood: Neighborhood,
    pub location_ok: bool,
    pub owner_ok: bool,
    pub income_ok: bool,
    pub observed_lien: Option<bool>,
    pub lien_rate: f64,
    pub estimated_household_size: u32,
    pub income_limit: f64,
    pub estimated_income: IncomeEstimate,
}

impl StaticEligibility {
    /// Whether a lien check could still make the parcel eligible.
    pub fn passes_non_lien(&self) -> bool {
        self.location_ok && self.owner_ok && self.income_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityResult {
    pub parcel_id: String,
    pub location_ok: bool,
    pub owner_ok: bool,
    pub lien_ok: bool,
    pub income_ok: bool,
    pub lien: LienCheck,
    pub eligible: bool,
    pub reasons: Vec<Reason>,
    pub estimated_household_size: u32,
    pub income_limit: f64,
    pub estimated_income: IncomeEstimate,
}

/// Combine four criterion outcomes into a result.
pub fn combine(s: &StaticEligibility, lien: LienCheck) -> EligibilityResult {
    let outcomes = [s.location_ok, s.owner_ok, lien.ok, s.income_ok];
    let reasons = Criterion::ALL
        .iter()
        .zip(outcomes)
        .filter(|(_, ok)| !ok)
        .map(|(c, _)| Reason { criterion: *c, message: c.explanation().to_owned() })
        .collect();
    EligibilityResult {
        parcel_id: s.parcel_id.clone(),
        location_ok: s.location_ok,
        owner_ok: s.owner_ok,
        lien_ok: lien.ok,
        income_ok: s.income_ok,
        lien,
        eligible: outcomes.iter().all(|x| *x),
        reasons,
        estimated_household_size: s.estimated_household_size,
        income_limit: s.income_limit,
        estimated_income: s.estimated_income,
    }
}

pub fn evaluate_static(p: &ParcelRecord, idx: &DatasetIndex<'_>, incomes: &dyn IncomeSource, ctx: &EligibilityContext) -> Result<StaticEligibility, EligibilityError> {
    let ratio = *ctx.residents_per_bedroom.get(&p.neighborhood).ok_or(EligibilityError::MissingStats(p.neighborhood))?;
    let size = household_size(p.bedrooms, ratio);
    let income = incomes.income(p, idx.rents.get(p.parcel_id.as_str()).copied())?;
    Ok(StaticEligibility {
        parcel_id: p.parcel_id.clone(),
        neighborhood: p.neighborhood,
        location_ok: location_eligible(p, ctx),
        owner_ok: owner_occupied(p),
        income_ok: income_eligible(income, size, ctx),
        observed_lien: idx.liens.get(p.parcel_id.as_str()).map(|l| l.has_lien),
        lien_rate: ctx.lien_rate(p.neighborhood),
        estimated_household_size: size,
        income_limit: ctx.ami.limit(size),
        estimated_income: income,
    })
}

/// Evaluate one parcel. Only an unobserved parcel under
/// [`LienMode::SampledRate`] consumes a draw from `rng`.
pub fn evaluate(p: &ParcelRecord, idx: &DatasetIndex<'_>, incomes: &dyn IncomeSource, ctx: &EligibilityContext, rng: &mut Stream) -> Result<EligibilityResult, EligibilityError> {
    let s = evaluate_static(p, idx, incomes, ctx)?;
    let lien = lien_ok(p, s.observed_lien, ctx, rng);
    Ok(combine(&s, lien))
}

/// Settings for evaluating every parcel of a dataset at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetModeSettings {
    pub include_washington_park: bool,
    pub lien_mode: LienMode,
    pub income_mode: IncomeMode,
    /// Seeds the per-parcel lien draws.
    pub seed: u64,
}

impl Default for DatasetModeSettings {
    fn default() -> Self {
        DatasetModeSettings { include_washington_park: true, lien_mode: LienMode::SampledRate, income_mode: IncomeMode::Liberal, seed: 1 }
    }
}

impl DatasetModeSettings {
    pub fn apply_to(&self, base: &EligibilityContext) -> EligibilityContext {
        let mut ctx = base.clone();
        ctx.include_washington_park = self.include_washington_park;
        ctx.lien_mode = self.lien_mode;
        ctx.income_mode = self.income_mode;
        ctx
    }

    /// The lien-draw stream of one parcel.
    pub fn stream_for(&self, parcel_id: &str) -> Stream {
        crate::rng::stream(self.seed, &[crate::rng::tag::HOUSEHOLD, crate::rng::key_of(parcel_id)])
    }
}

/// Dataset-mode results as written by the eligibility stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEligibility {
    pub settings: DatasetModeSettings,
    pub policy_checksum: String,
    pub results: Vec<EligibilityResult>,
}

impl DatasetEligibility {
    pub fn get(&self, parcel_id: &str) -> Option<&EligibilityResult> {
        self.results.binary_search_by(|r| r.parcel_id.as_str().cmp(parcel_id)).ok().map(|i| &self.results[i])
    }

    pub fn eligible_count(&self) -> usize {
        self.results.iter().filter(|r| r.eligible).count()
    }
}

/// Evaluate every program-area parcel, sorted by parcel id. Each parcel
/// draws from its own stream, so results do not depend on evaluation
/// order.
pub fn evaluate_dataset(idx: &DatasetIndex<'_>, parcels: &[ParcelRecord], incomes: &dyn IncomeSource, base: &EligibilityContext, settings: &DatasetModeSettings) -> Result<Vec<EligibilityResult>, EligibilityError> {
    use rayon::prelude::*;
    let ctx = settings.apply_to(base);
    ctx.validate()?;
    let mut sorted: Vec<&ParcelRecord> = parcels.iter().filter(|p| p.neighborhood.in_program_area()).collect();
    sorted.sort_by(|a, b| a.parcel_id.cmp(&b.parcel_id));
    sorted.par_iter().map(|p| evaluate(p, idx, incomes, &ctx, &mut settings.stream_for(&p.parcel_id))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LandUse;

    pub(crate) fn ami() -> AmiTable {
        AmiTable::new((1..=8).map(|s| (s, 40_000.0 + 2_000.0 * f64::from(s))).collect()).unwrap()
    }

    fn parcel(n: Neighborhood) -> ParcelRecord {
        ParcelRecord {
            parcel_id: "p".into(),
            neighborhood: n,
            situs_address: "123 Main St".into(),
            owner_address: "123 MAIN STREET".into(),
            land_use: LandUse::OneFamily,
            living_units: 1,
            land_acres: 0.1,
            heated_sqft: 1000.0,
            rooms: 5,
            bedrooms: 3,
            bathrooms: 1,
            year_built: 1940,
            city_exemption: false,
            county_exemption: false,
            homestead_exemption: false,
            distance_to_beltline: 100.0,
        }
    }

    #[test]
    fn location_rules() {
        let mut ctx = EligibilityContext::new(ami());
        ctx.include_washington_park = false;
        assert!(location_eligible(&parcel(Neighborhood::VineCity), &ctx));
        assert!(!location_eligible(&parcel(Neighborhood::WashingtonPark), &ctx));
        assert!(!location_eligible(&parcel(Neighborhood::Other), &ctx));
        ctx.include_washington_park = true;
        assert!(location_eligible(&parcel(Neighborhood::WashingtonPark), &ctx));
        let mut lot = parcel(Neighborhood::VineCity);
        lot.land_use = LandUse::EmptyLot;
        assert!(!location_eligible(&lot, &ctx));
    }

    #[test]
    fn owner_rules() {
        let mut p = parcel(Neighborhood::VineCity);
        assert!(owner_occupied(&p));
        p.owner_address = "9 Elm Ave".into();
        assert!(!owner_occupied(&p));
        p.homestead_exemption = true;
        assert!(owner_occupied(&p));
    }

    #[test]
    fn lien_rules() {
        for mode in [LienMode::ObservedOnly, LienMode::SampledRate] {
            assert!(!lien_check_with_draw(Some(true), 0.0, mode, 0.0).ok);
            assert!(lien_check_with_draw(Some(false), 1.0, mode, 0.99).ok);
        }
        assert!(lien_check_with_draw(Some(true), 1.0, LienMode::Ignore, 0.0).ok);
        assert!(!lien_check_with_draw(None, 0.0, LienMode::ObservedOnly, 0.0).ok);
        assert!(lien_check_with_draw(None, 0.41, LienMode::SampledRate, 0.58).ok);
        assert!(!lien_check_with_draw(None, 0.41, LienMode::SampledRate, 0.6).ok);
    }

    #[test]
    fn household_sizes() {
        let stats = NeighborhoodStats { neighborhood: Neighborhood::VineCity, population_estimate: 2000.0, total_bedrooms: 1600 };
        assert_eq!(estimate_household_size(&parcel(Neighborhood::VineCity), &stats).unwrap(), 4);
        assert_eq!(household_size(0, 1.25), 1);
        assert_eq!(household_size(2, 1.0), 2);
        assert_eq!(household_size(2, 1.25), 3);
        assert!(estimate_household_size(&parcel(Neighborhood::EnglishAvenue), &stats).is_err());
    }

    #[test]
    fn income_rules() {
        let mut limits: BTreeMap<u32, f64> = ami().limits().clone();
        limits.insert(4, 47_250.0);
        limits.insert(5, 47_250.0);
        let mut ctx = EligibilityContext::new(AmiTable::new(limits).unwrap());
        assert!(income_eligible(IncomeEstimate::Estimated(40_000.0), 4, &ctx));
        assert!(!income_eligible(IncomeEstimate::Estimated(47_250.0), 4, &ctx));
        assert!(income_eligible(IncomeEstimate::Indeterminate, 4, &ctx));
        ctx.income_mode = IncomeMode::Strict;
        assert!(!income_eligible(IncomeEstimate::Indeterminate, 4, &ctx));
        assert_eq!(ctx.ami.limit(12), ctx.ami.limit(8));
    }

    #[test]
    fn ami_validation() {
        let mut limits = ami().limits().clone();
        limits.remove(&6);
        assert_eq!(AmiTable::new(limits.clone()), Err(EligibilityError::AmiSizeMissing(6)));
        limits.insert(6, 1.0);
        assert_eq!(AmiTable::new(limits), Err(EligibilityError::AmiDecreasing(6)));
        let json = serde_json::to_string(&ami()).unwrap();
        assert_eq!(serde_json::from_str::<AmiTable>(&json).unwrap(), ami());
        assert!(serde_json::from_str::<AmiTable>(r#"{"1": 5.0}"#).is_err());
    }
}
