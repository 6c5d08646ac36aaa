//! Property taxes, per-household subsidies and Monte Carlo program cost.
//!
//! A subsidy year pays the increase of the projected tax over the
//! base-year tax, never less than zero. Each replicate draws liens for
//! unobserved parcels, enrollment for every eligible household and one
//! dropout draw at the end of each program year. Draws come from a stream
//! keyed by `(seed, replicate, parcel id)`, so scenarios that share a seed
//! see the same uniforms for the same household (common random numbers).

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetIndex, ParcelRecord};
use crate::eligibility::{combine, evaluate_static, lien_check_with_draw, EligibilityContext, EligibilityError, IncomeMode, IncomeSource, LienMode, StaticEligibility};
use crate::forecast::{legacy_forecast, ForecastMethod, ForecastTable, LegacyAppreciationConfig};
use crate::rng::{key_of, stream, tag};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CostError {
    #[error("{field}: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("no forecast for location-eligible parcel {0}")]
    MissingForecast(String),
    #[error("forecast horizon {available} is shorter than the scenario horizon {wanted}")]
    HorizonTooLong { available: usize, wanted: usize },
    #[error("forecasts were produced with {found}, scenario asks for {wanted}")]
    MethodMismatch { found: ForecastMethod, wanted: ForecastMethod },
    #[error(transparent)]
    Eligibility(#[from] EligibilityError),
}

fn invalid(field: &str, message: impl Into<String>) -> CostError {
    CostError::InvalidConfig { field: field.to_owned(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExemptionKind {
    Homestead,
    City,
    County,
}

/// Tax rates. Millages are tax per dollar of taxable value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MillageConfig {
    pub assessment_ratio: f64,
    pub county_millage: f64,
    pub city_millage: f64,
    /// Reduction of taxable value per exemption the parcel holds.
    pub exemption_amounts: BTreeMap<ExemptionKind, f64>,
}

impl MillageConfig {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.assessment_ratio > 0.0 && self.assessment_ratio <= 1.0) {
            return Err(invalid("millage.assessment_ratio", "must be in (0, 1]"));
        }
        for (field, v) in [("millage.county_millage", self.county_millage), ("millage.city_millage", self.city_millage)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(field, "must be >= 0"));
            }
        }
        if self.exemption_amounts.values().any(|v| !(*v >= 0.0)) {
            return Err(invalid("millage.exemption_amounts", "must be >= 0"));
        }
        Ok(())
    }

    pub fn total_millage(&self) -> f64 {
        self.county_millage + self.city_millage
    }

    fn exemptions(&self, p: &ParcelRecord) -> f64 {
        let held = [
            (ExemptionKind::Homestead, p.homestead_exemption),
            (ExemptionKind::City, p.city_exemption),
            (ExemptionKind::County, p.county_exemption),
        ];
        held.iter().filter(|(_, h)| *h).map(|(k, _)| self.exemption_amounts.get(k).copied().unwrap_or(0.0)).sum()
    }
}

/// `max(0, fmv·ratio − exemptions) · (county + city millage)`.
pub fn annual_tax(fmv: f64, p: &ParcelRecord, mc: &MillageConfig) -> f64 {
    let taxable = (fmv * mc.assessment_ratio - mc.exemptions(p)).max(0.0);
    taxable * mc.total_millage()
}

/// Per-year subsidy: the increase of each forecast year's tax over the
/// base tax, clamped at zero.
pub fn yearly_increases(forecast: &[f64], base_fmv: f64, p: &ParcelRecord, mc: &MillageConfig) -> Vec<f64> {
    let base = annual_tax(base_fmv, p, mc);
    forecast.iter().map(|v| (annual_tax(*v, p, mc) - base).max(0.0)).collect()
}

/// Sum of the yearly increases over the active years.
pub fn household_subsidy(forecast: &[f64], base_fmv: f64, p: &ParcelRecord, mc: &MillageConfig, active_years: &[bool]) -> f64 {
    assert_eq!(forecast.len(), active_years.len(), "one activity flag per forecast year");
    yearly_increases(forecast, base_fmv, p, mc).iter().zip(active_years).filter(|(_, a)| **a).map(|(v, _)| v).sum()
}

pub fn expected_enrolled(n_eligible: f64, rate: f64) -> f64 {
    n_eligible * rate
}

pub fn expected_survivors(n0: f64, dropout: f64, years: u32) -> f64 {
    n0 * (1.0 - dropout).powi(years as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub include_washington_park: bool,
    pub lien_mode: LienMode,
    /// Replaces the policy file's lien rates when present.
    pub lien_rates: Option<BTreeMap<crate::data::Neighborhood, f64>>,
    pub income_mode: IncomeMode,
    pub dropout_rate: f64,
    pub enrollment_rate: f64,
    pub horizon_years: usize,
    pub forecast_method: ForecastMethod,
    pub legacy: LegacyAppreciationConfig,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "default".into(),
            include_washington_park: true,
            lien_mode: LienMode::SampledRate,
            lien_rates: None,
            income_mode: IncomeMode::Liberal,
            dropout_rate: 0.05,
            enrollment_rate: 0.79,
            horizon_years: 7,
            forecast_method: ForecastMethod::ClusterTrend,
            legacy: LegacyAppreciationConfig::default(),
            replicates: 1000,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Every problem with the configuration, as `(field, message)`.
    pub fn field_errors(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut prob = |field: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                out.push((field.to_owned(), "must be in [0, 1]".to_owned()));
            }
        };
        prob("dropout_rate", self.dropout_rate);
        prob("enrollment_rate", self.enrollment_rate);
        for (n, r) in self.lien_rates.iter().flatten() {
            prob(&format!("lien_rates.{n}"), *r);
        }
        if self.replicates == 0 {
            out.push(("replicates".into(), "must be >= 1".into()));
        }
        if self.horizon_years == 0 {
            out.push(("horizon_years".into(), "must be >= 1".into()));
        }
        let l = &self.legacy;
        if !(l.base_rate > -1.0 && l.low_value_rate > -1.0 && l.threshold > 0.0) {
            out.push(("legacy".into(), "rates must exceed -1 and the threshold must be positive".into()));
        }
        out
    }

    pub fn validate(&self) -> Result<(), CostError> {
        match self.field_errors().into_iter().next() {
            Some((field, message)) => Err(CostError::InvalidConfig { field, message }),
            None => Ok(()),
        }
    }

    /// The scenario's view of the policy's eligibility rules.
    pub fn apply_to(&self, base: &EligibilityContext) -> EligibilityContext {
        let mut ctx = base.clone();
        ctx.include_washington_park = self.include_washington_park;
        ctx.lien_mode = self.lien_mode;
        ctx.income_mode = self.income_mode;
        if let Some(rates) = &self.lien_rates {
            ctx.lien_rates = rates.clone();
        }
        ctx
    }
}

/// Spread of replicate totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostQuantiles {
    pub min: f64,
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub scenario: String,
    pub seed: u64,
    pub replicate_count: usize,
    pub horizon_years: usize,
    pub mean_total_cost: f64,
    /// Sample standard deviation across replicates.
    pub std_total_cost: f64,
    pub per_year_mean: Vec<f64>,
    pub eligible_count: f64,
    pub enrolled_initial: f64,
    pub enrolled_final: f64,
    pub quantiles: CostQuantiles,
    /// Closed-form expectation of the total cost under the same model.
    pub expected_total_cost: f64,
    pub expected_eligible: f64,
    /// How replicate values were combined.
    pub aggregation: String,
    pub warnings: Vec<String>,
}

/// One household's outcome in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub replicate: usize,
    pub parcel_id: String,
    pub eligible: bool,
    pub enrolled: bool,
    pub years_active: usize,
    pub subsidy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ReplicateTotals {
    total: f64,
    eligible: usize,
    enrolled: usize,
    survivors: usize,
}

/// A household that could become eligible, with its yearly subsidies.
#[derive(Debug, Clone)]
struct Candidate {
    status: StaticEligibility,
    key: u64,
    increases: Vec<f64>,
}

/// Inputs prepared once and shared by every replicate.
pub struct PreparedScenario {
    config: ScenarioConfig,
    candidates: Vec<Candidate>,
    warnings: Vec<String>,
}

impl PreparedScenario {
    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    pub fn statuses(&self) -> impl Iterator<Item = &StaticEligibility> {
        self.candidates.iter().map(|c| &c.status)
    }
}

/// Evaluate the static criteria and subsidy schedule of every program-area
/// parcel. `ctx` is the policy context; the scenario's overrides are
/// applied here.
pub fn prepare_scenario(
    idx: &DatasetIndex<'_>,
    parcels: &[ParcelRecord],
    forecasts: &ForecastTable,
    incomes: &dyn IncomeSource,
    policy_ctx: &EligibilityContext,
    sc: &ScenarioConfig,
    mc: &MillageConfig,
) -> Result<PreparedScenario, CostError> {
    sc.validate()?;
    mc.validate()?;
    if forecasts.horizon < sc.horizon_years {
        return Err(CostError::HorizonTooLong { available: forecasts.horizon, wanted: sc.horizon_years });
    }
    let ctx = sc.apply_to(policy_ctx);
    ctx.validate()?;
    let mut sorted: Vec<&ParcelRecord> = parcels.iter().filter(|p| p.neighborhood.in_program_area()).collect();
    sorted.sort_by(|a, b| a.parcel_id.cmp(&b.parcel_id));
    let statuses = sorted
        .par_iter()
        .map(|p| Ok((*p, evaluate_static(p, idx, incomes, &ctx)?)))
        .collect::<Result<Vec<_>, EligibilityError>>()?;

    let mut candidates = Vec::new();
    for (p, status) in statuses {
        if !status.passes_non_lien() {
            continue;
        }
        let row = forecasts.get(&p.parcel_id).ok_or_else(|| CostError::MissingForecast(p.parcel_id.clone()))?;
        let projected: Vec<f64> = match sc.forecast_method {
            ForecastMethod::LegacyFlat => legacy_forecast(row.base_value, &sc.legacy, sc.horizon_years),
            ForecastMethod::ClusterTrend => {
                if row.method != ForecastMethod::ClusterTrend {
                    return Err(CostError::MethodMismatch { found: row.method, wanted: sc.forecast_method });
                }
                row.projected.values().take(sc.horizon_years).copied().collect()
            }
        };
        candidates.push(Candidate {
            key: key_of(&p.parcel_id),
            increases: yearly_increases(&projected, row.base_value, p, mc),
            status,
        });
    }
    let mut warnings = Vec::new();
    if candidates.is_empty() {
        warnings.push("no household passes the location, occupancy and income criteria; cost is zero".to_owned());
    }
    Ok(PreparedScenario { config: sc.clone(), candidates, warnings })
}

fn simulate_replicate(p: &PreparedScenario, r: usize, mut audit: Option<&mut Vec<AuditRow>>, per_year: &mut [f64]) -> ReplicateTotals {
    let sc = &p.config;
    let h = sc.horizon_years;
    let mut t = ReplicateTotals { total: 0.0, eligible: 0, enrolled: 0, survivors: 0 };
    for c in &p.candidates {
        let mut rng = stream(sc.seed, &[tag::REPLICATE, r as u64, c.key]);
        let u_lien: f64 = rng.random();
        let u_enroll: f64 = rng.random();
        let lien = lien_check_with_draw(c.status.observed_lien, c.status.lien_rate, sc.lien_mode, u_lien);
        let eligible = lien.ok;
        let enrolled = eligible && u_enroll < sc.enrollment_rate;
        let mut years_active = 0;
        let mut subsidy = 0.0;
        if enrolled {
            // Year y is paid when the household survived the y − 1 earlier
            // dropout draws; the last draw decides who is still enrolled.
            let mut active = true;
            for (y, inc) in c.increases.iter().enumerate().take(h) {
                if !active {
                    break;
                }
                years_active += 1;
                subsidy += inc;
                per_year[y] += inc;
                if rng.random::<f64>() < sc.dropout_rate {
                    active = false;
                }
            }
            t.enrolled += 1;
            t.survivors += usize::from(active);
        }
        t.eligible += usize::from(eligible);
        t.total += subsidy;
        if let Some(rows) = audit.as_deref_mut() {
            rows.push(AuditRow { replicate: r, parcel_id: c.status.parcel_id.clone(), eligible, enrolled, years_active, subsidy });
        }
    }
    t
}

/// Sum in a fixed binary tree over the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Probability that a candidate passes the lien check.
fn lien_pass_probability(s: &StaticEligibility, mode: LienMode) -> f64 {
    match (mode, s.observed_lien) {
        (LienMode::Ignore, _) => 1.0,
        (_, Some(has)) => f64::from(u8::from(!has)),
        (LienMode::ObservedOnly, None) => 0.0,
        (LienMode::SampledRate, None) => 1.0 - s.lien_rate,
    }
}

/// Expected total cost without sampling.
pub fn expected_cost(p: &PreparedScenario) -> (f64, f64) {
    let sc = &p.config;
    let mut total = 0.0;
    let mut eligible = 0.0;
    for c in &p.candidates {
        let pe = lien_pass_probability(&c.status, sc.lien_mode);
        eligible += pe;
        let schedule: f64 = c.increases.iter().take(sc.horizon_years).enumerate().map(|(y, inc)| inc * (1.0 - sc.dropout_rate).powi(y as i32)).sum();
        total += pe * sc.enrollment_rate * schedule;
    }
    (total, eligible)
}

/// Run every replicate and summarize. Replicates may run on any number of
/// threads; aggregation is a pairwise sum in replicate order, so the result
/// does not depend on scheduling.
pub fn run_prepared(p: &PreparedScenario) -> CostEstimate {
    run_inner(p, None).0
}

/// As [`run_prepared`], also returning one audit row per household for the
/// first `audit_replicates` replicates.
pub fn run_prepared_with_audit(p: &PreparedScenario, audit_replicates: usize) -> (CostEstimate, Vec<AuditRow>) {
    run_inner(p, Some(audit_replicates))
}

fn run_inner(p: &PreparedScenario, audit: Option<usize>) -> (CostEstimate, Vec<AuditRow>) {
    let sc = &p.config;
    let h = sc.horizon_years;
    let n = sc.replicates;
    let results: Vec<(ReplicateTotals, Vec<f64>, Vec<AuditRow>)> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut per_year = vec![0.0; h];
            let mut rows = Vec::new();
            let collect = audit.is_some_and(|k| r < k);
            let t = simulate_replicate(p, r, collect.then_some(&mut rows), &mut per_year);
            (t, per_year, rows)
        })
        .collect();

    let totals: Vec<f64> = results.iter().map(|(t, _, _)| t.total).collect();
    let mean = |xs: &[f64]| pairwise_sum(xs) / n as f64;
    let mean_total = mean(&totals);
    let std = if n > 1 {
        let dev: Vec<f64> = totals.iter().map(|x| (x - mean_total).powi(2)).collect();
        (pairwise_sum(&dev) / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let per_year_mean = (0..h).map(|y| mean(&results.iter().map(|(_, py, _)| py[y]).collect::<Vec<_>>())).collect();
    let count_mean = |f: fn(&ReplicateTotals) -> usize| mean(&results.iter().map(|(t, _, _)| f(t) as f64).collect::<Vec<_>>());
    let mut sorted = totals.clone();
    sorted.sort_by(f64::total_cmp);
    let (expected_total_cost, expected_eligible) = expected_cost(p);
    let estimate = CostEstimate {
        scenario: sc.name.clone(),
        seed: sc.seed,
        replicate_count: n,
        horizon_years: h,
        mean_total_cost: mean_total,
        std_total_cost: std,
        per_year_mean,
        eligible_count: count_mean(|t| t.eligible),
        enrolled_initial: count_mean(|t| t.enrolled),
        enrolled_final: count_mean(|t| t.survivors),
        quantiles: CostQuantiles {
            min: sorted[0],
            p05: quantile(&sorted, 0.05),
            p25: quantile(&sorted, 0.25),
            p50: quantile(&sorted, 0.50),
            p75: quantile(&sorted, 0.75),
            p95: quantile(&sorted, 0.95),
            max: sorted[n - 1],
        },
        expected_total_cost,
        expected_eligible,
        aggregation: "pairwise sum over replicates in replicate order; households summed in parcel-id order".into(),
        warnings: p.warnings.clone(),
    };
    let rows = results.into_iter().flat_map(|(_, _, rows)| rows).collect();
    (estimate, rows)
}

/// Prepare and run a scenario in one call.
pub fn run_scenario(
    idx: &DatasetIndex<'_>,
    parcels: &[ParcelRecord],
    forecasts: &ForecastTable,
    incomes: &dyn IncomeSource,
    policy_ctx: &EligibilityContext,
    sc: &ScenarioConfig,
    mc: &MillageConfig,
) -> Result<CostEstimate, CostError> {
    Ok(run_prepared(&prepare_scenario(idx, parcels, forecasts, incomes, policy_ctx, sc, mc)?))
}

/// Dataset-mode eligibility for one candidate under replicate `r`'s draws.
pub fn replicate_eligibility(p: &PreparedScenario, parcel_id: &str, r: usize) -> Option<crate::eligibility::EligibilityResult> {
    let c = p.candidates.iter().find(|c| c.status.parcel_id == parcel_id)?;
    let mut rng = stream(p.config.seed, &[tag::REPLICATE, r as u64, c.key]);
    let lien = lien_check_with_draw(c.status.observed_lien, c.status.lien_rate, p.config.lien_mode, rng.random());
    Some(combine(&c.status, lien))
}
