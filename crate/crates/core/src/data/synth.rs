//! Seeded synthetic county data.
//!
//! Training parcels (neighborhood `Other`) carry complete 2005–2016
//! histories driven by latent reassessment trends; program-area parcels
//! carry a base-year assessment, rent estimates, owner and exemption
//! fields, and a sampled subset of lien observations. Each latent trend
//! occupies its own region of (distance to trail, reference value, home
//! age), so the partition is recoverable both from the histories and from
//! the house characteristics. The ground truth behind every draw is
//! returned alongside the dataset.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    complete_years, AssessmentSeries, CexRecord, Dataset, LandUse, LienObservation, Neighborhood,
    NeighborhoodStats, ParcelRecord, RentEstimate,
};
use crate::rng::{stream, tag, Stream};

/// A latent assessment trajectory: one relative change per consecutive pair
/// of complete years (10 steps, 2008→2010 included as one step). A zero
/// step means the parcel was not reassessed that year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTrend {
    pub weight: f64,
    pub steps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub config_year: i32,
    pub training_parcels: usize,
    pub program_parcels: Vec<(Neighborhood, usize)>,
    pub latent_trends: Vec<LatentTrend>,
    /// Probability that a step's changed/unchanged state is flipped.
    pub change_flip_prob: f64,
    /// Relative standard deviation applied to every nonzero step.
    pub magnitude_noise: f64,
    pub empty_lot_fraction: f64,
    pub owner_occupancy_rate: f64,
    /// Share of owner occupants that claim the homestead exemption.
    pub homestead_rate: f64,
    pub lien_rate: f64,
    pub washington_park_lien_rate: f64,
    pub lien_sample_fraction: f64,
    pub washington_park_sample_fraction: f64,
    pub rent_missing_fraction: f64,
    /// Parcels whose latest assessment is a year before the base year.
    pub stale_assessment_fraction: f64,
    /// Annual income per dollar of monthly rent.
    pub income_per_rent: f64,
    pub income_noise_sd: f64,
    pub cex_records: usize,
    pub cex_missing_fraction: f64,
}

impl Default for GenConfig {
    /// Roughly the scale of the original study area.
    fn default() -> Self {
        GenConfig {
            config_year: 2017,
            training_parcels: 2500,
            program_parcels: vec![
                (Neighborhood::AshviewHeights, 600),
                (Neighborhood::AtlantaUniversityCenter, 250),
                (Neighborhood::EnglishAvenue, 650),
                (Neighborhood::VineCity, 500),
                (Neighborhood::WashingtonPark, 600),
            ],
            latent_trends: default_trends(),
            change_flip_prob: 0.02,
            magnitude_noise: 0.15,
            empty_lot_fraction: 0.08,
            owner_occupancy_rate: 0.36,
            homestead_rate: 0.8,
            lien_rate: 0.41,
            washington_park_lien_rate: 0.42,
            lien_sample_fraction: 0.30,
            washington_park_sample_fraction: 0.45,
            rent_missing_fraction: 0.05,
            stale_assessment_fraction: 0.02,
            income_per_rent: 40.0,
            income_noise_sd: 3000.0,
            cex_records: 320,
            cex_missing_fraction: 0.15,
        }
    }
}

impl GenConfig {
    /// A few hundred parcels; fast enough for unit tests.
    pub fn small() -> Self {
        GenConfig {
            training_parcels: 200,
            program_parcels: vec![
                (Neighborhood::AshviewHeights, 40),
                (Neighborhood::AtlantaUniversityCenter, 30),
                (Neighborhood::EnglishAvenue, 40),
                (Neighborhood::VineCity, 40),
                (Neighborhood::WashingtonPark, 40),
                (Neighborhood::Other, 10),
            ],
            cex_records: 120,
            ..GenConfig::default()
        }
    }
}

/// Four reassessment patterns with distinct change years.
pub fn default_trends() -> Vec<LatentTrend> {
    vec![
        LatentTrend { weight: 0.36, steps: vec![0.08, 0.0, 0.05, -0.10, 0.0, 0.0, 0.0, 0.06, 0.0, 0.09] },
        LatentTrend { weight: 0.09, steps: vec![0.15, 0.12, 0.0, 0.0, -0.20, 0.0, 0.10, 0.25, 0.30, 0.20] },
        LatentTrend { weight: 0.10, steps: vec![0.0, 0.20, 0.0, 0.15, 0.0, 0.05, 0.0, 0.0, 0.35, 0.0] },
        LatentTrend { weight: 0.45, steps: vec![0.03, 0.0, 0.0, -0.05, -0.08, 0.0, 0.0, 0.0, 0.04, 0.05] },
    ]
}

/// The hidden state behind a synthetic dataset, for test oracles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub training_labels: BTreeMap<String, usize>,
    pub program_labels: BTreeMap<String, usize>,
    pub incomes: BTreeMap<String, f64>,
    pub liens: BTreeMap<String, bool>,
    pub owner_occupied: BTreeMap<String, bool>,
    pub trend_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

const STREETS: [&str; 12] = [
    "Joseph E Lowery", "Mayson Turner", "Sunset", "Vine", "Oliver", "Lena", "Mathewson", "Thurmond",
    "Proctor", "Ashby", "Simpson", "Lawton",
];
const SUFFIXES: [(&str, &str); 4] = [("Street", "St"), ("Avenue", "Ave"), ("Drive", "Dr"), ("Road", "Rd")];

fn residents_per_bedroom(n: Neighborhood) -> f64 {
    match n {
        Neighborhood::AshviewHeights => 1.25,
        Neighborhood::AtlantaUniversityCenter => 1.4,
        Neighborhood::EnglishAvenue => 1.15,
        Neighborhood::VineCity => 1.2,
        Neighborhood::WashingtonPark => 1.3,
        Neighborhood::Other => 1.1,
    }
}

fn pick_weighted(rng: &mut Stream, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Distance, reference value and age for a parcel in latent trend `cluster`.
/// Trends come in pairs sharing a distance band; the pair is split by value
/// (even pairs) or by age (odd pairs).
fn latent_features(rng: &mut Stream, cluster: usize) -> (f64, f64, f64) {
    let pair = (cluster / 2) as f64;
    let low = cluster % 2 == 0;
    let distance = rng.random_range(pair * 1200.0 + 50.0..pair * 1200.0 + 1150.0);
    let (value, age): (f64, f64) = if (cluster / 2) % 2 == 0 {
        let v = if low { rng.random_range(25_000.0..60_000.0) } else { rng.random_range(70_000.0..220_000.0) };
        (v, rng.random_range(5.0..115.0))
    } else {
        let a = if low { rng.random_range(75.0..115.0) } else { rng.random_range(5.0..60.0) };
        (rng.random_range(25_000.0..220_000.0), a)
    };
    (distance, value.round(), age.round())
}

fn address(rng: &mut Stream) -> (u32, usize, usize) {
    (rng.random_range(1..2000), rng.random_range(0..STREETS.len()), rng.random_range(0..SUFFIXES.len()))
}

fn render_address((num, street, suffix): (u32, usize, usize), long: bool, upper: bool) -> String {
    let (l, s) = SUFFIXES[suffix];
    let a = format!("{num} {} {}", STREETS[street], if long { l } else { s });
    if upper {
        a.to_uppercase()
    } else {
        a
    }
}

struct House {
    parcel: ParcelRecord,
    owner_occupied: bool,
    reference_value: f64,
}

fn house(rng: &mut Stream, cfg: &GenConfig, id: String, n: Neighborhood, cluster: usize) -> House {
    let (distance, reference_value, age) = latent_features(rng, cluster);
    let empty = n.in_program_area() && rng.random_bool(cfg.empty_lot_fraction);
    let land_use = if empty {
        LandUse::EmptyLot
    } else {
        const USES: [LandUse; 6] = [
            LandUse::OneFamily,
            LandUse::TwoFamily,
            LandUse::ThreeFamily,
            LandUse::Condo,
            LandUse::Townhouse,
            LandUse::CondoLoft,
        ];
        USES[pick_weighted(rng, &[0.62, 0.10, 0.03, 0.12, 0.09, 0.04])]
    };
    let living_units = match land_use {
        LandUse::EmptyLot => 0,
        LandUse::TwoFamily => 2,
        LandUse::ThreeFamily => 3,
        _ => 1,
    };
    let (rooms, bedrooms, bathrooms, heated_sqft) = if empty {
        (0, 0, 0, 0.0)
    } else {
        let rooms: u32 = rng.random_range(4..=9);
        let bedrooms = rng.random_range(1..=(rooms - 2).min(5));
        let bathrooms = rng.random_range(1..=3);
        let sqft = (400.0 + 260.0 * f64::from(bedrooms) + rng.random_range(0.0..700.0)).round();
        (rooms, bedrooms, bathrooms, sqft)
    };
    let land_acres = match land_use {
        LandUse::Condo | LandUse::CondoLoft => rng.random_range(0.01..0.05),
        _ => rng.random_range(0.05..0.6),
    };
    let land_acres = (land_acres * 1000.0_f64).round() / 1000.0;

    let situs = address(rng);
    let owner_occupied = !empty && rng.random_bool(cfg.owner_occupancy_rate);
    let owner_address = if owner_occupied {
        // Same address, formatted the way a different clerk might.
        render_address(situs, rng.random_bool(0.5), true)
    } else if rng.random_bool(0.3) {
        format!("PO Box {}", rng.random_range(100..99_999))
    } else {
        let mut other = address(rng);
        other.0 += 2000;
        render_address(other, false, false)
    };
    let homestead = owner_occupied && rng.random_bool(cfg.homestead_rate);
    let senior = homestead && rng.random_bool(0.3);

    House {
        parcel: ParcelRecord {
            parcel_id: id,
            neighborhood: n,
            situs_address: render_address(situs, false, false),
            owner_address,
            land_use,
            living_units,
            land_acres,
            heated_sqft,
            rooms,
            bedrooms,
            bathrooms,
            year_built: cfg.config_year - age as i32,
            city_exemption: senior,
            county_exemption: senior,
            homestead_exemption: homestead,
            distance_to_beltline: distance,
        },
        owner_occupied,
        reference_value,
    }
}

fn monthly_rent(rng: &mut Stream, bedrooms: f64, bathrooms: f64, sqft: f64, age: f64) -> f64 {
    let noise = Normal::new(0.0, 60.0).expect("valid sd").sample(rng);
    (250.0 + 160.0 * bedrooms + 110.0 * bathrooms + 0.12 * sqft - 1.5 * age.min(100.0) + noise).max(300.0).round()
}

fn history(rng: &mut Stream, cfg: &GenConfig, trend: &LatentTrend, start: f64) -> Vec<(i32, f64)> {
    let years: Vec<i32> = complete_years().collect();
    let noise = Normal::new(1.0, cfg.magnitude_noise.max(0.0)).expect("valid sd");
    let mut value = start;
    let mut out = vec![(years[0], value)];
    for (i, &year) in years.iter().enumerate().skip(1) {
        let mut step = trend.steps.get(i - 1).copied().unwrap_or(0.0);
        if rng.random_bool(cfg.change_flip_prob) {
            step = if step == 0.0 {
                let m = rng.random_range(0.01..0.05);
                if rng.random_bool(0.5) { m } else { -m }
            } else {
                0.0
            };
        } else if step != 0.0 {
            step *= noise.sample(rng).max(0.2);
        }
        if step != 0.0 {
            value = (value * (1.0 + step.max(-0.9))).round().max(1.0);
        }
        out.push((year, value));
    }
    out
}

/// Generate a dataset and its ground truth. Identical `(seed, cfg)` gives
/// identical output.
pub fn generate_synthetic(seed: u64, cfg: &GenConfig) -> Synthetic {
    let weights: Vec<f64> = cfg.latent_trends.iter().map(|t| t.weight).collect();
    let mut truth = GroundTruth { trend_weights: weights.clone(), ..Default::default() };
    let mut d = Dataset::default();

    for i in 0..cfg.training_parcels {
        let mut rng = stream(seed, &[tag::SYNTH, 0, i as u64]);
        let cluster = pick_weighted(&mut rng, &weights);
        let id = format!("O4W-{:06}", i + 1);
        let h = house(&mut rng, cfg, id.clone(), Neighborhood::Other, cluster);
        let obs = history(&mut rng, cfg, &cfg.latent_trends[cluster], h.reference_value);
        d.assessments.push(AssessmentSeries::new(id.clone(), obs));
        d.parcels.push(h.parcel);
        truth.training_labels.insert(id, cluster);
    }

    let income_noise = Normal::new(0.0, cfg.income_noise_sd.max(0.0)).expect("valid sd");
    let mut k = 0;
    for &(n, count) in &cfg.program_parcels {
        for _ in 0..count {
            k += 1;
            let mut rng = stream(seed, &[tag::SYNTH, 1, k as u64]);
            let cluster = pick_weighted(&mut rng, &weights);
            let id = format!("WS-{k:06}");
            let h = house(&mut rng, cfg, id.clone(), n, cluster);
            let p = &h.parcel;

            let stale = rng.random_bool(cfg.stale_assessment_fraction);
            let year = if stale { cfg.config_year - 1 } else { cfg.config_year };
            d.assessments.push(AssessmentSeries::new(id.clone(), [(year, h.reference_value)]));

            if !p.is_empty_lot() {
                let age = p.home_age(cfg.config_year);
                let rent = monthly_rent(&mut rng, f64::from(p.bedrooms), f64::from(p.bathrooms), p.heated_sqft, age);
                let income = (cfg.income_per_rent * rent + income_noise.sample(&mut rng)).max(5_000.0).round();
                truth.incomes.insert(id.clone(), income);
                if !rng.random_bool(cfg.rent_missing_fraction) {
                    d.rents.push(RentEstimate { parcel_id: id.clone(), monthly_rent_low: rent });
                }
            }

            let (rate, sample) = if n == Neighborhood::WashingtonPark {
                (cfg.washington_park_lien_rate, cfg.washington_park_sample_fraction)
            } else {
                (cfg.lien_rate, cfg.lien_sample_fraction)
            };
            let has_lien = rng.random_bool(rate);
            if rng.random_bool(sample) {
                d.liens.push(LienObservation { parcel_id: id.clone(), has_lien });
            }
            truth.liens.insert(id.clone(), has_lien);
            truth.owner_occupied.insert(id.clone(), h.owner_occupied);
            truth.program_labels.insert(id, cluster);
            d.parcels.push(h.parcel);
        }
    }

    for n in Neighborhood::PROGRAM_AREA {
        let beds: u64 = d.parcels.iter().filter(|p| p.neighborhood == n).map(|p| u64::from(p.bedrooms)).sum();
        if beds > 0 {
            d.neighborhood_stats.push(NeighborhoodStats {
                neighborhood: n,
                population_estimate: (beds as f64 * residents_per_bedroom(n)).round(),
                total_bedrooms: beds,
            });
        }
    }

    for i in 0..cfg.cex_records {
        let mut rng = stream(seed, &[tag::SYNTH, 2, i as u64]);
        d.cex.push(cex_record(&mut rng, cfg, &income_noise));
    }

    Synthetic { dataset: d, truth }
}

fn cex_record(rng: &mut Stream, cfg: &GenConfig, income_noise: &Normal<f64>) -> CexRecord {
    let rooms = f64::from(rng.random_range(4..=9u32));
    let bedrooms = f64::from(rng.random_range(1..=(rooms as u32 - 2).min(5)));
    let bathrooms = f64::from(rng.random_range(1..=3u32));
    let age = f64::from(rng.random_range(5..=110u32));
    let sqft = 400.0 + 260.0 * bedrooms + rng.random_range(0.0..700.0);
    let rent = monthly_rent(rng, bedrooms, bathrooms, sqft, age);
    let income = (cfg.income_per_rent * rent + income_noise.sample(rng)).max(5_000.0).round();
    let earners = (1.0 + (income / 40_000.0).floor()).min(4.0);

    // Incomes at the tails go unreported more often.
    let z = ((income - cfg.income_per_rent * 1100.0) / (cfg.income_per_rent * 350.0)).abs();
    let p_income = (cfg.cex_missing_fraction * (0.5 + z)).min(0.6);
    let p_other = cfg.cex_missing_fraction / 3.0;
    let atlanta = if rng.random_bool(0.88) { 1.0 } else { 0.0 };
    let homeowner = if rng.random_bool(0.9) { 1.0 } else { 0.0 };
    let mut maybe = |v: f64, p: f64| if rng.random_bool(p) { None } else { Some(v) };
    CexRecord {
        before_tax_income: maybe(income, p_income),
        monthly_rent: maybe(rent, p_other),
        bedrooms: maybe(bedrooms, p_other),
        bathrooms: maybe(bathrooms, p_other),
        rooms: maybe(rooms, p_other),
        home_age: maybe(age, p_other),
        extra_features: vec![
            ("atlanta".to_owned(), Some(atlanta)),
            ("homeowner".to_owned(), Some(homeowner)),
            ("earners".to_owned(), maybe(earners, p_other)),
        ],
    }
}
