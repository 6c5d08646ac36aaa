//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use taxfund_core::cluster::*;
use taxfund_core::cost::*;
use taxfund_core::data::synth::{generate_synthetic, GenConfig};
use taxfund_core::data::{Dataset, LandUse, LienObservation, Neighborhood, NeighborhoodStats, ParcelRecord};
use taxfund_core::eligibility::*;
use taxfund_core::forecast::{legacy_forecast, ForecastConfig, ForecastMethod, ForecastRow, ForecastTable, LegacyAppreciationConfig};
use taxfund_core::forest::{impute, nrmse, DesignMatrix, ForestParams};
use taxfund_core::income::{prepare_cex, CexFilter, IncomeEstimate, IncomeFeatures};
use taxfund_core::pipeline::{cluster_stage, forecast_stage, income_stage};
use taxfund_core::policy::PolicyConfig;
use taxfund_core::rng::{key_of, stream, tag};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(label: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    check((got - want).abs() <= tol, || format!("{label}: got {got:.2}, want {want} +/- {tol}"))
}

// ---------------------------------------------------------------- enrollment

fn enrollment_arithmetic() -> Outcome {
    for (n, want, tol) in [(702.0, 555.0, 1.0), (372.0, 294.0, 1.0), (560.0, 442.0, 1.0), (489.0, 384.0, 3.0)] {
        within(&format!("{n} enrolled"), expected_enrolled(n, 0.79), want, tol)?;
    }
    Ok("4 transitions".into())
}

// ------------------------------------------------------------------ dropout

/// `n` households in one neighborhood, all passing location, occupancy and
/// income. Every fifth has an observed lien record, alternating clean and
/// encumbered.
struct Fixture {
    d: Dataset,
    forecasts: ForecastTable,
    incomes: BTreeMap<String, IncomeEstimate>,
    ctx: EligibilityContext,
    mc: MillageConfig,
}

fn fixture(counts: &[(Neighborhood, usize)]) -> Fixture {
    let mut d = Dataset::default();
    let mut rows = Vec::new();
    let mut incomes = BTreeMap::new();
    let mut k = 0;
    for &(n, count) in counts {
        for _ in 0..count {
            k += 1;
            let id = format!("H{k:05}");
            d.parcels.push(ParcelRecord {
                parcel_id: id.clone(),
                neighborhood: n,
                situs_address: format!("{k} Pine St"),
                owner_address: format!("{k} PINE STREET"),
                land_use: LandUse::OneFamily,
                living_units: 1,
                land_acres: 0.1,
                heated_sqft: 1000.0,
                rooms: 5,
                bedrooms: 2,
                bathrooms: 1,
                year_built: 1950,
                city_exemption: false,
                county_exemption: false,
                homestead_exemption: false,
                distance_to_beltline: 100.0,
            });
            if k % 5 == 0 {
                d.liens.push(LienObservation { parcel_id: id.clone(), has_lien: k % 10 == 0 });
            }
            let base = 40_000.0 + 500.0 * (k % 40) as f64;
            let growth = 0.03 + 0.01 * (k % 7) as f64;
            let mut v = base;
            let projected = (2018..=2024)
                .map(|y| {
                    v *= 1.0 + growth;
                    (y, v)
                })
                .collect();
            rows.push(ForecastRow { parcel_id: id.clone(), cluster: 0, method: ForecastMethod::ClusterTrend, base_year: 2017, base_value: base, projected });
            incomes.insert(id, IncomeEstimate::Estimated(30_000.0));
        }
    }
    for &(n, _) in counts {
        d.neighborhood_stats.push(NeighborhoodStats { neighborhood: n, population_estimate: 1000.0, total_bedrooms: 800 });
    }
    rows.sort_by(|a, b| a.parcel_id.cmp(&b.parcel_id));
    let forecasts = ForecastTable { base_year: 2017, horizon: 7, rows, excluded: vec![], warnings: vec![] };
    let policy = PolicyConfig::example();
    let ctx = policy.context_with_stats(&d.neighborhood_stats);
    Fixture { d, forecasts, incomes, ctx, mc: policy.millage }
}

impl Fixture {
    fn run(&self, sc: &ScenarioConfig) -> CostEstimate {
        run_scenario(&self.d.index(), &self.d.parcels, &self.forecasts, &self.incomes, &self.ctx, sc, &self.mc).unwrap()
    }
}

fn dropout_arithmetic() -> Outcome {
    within("survivors of 384", expected_survivors(384.0, 0.05, 7), 268.0, 1.0)?;
    // (eligible, enrollment rate, printed survivors after seven years)
    let arrows = [
        (489, 1.0, 339.0),
        (702, 1.0, 487.0),
        (372, 1.0, 257.0),
        (560, 1.0, 389.0),
        (489, 0.79, 268.0),
        (702, 0.79, 385.0),
        (372, 0.79, 203.0),
        (560, 0.79, 307.0),
    ];
    let mut got = Vec::new();
    for (n, rate, want) in arrows {
        let f = fixture(&[(Neighborhood::VineCity, n)]);
        let sc = ScenarioConfig { enrollment_rate: rate, dropout_rate: 0.05, lien_mode: LienMode::Ignore, replicates: 10_000, ..Default::default() };
        let est = f.run(&sc);
        check(est.eligible_count == n as f64, || format!("{n}: eligible {}", est.eligible_count))?;
        within(&format!("{n} at {rate}"), est.enrolled_final, want, 5.0)?;
        got.push(format!("{:.1}", est.enrolled_final));
    }
    Ok(format!("survivors {}", got.join(" ")))
}

// ------------------------------------------------------------------- legacy

fn legacy_cases() -> Outcome {
    let cases: [(f64, &[f64]); 20] = [
        (20_000.0, &[30_000.0, 45_000.0]),
        (37_000.0, &[41_440.0, 46_412.8, 51_982.336, 58_220.21632, 65_206.6422784, 73_031.439351808, 81_795.21207402496]),
        (36_999.0, &[55_498.5, 62_158.32]),
        (40_000.0, &[44_800.0, 50_176.0, 56_197.12]),
        (10_000.0, &[15_000.0, 22_500.0, 33_750.0, 50_625.0]),
        (24_666.0, &[36_999.0, 55_498.5]),
        (24_667.0, &[37_000.5, 41_440.56]),
        (30_000.0, &[45_000.0]),
        (1_000.0, &[1_500.0, 2_250.0, 3_375.0, 5_062.5, 7_593.75, 11_390.625]),
        (50_000.0, &[56_000.0, 62_720.0, 70_246.4, 78_675.968, 88_117.08416, 98_691.1342592, 110_534.070370304]),
        (100_000.0, &[112_000.0, 125_440.0, 140_492.8, 157_351.936, 176_234.16832]),
        (36_000.0, &[54_000.0]),
        (25_000.0, &[37_500.0, 42_000.0, 47_040.0]),
        (12_000.0, &[18_000.0, 27_000.0, 40_500.0, 45_360.0, 50_803.2]),
        (37_000.0, &[41_440.0]),
        (8_000.0, &[12_000.0, 18_000.0, 27_000.0, 40_500.0, 45_360.0, 50_803.2, 56_899.584]),
        (200_000.0, &[224_000.0, 250_880.0]),
        (33_000.0, &[49_500.0, 55_440.0]),
        (500.0, &[750.0, 1_125.0, 1_687.5, 2_531.25, 3_796.875, 5_695.3125, 8_542.96875, 12_814.453125, 19_221.6796875]),
        (24_000.0, &[36_000.0, 54_000.0, 60_480.0, 67_737.6]),
    ];
    let cfg = LegacyAppreciationConfig::default();
    for (base, want) in cases {
        let got = legacy_forecast(base, &cfg, want.len());
        check(got.len() == want.len(), || format!("{base}: {} years", got.len()))?;
        for (y, (g, w)) in got.iter().zip(want).enumerate() {
            check((g - w).abs() <= 1e-6, || format!("{base} year {}: {g} vs {w}", y + 1))?;
        }
    }
    Ok("20 cases".into())
}

// --------------------------------------------------------------- clustering

/// Exhaustive agglomeration: every step scans every live pair.
fn brute_force_ward(d: &CondensedMatrix) -> Vec<Merge> {
    let n = d.len();
    let mut live: Vec<(usize, usize)> = (0..n).map(|i| (i, 1)).collect();
    let mut cost: HashMap<(usize, usize), f64> = HashMap::new();
    for i in 0..n {
        for j in i + 1..n {
            cost.insert((i, j), d.get(i, j) * d.get(i, j));
        }
    }
    let get = |c: &HashMap<(usize, usize), f64>, a: usize, b: usize| c[&(a.min(b), a.max(b))];
    let mut merges = Vec::new();
    let mut last = 0.0f64;
    for t in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..live.len() {
            for y in x + 1..live.len() {
                let (a, b) = (live[x].0.min(live[y].0), live[x].0.max(live[y].0));
                let w = get(&cost, a, b);
                if best.map_or(true, |(bw, ba, bb, _, _)| (w, a, b) < (bw, ba, bb)) {
                    best = Some((w, a, b, x, y));
                }
            }
        }
        let (w, a, b, x, y) = best.unwrap();
        let (n_a, n_b) = (live[x].1 as f64, live[y].1 as f64);
        let new_id = n + t;
        for &(k, n_k) in live.iter().filter(|(k, _)| *k != a && *k != b) {
            let n_k = n_k as f64;
            let v = ((n_a + n_k) * get(&cost, live[x].0, k) + (n_b + n_k) * get(&cost, live[y].0, k) - n_k * w) / (n_a + n_b + n_k);
            cost.insert((k.min(new_id), k.max(new_id)), v.max(0.0));
        }
        let size = live[x].1 + live[y].1;
        last = last.max(w.sqrt());
        merges.push(Merge { node_a: a, node_b: b, height: last, new_node_id: new_id, size });
        live.remove(y);
        live.remove(x);
        live.push((new_id, size));
    }
    merges
}

fn random_signature(rng: &mut Pcg64Mcg, len: usize) -> BinarySignature {
    BinarySignature { parcel_id: String::new(), bits: (0..len).map(|_| rng.random_bool(0.5)).collect() }
}

fn clustering_oracle() -> Outcome {
    let mut rng = Pcg64Mcg::seed_from_u64(17);
    for trial in 0..1000 {
        let n = rng.random_range(2..=8);
        // Half the trials use few-bit signatures, which tie often.
        let d = if trial % 2 == 0 {
            let len = rng.random_range(1..=4);
            let sigs: Vec<BinarySignature> = (0..n).map(|_| random_signature(&mut rng, len)).collect();
            distance_matrix(&sigs, BinaryMetric::Jaccard).unwrap()
        } else {
            let vals: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..10.0)).collect();
            CondensedMatrix::from_fn(n, |i, j| vals[i * n + j])
        };
        let fast = ward_cluster(&d).map_err(|e| e.to_string())?;
        check(fast.merges == brute_force_ward(&d), || format!("trial {trial} differs from brute force"))?;
    }
    let mut rng = Pcg64Mcg::seed_from_u64(19);
    for t in 0..10_000 {
        let len = rng.random_range(1..=12);
        let [a, b, c] = [0; 3].map(|_| random_signature(&mut rng, len));
        let j = |x: &BinarySignature, y: &BinarySignature| jaccard_distance(x, y).unwrap();
        let (ab, bc, ac) = (j(&a, &b), j(&b, &c), j(&a, &c));
        let ok = (0.0..=1.0).contains(&ab)
            && ab == j(&b, &a)
            && j(&a, &a) == 0.0
            && ac <= ab + bc + 1e-12
            && (ab > 0.0 || a.bits == b.bits || a.ones() + b.ones() == 0);
        check(ok, || format!("triple {t}: {:?} {:?} {:?}", a.bits, b.bits, c.bits))?;
    }
    Ok("1000 trees, 10000 triples".into())
}

// ----------------------------------------------------------------- pipeline

fn pipeline_recovery() -> Outcome {
    let syn = generate_synthetic(2024, &GenConfig::default());
    let policy = PolicyConfig::example();
    let model = cluster_stage(&syn.dataset, &ClusterConfig::default()).map_err(|e| e.to_string())?;
    let found: Vec<usize> = model.parcel_ids.iter().map(|id| model.labels[id]).collect();
    let truth: Vec<usize> = model.parcel_ids.iter().map(|id| syn.truth.training_labels[id]).collect();
    let ari = adjusted_rand_index(&found, &truth);
    check(ari >= 0.9, || format!("adjusted Rand {ari:.3}"))?;
    let out = forecast_stage(&syn.dataset, &model, &ForecastConfig::default(), policy.config_year, 2024).map_err(|e| e.to_string())?;
    let oob = out.classifier.oob_accuracy;
    check(oob >= 0.9, || format!("classifier OOB accuracy {oob:.3}"))?;
    let top: Vec<&str> = out.importance.ranking().iter().take(4).map(|&i| out.importance.feature_names[i].as_str()).collect();
    for f in ["distance_to_beltline_m", "reference_value", "home_age"] {
        check(top.contains(&f), || format!("{f} not in top 4 {top:?}"))?;
    }
    Ok(format!("ARI {ari:.3}, OOB {oob:.3}, top {top:?}"))
}

// ------------------------------------------------------------------- income

fn mask(m: &DesignMatrix, fraction: f64, seed: u64) -> DesignMatrix {
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let rows: Vec<Vec<Option<f64>>> = (0..m.n_rows())
        .map(|r| m.row(r).iter().map(|&v| if rng.random_bool(fraction) { None } else { Some(v) }).collect())
        .collect();
    DesignMatrix::from_rows(m.columns().to_vec(), &rows).unwrap()
}

fn mean_fill(m: &DesignMatrix) -> DesignMatrix {
    let means: Vec<f64> = (0..m.n_cols())
        .map(|c| {
            let obs: Vec<f64> = m.column(c).filter(|v| !v.is_nan()).collect();
            obs.iter().sum::<f64>() / obs.len() as f64
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..m.n_rows()).map(|r| m.row(r).iter().enumerate().map(|(c, v)| if v.is_nan() { means[c] } else { *v }).collect()).collect();
    DesignMatrix::from_dense(m.columns().to_vec(), &rows).unwrap()
}

fn income_model() -> Outcome {
    let syn = generate_synthetic(2024, &GenConfig::default());
    let policy = PolicyConfig::example();
    let im = income_stage(&syn.dataset, &policy, IncomeFeatures::RentAndHouse, 2024).map_err(|e| e.to_string())?;
    check(im.oob_r2 >= 0.8, || format!("OOB R2 {:.3}", im.oob_r2))?;
    let survey = |seed: u64| {
        let cfg = GenConfig { training_parcels: 0, program_parcels: vec![(Neighborhood::VineCity, 300)], cex_records: 320, cex_missing_fraction: 0.0, ..GenConfig::default() };
        generate_synthetic(seed, &cfg).dataset.cex
    };
    let mut wins = 0;
    for seed in 0..20u64 {
        let truth = prepare_cex(&survey(100 + seed), &CexFilter::default(), IncomeFeatures::RentAndHouse).map_err(|e| e.to_string())?;
        let masked = mask(&truth, 0.2, seed);
        let filled = impute(&masked, &ForestParams::regression(seed).with_trees(50), 10, 1e-3).map_err(|e| e.to_string())?;
        wins += usize::from(nrmse(&truth, &filled, &masked) < nrmse(&truth, &mean_fill(&masked), &masked));
    }
    check(wins >= 19, || format!("forest imputation won {wins} of 20"))?;
    Ok(format!("OOB R2 {:.3}, imputation won {wins}/20", im.oob_r2))
}

// -------------------------------------------------------------- eligibility

fn parcel(id: &str, n: Neighborhood, own: bool) -> ParcelRecord {
    ParcelRecord {
        parcel_id: id.into(),
        neighborhood: n,
        situs_address: "10 Oak Street".into(),
        owner_address: if own { "10 OAK ST".into() } else { "PO Box 7".into() },
        land_use: LandUse::OneFamily,
        living_units: 1,
        land_acres: 0.1,
        heated_sqft: 1100.0,
        rooms: 5,
        bedrooms: 2,
        bathrooms: 1,
        year_built: 1950,
        city_exemption: false,
        county_exemption: false,
        homestead_exemption: false,
        distance_to_beltline: 500.0,
    }
}

fn stats(n: Neighborhood) -> NeighborhoodStats {
    NeighborhoodStats { neighborhood: n, population_estimate: 1000.0, total_bedrooms: 800 }
}

fn truth_table() -> Result<(), String> {
    let policy = PolicyConfig::example();
    let mut ctx = policy.context_with_stats(&[stats(Neighborhood::VineCity), stats(Neighborhood::WashingtonPark)]);
    ctx.include_washington_park = false;
    ctx.lien_mode = LienMode::ObservedOnly;
    for bits in 0u8..16 {
        let [loc, own, lien, inc] = [0, 1, 2, 3].map(|i| bits & (1 << i) != 0);
        let n = if loc { Neighborhood::VineCity } else { Neighborhood::WashingtonPark };
        let p = parcel("x", n, own);
        let d = Dataset { parcels: vec![p.clone()], liens: vec![LienObservation { parcel_id: "x".into(), has_lien: !lien }], ..Default::default() };
        let limit = ctx.ami.limit(household_size(p.bedrooms, 1.25));
        let income = if inc { limit - 1.0 } else { limit };
        let incomes: BTreeMap<String, IncomeEstimate> = [("x".to_owned(), IncomeEstimate::Estimated(income))].into();
        let r = evaluate(&p, &d.index(), &incomes, &ctx, &mut stream(0, &[])).map_err(|e| e.to_string())?;
        let oracle = loc && own && lien && inc;
        check(r.eligible == oracle && [r.location_ok, r.owner_ok, r.lien_ok, r.income_ok] == [loc, own, lien, inc], || format!("row {bits:04b}"))?;
    }
    Ok(())
}

fn program_dataset(seed: u64) -> (Dataset, BTreeMap<String, IncomeEstimate>) {
    let cfg = GenConfig {
        training_parcels: 0,
        program_parcels: Neighborhood::PROGRAM_AREA.iter().map(|n| (*n, 40)).collect(),
        cex_records: 0,
        ..GenConfig::default()
    };
    let syn = generate_synthetic(seed, &cfg);
    let rents: HashSet<&str> = syn.dataset.rents.iter().map(|r| r.parcel_id.as_str()).collect();
    let incomes = syn.truth.incomes.iter().filter(|(id, _)| rents.contains(id.as_str())).map(|(id, v)| (id.clone(), IncomeEstimate::Estimated(*v))).collect();
    (syn.dataset, incomes)
}

fn eligible_set(d: &Dataset, incomes: &BTreeMap<String, IncomeEstimate>, ctx: &EligibilityContext, seed: u64) -> HashSet<String> {
    let idx = d.index();
    d.parcels
        .iter()
        .filter(|p| p.neighborhood.in_program_area())
        .filter(|p| evaluate(p, &idx, incomes, ctx, &mut stream(seed, &[tag::HOUSEHOLD, key_of(&p.parcel_id)])).unwrap().eligible)
        .map(|p| p.parcel_id.clone())
        .collect()
}

fn eligibility() -> Outcome {
    truth_table()?;
    let policy = PolicyConfig::example();
    let mut grew = [0usize; 3];
    for seed in 0..100 {
        let (d, incomes) = program_dataset(seed);
        let mut base = policy.context_with_stats(&d.neighborhood_stats);
        base.include_washington_park = false;
        base.ami = base.ami.scaled(0.8);
        base.lien_mode = LienMode::SampledRate;
        let before = eligible_set(&d, &incomes, &base, seed);
        let variants = [
            EligibilityContext { ami: base.ami.scaled(1.25), ..base.clone() },
            EligibilityContext { lien_mode: LienMode::Ignore, ..base.clone() },
            EligibilityContext { include_washington_park: true, ..base.clone() },
        ];
        for (i, v) in variants.iter().enumerate() {
            let after = eligible_set(&d, &incomes, v, seed);
            check(before.is_subset(&after), || format!("seed {seed}: relaxation {i} removed a household"))?;
            grew[i] += usize::from(after.len() > before.len());
        }
    }
    check(grew.iter().all(|g| *g > 0), || format!("vacuous: {grew:?}"))?;
    Ok(format!("16 rows, 100 datasets, strict growth {grew:?}"))
}

// --------------------------------------------------------------- simulator

fn run_cli(root: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_taxfund"))
        .current_dir(root)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || format!("taxfund {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn end_to_end(root: &Path, jobs: &str) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/table3_wp_liens.json");
    let scenario = scenario.to_str().unwrap();
    let steps: [&[&str]; 7] = [
        &["synth", "--size", "small", "--seed", "5"],
        &["ingest"],
        &["cluster"],
        &["train-income"],
        &["forecast"],
        &["eligibility"],
        &["simulate", "--scenario", scenario, "--replicates", "300", "--audit", "2"],
    ];
    for s in steps {
        let mut args = s.to_vec();
        args.extend(["--jobs", jobs]);
        run_cli(root, &args)?;
    }
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn simulator() -> Outcome {
    let mut ctx = EligibilityContext::new(PolicyConfig::example().ami_limits);
    ctx.default_lien_rate = 0.41;
    let p = parcel("u", Neighborhood::VineCity, true);
    let mut rng = stream(7, &[tag::REPLICATE]);
    let rate = (0..10_000).filter(|_| lien_ok(&p, None, &ctx, &mut rng).ok).count() as f64 / 10_000.0;
    within("lien pass rate", rate, 0.59, 0.02)?;

    let f = fixture(&[(Neighborhood::VineCity, 150), (Neighborhood::EnglishAvenue, 100), (Neighborhood::WashingtonPark, 80)]);
    let base = ScenarioConfig { replicates: 400, include_washington_park: false, ..Default::default() };
    let cost = |sc: ScenarioConfig| f.run(&sc).mean_total_cost;
    let b = cost(base.clone());
    let mut last = 0.0;
    for r in [0.0, 0.3, 0.6, 0.79, 1.0] {
        let c = cost(ScenarioConfig { enrollment_rate: r, ..base.clone() });
        check(c >= last, || format!("cost fell when enrollment rose to {r}"))?;
        last = c;
    }
    let mut last = f64::INFINITY;
    for r in [0.0, 0.05, 0.2, 0.5, 1.0] {
        let c = cost(ScenarioConfig { dropout_rate: r, ..base.clone() });
        check(c <= last, || format!("cost rose when dropout rose to {r}"))?;
        last = c;
    }
    check(cost(ScenarioConfig { include_washington_park: true, ..base.clone() }) >= b, || "adding Washington Park lowered cost".into())?;
    check(cost(ScenarioConfig { lien_mode: LienMode::Ignore, ..base.clone() }) >= b, || "ignoring liens lowered cost".into())?;

    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let c = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = end_to_end(a.path(), "1")?;
    let second = end_to_end(c.path(), "4")?;
    check(first.len() > 20, || format!("only {} files written", first.len()))?;
    check(first.keys().eq(second.keys()), || "runs wrote different files".into())?;
    for (name, bytes) in &first {
        check(second[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!("lien pass rate {rate:.4}, {} files identical across runs", first.len()))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("enrollment arithmetic", Duration::from_secs(1), enrollment_arithmetic),
        ("dropout arithmetic and Monte Carlo", Duration::from_secs(10), dropout_arithmetic),
        ("legacy appreciation model", Duration::MAX, legacy_cases),
        ("clustering oracle and Jaccard metric", Duration::MAX, clustering_oracle),
        ("pipeline recovery", Duration::from_secs(60), pipeline_recovery),
        ("income model", Duration::MAX, income_model),
        ("eligibility truth table and monotonicity", Duration::MAX, eligibility),
        ("simulator calibration and reproducibility", Duration::MAX, simulator),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > limit => Err(format!("{msg}; took {took:.2?}, limit {limit:.0?}")),
            o => o,
        };
        match outcome {
            Ok(msg) => println!("PASS  {name}: {msg} ({took:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg} ({took:.2?})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
