use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use taxfund_core::artifacts::{files, read_json, sha256_file, sorted_json, RunManifest, Stage, WorkDir, MANIFEST_FILE};
use taxfund_core::cluster::{BinaryMetric, ClusterConfig, ClusterModel};
use taxfund_core::cost::{prepare_scenario, run_prepared_with_audit, ScenarioConfig};
use taxfund_core::data::synth::{generate_synthetic, GenConfig};
use taxfund_core::data::{load_dataset, validate_dataset, write_dataset, Dataset, DatasetFile, DatasetPaths, ValidationRules};
use taxfund_core::eligibility::{DatasetEligibility, DatasetModeSettings, IncomeMode, LienMode, LienProvenance, ModelIncome};
use taxfund_core::forecast::{ForecastConfig, ForecastMethod, ForecastTable};
use taxfund_core::income::{IncomeFeatures, IncomeModel};
use taxfund_core::pipeline;
use taxfund_core::policy::PolicyConfig;
use taxfund_service::{AppState, Bundle, ServiceConfig};

use crate::error::{CliError, OrCode};
use crate::{Features, Global, Incomes, Liens, Method, Metric, Size};

pub const DEFAULT_SEED: u64 = 1;
pub const BIND_ENV: &str = "TAXFUND_BIND_ADDR";

pub struct Ctx {
    g: Global,
    command: Vec<String>,
}

impl Ctx {
    pub fn new(g: Global, command: Vec<String>) -> Self {
        Ctx { g, command }
    }

    fn seed(&self) -> u64 {
        self.g.seed.unwrap_or(DEFAULT_SEED)
    }

    fn work(&self) -> WorkDir {
        WorkDir::new(&self.g.out)
    }

    fn policy_path(&self) -> PathBuf {
        self.g.config.clone().unwrap_or_else(|| self.g.data_dir.join(files::POLICY))
    }

    fn policy(&self) -> Result<PolicyConfig, CliError> {
        let path = self.policy_path();
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::new("missing_config", format!("cannot read policy {}: {e}; pass --config or run stage synth first", path.display()))
        })?;
        PolicyConfig::from_json(&text).or_code("invalid_config")
    }

    fn manifest(&self, stage: Stage) -> RunManifest {
        RunManifest::new(stage, self.command.clone(), self.seed())
    }

    fn dataset_paths(&self) -> DatasetPaths {
        DatasetPaths::in_dir(&self.g.data_dir)
    }

    /// Load the dataset and check it is the one ingest validated.
    fn dataset(&self, m: &mut RunManifest) -> Result<Dataset, CliError> {
        let ingest = RunManifest::read(&self.work().require(Stage::Ingest)?)?;
        let paths = self.dataset_paths();
        for f in DatasetFile::ALL {
            let label = input_label(f);
            let digest = sha256_file(paths.get(f))?;
            if ingest.inputs.get(&label) != Some(&digest) {
                return Err(CliError::new("stale_input", format!("{} changed since ingest; run stage ingest again", f.file_name())));
            }
            m.inputs.insert(label, digest);
        }
        Ok(load_dataset(&paths)?.dataset)
    }

    fn artifact<T: for<'de> serde::Deserialize<'de>>(&self, stage: Stage, file: &str, m: &mut RunManifest) -> Result<T, CliError> {
        let path = self.work().artifact(stage, file)?;
        m.add_input(format!("{stage}/{file}"), &path)?;
        Ok(read_json(&path)?)
    }
}

fn input_label(f: DatasetFile) -> String {
    format!("data/{}", f.file_name())
}

/// A freshly emptied output directory.
fn fresh_dir(dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).or_code("io")?;
    }
    std::fs::create_dir_all(dir).or_code("io")
}

fn write_output(dir: &Path, name: &str, contents: &[u8], m: &mut RunManifest) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    m.outputs.insert(name.to_owned(), taxfund_core::artifacts::sha256_hex(contents));
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T, m: &mut RunManifest) -> Result<(), CliError> {
    write_output(dir, name, sorted_json(value).as_bytes(), m)
}

/// Written last, so a directory with a manifest holds a finished stage.
fn finish(dir: &Path, m: &RunManifest) -> Result<(), CliError> {
    std::fs::write(dir.join(MANIFEST_FILE), sorted_json(m)).or_code("io")
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).or_code("io")?;
    fill(&mut w).or_code("io")?;
    w.into_inner().or_code("io")
}

pub fn synth(ctx: &Ctx, size: Size) -> Result<Value, CliError> {
    let cfg = match size {
        Size::Small => GenConfig::small(),
        Size::Full => GenConfig::default(),
    };
    let dir = &ctx.g.data_dir;
    std::fs::create_dir_all(dir).or_code("io")?;
    let syn = generate_synthetic(ctx.seed(), &cfg);
    let paths = DatasetPaths::in_dir(dir);
    write_dataset(&syn.dataset, &paths).or_code("io")?;
    let mut m = ctx.manifest(Stage::Synth);
    for f in DatasetFile::ALL {
        m.outputs.insert(f.file_name().to_owned(), sha256_file(paths.get(f))?);
    }
    write_output(dir, files::POLICY, PolicyConfig::example_json().as_bytes(), &mut m)?;
    write_json(dir, files::TRUTH, &syn.truth, &mut m)?;
    m.config_checksums.insert("policy".into(), PolicyConfig::example().checksum());
    finish(dir, &m)?;
    Ok(json!({ "stage": "synth", "dir": dir, "parcels": syn.dataset.parcels.len() }))
}

pub fn ingest(ctx: &Ctx) -> Result<Value, CliError> {
    let dir = ctx.work().stage_dir(Stage::Ingest);
    fresh_dir(&dir)?;
    let mut m = ctx.manifest(Stage::Ingest);
    let paths = ctx.dataset_paths();
    for f in DatasetFile::ALL {
        m.add_input(input_label(f), paths.get(f))?;
    }
    let rules = match ctx.policy() {
        Ok(p) => {
            m.config_checksums.insert("policy".into(), p.checksum());
            ValidationRules { config_year: p.config_year }
        }
        Err(_) if ctx.g.config.is_none() && !ctx.policy_path().exists() => ValidationRules::default(),
        Err(e) => return Err(e),
    };
    let loaded = load_dataset(&paths)?;
    let report = validate_dataset(&loaded.dataset, &rules);
    let doc = json!({ "load_warnings": loaded.warnings, "report": report, "accepted": report.accepted() });
    write_json(&dir, files::VALIDATION_REPORT, &doc, &mut m)?;
    if !report.accepted() {
        return Err(CliError {
            code: "rejected_input",
            message: format!("{} validation error(s); see {}", report.errors.len(), dir.join(files::VALIDATION_REPORT).display()),
            details: serde_json::to_value(&report.errors).ok(),
        });
    }
    finish(&dir, &m)?;
    Ok(json!({
        "stage": "ingest",
        "counts": report.counts,
        "warnings": report.warnings.len() + loaded.warnings.len(),
    }))
}

pub fn cluster(ctx: &Ctx, k: usize, epsilon: f64, metric: Metric) -> Result<Value, CliError> {
    let dir = ctx.work().stage_dir(Stage::Cluster);
    let mut m = ctx.manifest(Stage::Cluster);
    let d = ctx.dataset(&mut m)?;
    fresh_dir(&dir)?;
    let metric = match metric {
        Metric::Jaccard => BinaryMetric::Jaccard,
        Metric::Hamming => BinaryMetric::Hamming,
    };
    let cfg = ClusterConfig { k, epsilon, metric, ..ClusterConfig::default() };
    let model = pipeline::cluster_stage(&d, &cfg).or_code("cluster_failed")?;
    write_json(&dir, files::CLUSTER_MODEL, &model, &mut m)?;
    let trends = csv_bytes(&["cluster", "year", "cumulative_pct_change"], |w| {
        for (c, points) in model.cumulative_change().iter().enumerate() {
            for (year, pct) in points {
                w.write_record([c.to_string(), year.to_string(), pct.to_string()])?;
            }
        }
        Ok(())
    })?;
    write_output(&dir, files::CUMULATIVE_TRENDS, &trends, &mut m)?;
    finish(&dir, &m)?;
    Ok(json!({ "stage": "cluster", "k": model.k, "cluster_sizes": model.cluster_sizes }))
}

pub fn train_income(ctx: &Ctx, features: Features) -> Result<Value, CliError> {
    let dir = ctx.work().stage_dir(Stage::TrainIncome);
    let mut m = ctx.manifest(Stage::TrainIncome);
    let d = ctx.dataset(&mut m)?;
    let policy = ctx.policy()?;
    m.config_checksums.insert("policy".into(), policy.checksum());
    fresh_dir(&dir)?;
    let features = match features {
        Features::RentAndHouse => IncomeFeatures::RentAndHouse,
        Features::RentOnly => IncomeFeatures::RentOnly,
    };
    let model = pipeline::income_stage(&d, &policy, features, ctx.seed()).or_code("train_income_failed")?;
    write_json(&dir, files::INCOME_MODEL, &model, &mut m)?;
    finish(&dir, &m)?;
    Ok(json!({
        "stage": "train-income",
        "training_rows": model.training_rows,
        "observed_incomes": model.observed_incomes,
        "oob_r2": model.oob_r2,
    }))
}

pub fn forecast(ctx: &Ctx, horizon: usize, base_year: Option<i32>, method: Method) -> Result<Value, CliError> {
    let dir = ctx.work().stage_dir(Stage::Forecast);
    let mut m = ctx.manifest(Stage::Forecast);
    let cm: ClusterModel = ctx.artifact(Stage::Cluster, files::CLUSTER_MODEL, &mut m)?;
    let d = ctx.dataset(&mut m)?;
    let policy = ctx.policy()?;
    m.config_checksums.insert("policy".into(), policy.checksum());
    fresh_dir(&dir)?;
    let method = match method {
        Method::ClusterTrend => ForecastMethod::ClusterTrend,
        Method::LegacyFlat => ForecastMethod::LegacyFlat,
    };
    let cfg = ForecastConfig { base_year: base_year.unwrap_or(policy.config_year), horizon, method, ..ForecastConfig::default() };
    let out = pipeline::forecast_stage(&d, &cm, &cfg, policy.config_year, ctx.seed()).or_code("forecast_failed")?;
    write_json(&dir, files::CLASSIFIER, &out.classifier, &mut m)?;
    let ranking: Vec<&str> = out.importance.ranking().into_iter().map(|i| out.importance.feature_names[i].as_str()).collect();
    write_json(&dir, files::IMPORTANCE, &json!({ "importance": out.importance, "ranking": ranking }), &mut m)?;
    write_output(&dir, files::FORECAST_CSV, out.table.to_csv_string().as_bytes(), &mut m)?;
    write_json(&dir, files::FORECAST_JSON, &out.table, &mut m)?;
    finish(&dir, &m)?;
    Ok(json!({
        "stage": "forecast",
        "rows": out.table.rows.len(),
        "excluded": out.table.excluded.len(),
        "oob_accuracy": out.classifier.oob_accuracy,
        "top_features": &ranking[..ranking.len().min(4)],
    }))
}

pub fn eligibility(ctx: &Ctx, lien_mode: Liens, income_mode: Incomes, include_washington_park: bool) -> Result<Value, CliError> {
    let dir = ctx.work().stage_dir(Stage::Eligibility);
    let mut m = ctx.manifest(Stage::Eligibility);
    let im: IncomeModel = ctx.artifact(Stage::TrainIncome, files::INCOME_MODEL, &mut m)?;
    let d = ctx.dataset(&mut m)?;
    let policy = ctx.policy()?;
    m.config_checksums.insert("policy".into(), policy.checksum());
    fresh_dir(&dir)?;
    let settings = DatasetModeSettings {
        include_washington_park,
        lien_mode: match lien_mode {
            Liens::ObservedOnly => LienMode::ObservedOnly,
            Liens::SampledRate => LienMode::SampledRate,
            Liens::Ignore => LienMode::Ignore,
        },
        income_mode: match income_mode {
            Incomes::Liberal => IncomeMode::Liberal,
            Incomes::Strict => IncomeMode::Strict,
        },
        seed: ctx.seed(),
    };
    let out: DatasetEligibility = pipeline::eligibility_stage(&d, &policy, &im, &settings).or_code("eligibility_failed")?;
    write_json(&dir, files::ELIGIBILITY_JSON, &out, &mut m)?;
    let idx = d.index();
    let table = csv_bytes(
        &["parcel_id", "neighborhood", "location_ok", "owner_ok", "lien_ok", "income_ok", "eligible", "lien_source", "household_size", "income_limit"],
        |w| {
            for r in &out.results {
                let source = match r.lien.provenance {
                    LienProvenance::Observed { .. } => "observed",
                    LienProvenance::Simulated { .. } => "simulated",
                    LienProvenance::Ignored => "ignored",
                    LienProvenance::Unobserved => "unobserved",
                };
                let n = idx.parcels[r.parcel_id.as_str()].neighborhood;
                w.write_record([
                    r.parcel_id.clone(),
                    n.to_string(),
                    r.location_ok.to_string(),
                    r.owner_ok.to_string(),
                    r.lien_ok.to_string(),
                    r.income_ok.to_string(),
                    r.eligible.to_string(),
                    source.to_owned(),
                    r.estimated_household_size.to_string(),
                    r.income_limit.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    write_output(&dir, files::ELIGIBILITY_CSV, &table, &mut m)?;
    finish(&dir, &m)?;
    let mut by_neighborhood: BTreeMap<String, usize> = BTreeMap::new();
    for r in out.results.iter().filter(|r| r.eligible) {
        *by_neighborhood.entry(idx.parcels[r.parcel_id.as_str()].neighborhood.to_string()).or_default() += 1;
    }
    Ok(json!({ "stage": "eligibility", "evaluated": out.results.len(), "eligible": out.eligible_count(), "eligible_by_neighborhood": by_neighborhood }))
}

/// Read a scenario file. `--seed` replaces the file's seed; a file without
/// a seed uses the default.
pub fn load_scenario(path: &Path, seed: Option<u64>, replicates: Option<usize>) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::new("missing_file", format!("{}: {e}", path.display())))?;
    let mut sc: ScenarioConfig = serde_json::from_str(&text).map_err(|e| CliError::new("invalid_scenario", format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(r) = replicates {
        sc.replicates = r;
    }
    let fields = sc.field_errors();
    if !fields.is_empty() {
        let details = fields.iter().map(|(f, msg)| json!({ "field": f, "message": msg })).collect();
        return Err(CliError { code: "invalid_scenario", message: format!("{}: invalid scenario", path.display()), details: Some(Value::Array(details)) });
    }
    Ok(sc)
}

/// Letters, digits, `-` and `_` only.
fn dir_name(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if s.is_empty() {
        "scenario".into()
    } else {
        s
    }
}

pub fn simulate(ctx: &Ctx, scenario: &Path, replicates: Option<usize>, audit: usize) -> Result<Value, CliError> {
    let sc = load_scenario(scenario, ctx.g.seed, replicates)?;
    let mut m = RunManifest::new(Stage::Simulate, ctx.command.clone(), sc.seed);
    let forecasts: ForecastTable = ctx.artifact(Stage::Forecast, files::FORECAST_JSON, &mut m)?;
    let im: IncomeModel = ctx.artifact(Stage::TrainIncome, files::INCOME_MODEL, &mut m)?;
    let d = ctx.dataset(&mut m)?;
    let policy = ctx.policy()?;
    m.config_checksums.insert("policy".into(), policy.checksum());
    m.config_checksums.insert("scenario".into(), taxfund_core::artifacts::sha256_hex(sorted_json(&sc).as_bytes()));
    let dir = ctx.work().stage_dir(Stage::Simulate).join(dir_name(&sc.name));
    fresh_dir(&dir)?;

    let ctx_policy = policy.context_with_stats(&d.neighborhood_stats);
    let incomes = ModelIncome { model: &im, config_year: policy.config_year };
    let prepared = prepare_scenario(&d.index(), &d.parcels, &forecasts, &incomes, &ctx_policy, &sc, &policy.millage).or_code("simulate_failed")?;
    let (estimate, rows) = run_prepared_with_audit(&prepared, audit);

    write_json(&dir, "scenario.json", &sc, &mut m)?;
    write_json(&dir, files::COST_ESTIMATE, &estimate, &mut m)?;
    let years = forecasts.forecast_years();
    let per_year = csv_bytes(&["year", "mean_cost"], |w| {
        for (y, v) in years.iter().zip(&estimate.per_year_mean) {
            w.write_record([y.to_string(), v.to_string()])?;
        }
        Ok(())
    })?;
    write_output(&dir, files::PER_YEAR_CSV, &per_year, &mut m)?;
    if audit > 0 {
        let audit_csv = csv_bytes(&["replicate", "parcel_id", "eligible", "enrolled", "years_active", "subsidy"], |w| {
            for r in &rows {
                w.write_record([
                    r.replicate.to_string(),
                    r.parcel_id.clone(),
                    r.eligible.to_string(),
                    r.enrolled.to_string(),
                    r.years_active.to_string(),
                    r.subsidy.to_string(),
                ])?;
            }
            Ok(())
        })?;
        write_output(&dir, files::AUDIT_CSV, &audit_csv, &mut m)?;
    }
    finish(&dir, &m)?;
    Ok(json!({
        "stage": "simulate",
        "scenario": sc.name,
        "dir": dir,
        "mean_total_cost": estimate.mean_total_cost,
        "eligible_count": estimate.eligible_count,
        "enrolled_initial": estimate.enrolled_initial,
        "enrolled_final": estimate.enrolled_final,
    }))
}

pub fn serve(ctx: &Ctx, port: u16, sync_cap: usize) -> Result<Value, CliError> {
    let bundle = Bundle::load(&ctx.g.data_dir, &ctx.policy_path(), &ctx.work()).map_err(|e| {
        let code = match &e {
            taxfund_service::BundleError::Artifact(taxfund_core::artifacts::ArtifactError::MissingStage { .. }) => "missing_stage",
            _ => "invalid_bundle",
        };
        CliError::new(code, e.to_string())
    })?;
    let host: IpAddr = std::env::var(BIND_ENV)
        .unwrap_or_else(|_| "127.0.0.1".into())
        .parse()
        .map_err(|e| CliError::new("invalid_argument", format!("{BIND_ENV}: {e}")))?;
    let addr = SocketAddr::new(host, port);
    let state = AppState::new(bundle, ServiceConfig { sync_replicate_cap: sync_cap, ..ServiceConfig::default() });
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().or_code("internal")?;
    eprintln!("{}", json!({ "listening": addr.to_string(), "bundle_checksum": state.bundle().checksum() }));
    rt.block_on(taxfund_service::serve(state, addr)).or_code("io")?;
    Ok(json!({ "stage": "serve", "stopped": true }))
}
