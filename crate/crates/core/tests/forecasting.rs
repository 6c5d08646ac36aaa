use std::collections::BTreeMap;

use proptest::prelude::*;
use taxfund_core::cluster::{fit_cluster_model, ClusterConfig, ClusterModel};
use taxfund_core::data::synth::{generate_synthetic, GenConfig, Synthetic};
use taxfund_core::data::{complete_series, Neighborhood};
use taxfund_core::forecast::*;
use taxfund_core::forest::ForestParams;

struct Pipeline {
    syn: Synthetic,
    model: ClusterModel,
    classifier: ClusterClassifier,
}

fn pipeline(seed: u64, cfg: &GenConfig) -> Pipeline {
    let syn = generate_synthetic(seed, cfg);
    let model = fit_cluster_model(&complete_series(&syn.dataset), &ClusterConfig::default()).unwrap();
    let (m, labels) = training_matrix(&syn.dataset, &model, 2017).unwrap();
    let classifier = fit_cluster_classifier(&m, &labels, &ForestParams::classification(seed), 2017).unwrap();
    Pipeline { syn, model, classifier }
}

/// Latent trend that most training parcels in each found cluster came from.
fn majority_truth(p: &Pipeline) -> Vec<usize> {
    (0..p.model.k)
        .map(|c| {
            let mut counts = BTreeMap::new();
            for (id, &l) in &p.model.labels {
                if l == c {
                    *counts.entry(p.syn.truth.training_labels[id]).or_insert(0) += 1;
                }
            }
            counts.into_iter().max_by_key(|(t, n)| (*n, std::cmp::Reverse(*t))).unwrap().0
        })
        .collect()
}

#[test]
fn classifier_learns_clusters_from_house_features() {
    let p = pipeline(2024, &GenConfig::default());
    assert!(p.classifier.oob_accuracy >= 0.9, "oob {}", p.classifier.oob_accuracy);
    assert!(p.classifier.training_accuracy >= p.classifier.oob_accuracy);

    let (m, labels) = training_matrix(&p.syn.dataset, &p.model, 2017).unwrap();
    let imp = classifier_importance(&p.classifier, &m, &labels, 3, 1).unwrap();
    let top: Vec<&str> = imp.ranking().iter().take(4).map(|&i| imp.feature_names[i].as_str()).collect();
    for f in ["distance_to_beltline_m", "reference_value", "home_age"] {
        assert!(top.contains(&f), "{f} not in {top:?}");
    }

    let table = forecast_all(&p.syn.dataset, &p.model, &p.classifier, &ForecastConfig::default()).unwrap();
    let program = p.syn.dataset.parcels.iter().filter(|x| x.neighborhood.in_program_area()).count();
    assert_eq!(table.rows.len(), program);
    let to_truth = majority_truth(&p);
    let weights = &p.syn.truth.trend_weights;
    for (t, w) in weights.iter().enumerate() {
        let share = table.rows.iter().filter(|r| to_truth[r.cluster] == t).count() as f64 / program as f64;
        assert!((share - w).abs() <= 0.10, "trend {t}: share {share} vs weight {w}");
    }
    assert!(table.rows.iter().all(|r| r.projected.len() == 7 && r.projected.values().all(|v| *v > 0.0)));
}

#[test]
fn forecast_is_deterministic_and_flags_stale_and_missing_bases() {
    let mut p = pipeline(9, &GenConfig::small());
    let cfg = ForecastConfig::default();
    let a = forecast_all(&p.syn.dataset, &p.model, &p.classifier, &cfg).unwrap();
    let b = forecast_all(&p.syn.dataset, &p.model, &p.classifier, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    let header = a.to_csv_string().lines().next().unwrap().to_owned();
    assert_eq!(header, "parcel_id,cluster,method,base_value,y2018,y2019,y2020,y2021,y2022,y2023,y2024");

    for row in &a.rows {
        if row.base_year != 2017 {
            assert!(a.warnings.iter().any(|w| w.starts_with(&row.parcel_id)));
        }
    }

    let victim = a.rows[0].parcel_id.clone();
    p.syn.dataset.assessments.retain(|s| s.parcel_id != victim);
    let c = forecast_all(&p.syn.dataset, &p.model, &p.classifier, &cfg).unwrap();
    assert_eq!(c.excluded, vec![victim.clone()]);
    assert!(c.get(&victim).is_none());
}

#[test]
fn zero_trend_cluster_keeps_value_flat() {
    let mut p = pipeline(9, &GenConfig::small());
    for t in &mut p.model.trends {
        for s in &mut t.steps {
            s.mean_pct_change = 0.0;
        }
    }
    let table = forecast_all(&p.syn.dataset, &p.model, &p.classifier, &ForecastConfig::default()).unwrap();
    for r in &table.rows {
        assert!(r.projected.values().all(|v| *v == r.base_value));
    }
}

#[test]
fn legacy_method_uses_flat_rates() {
    let p = pipeline(9, &GenConfig::small());
    let cfg = ForecastConfig { method: ForecastMethod::LegacyFlat, ..Default::default() };
    let table = forecast_all(&p.syn.dataset, &p.model, &p.classifier, &cfg).unwrap();
    for r in &table.rows {
        let expected = legacy_forecast(r.base_value, &cfg.legacy, 7);
        assert_eq!(r.projected.values().copied().collect::<Vec<_>>(), expected);
    }
}

#[test]
fn memorized_parcel_keeps_its_cluster() {
    let p = pipeline(9, &GenConfig::small());
    let idx = p.syn.dataset.index();
    let mut agree = 0;
    for id in &p.model.parcel_ids {
        let parcel = idx.parcels[id.as_str()];
        let first = *idx.assessments[id.as_str()].observations.values().next().unwrap();
        let got = assign_clusters(&p.classifier, &[(parcel, first)]).unwrap();
        agree += usize::from(got[id] == p.model.labels[id]);
    }
    assert_eq!(agree as f64 / p.model.parcel_ids.len() as f64, p.classifier.training_accuracy);
    assert!(p.classifier.training_accuracy > 0.95);
}

#[test]
fn encoding_mismatch_is_detected() {
    let mut p = pipeline(9, &GenConfig::small());
    let parcel = p.syn.dataset.parcels.iter().find(|x| x.neighborhood == Neighborhood::VineCity).unwrap().clone();
    p.classifier.encoding_version += 1;
    assert!(matches!(assign_clusters(&p.classifier, &[(&parcel, 1.0)]), Err(ForecastError::EncodingVersion { .. })));
    p.classifier.encoding_version -= 1;
    p.classifier.forest.feature_names.swap(0, 1);
    assert_eq!(assign_clusters(&p.classifier, &[(&parcel, 1.0)]), Err(ForecastError::FeatureMismatch));
}

#[test]
fn single_cluster_gives_constant_classifier() {
    let syn = generate_synthetic(4, &GenConfig::small());
    let model = fit_cluster_model(&complete_series(&syn.dataset), &ClusterConfig { k: 1, ..Default::default() }).unwrap();
    let (m, labels) = training_matrix(&syn.dataset, &model, 2017).unwrap();
    let c = fit_cluster_classifier(&m, &labels, &ForestParams::classification(1).with_trees(10), 2017).unwrap();
    let targets: Vec<_> = syn.dataset.parcels.iter().map(|x| (x, 50_000.0)).collect();
    assert!(assign_clusters(&c, &targets).unwrap().values().all(|&l| l == 0));
}

#[test]
fn sparse_cluster_rejected() {
    let syn = generate_synthetic(4, &GenConfig::small());
    let model = fit_cluster_model(&complete_series(&syn.dataset), &ClusterConfig::default()).unwrap();
    let (m, labels) = training_matrix(&syn.dataset, &model, 2017).unwrap();
    let params = ForestParams { min_leaf: m.n_rows(), ..ForestParams::classification(1) };
    assert!(matches!(fit_cluster_classifier(&m, &labels, &params, 2017), Err(ForecastError::SparseCluster { .. })));
}

fn trend() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.5f64..0.5, 1..6)
}

proptest! {
    #[test]
    fn projection_scales_with_base(base in 1_000.0f64..500_000.0, c in 0.01f64..100.0, t in trend(), horizon in 1usize..12) {
        let a = project_values(base, &t, horizon).unwrap();
        let b = project_values(base * c, &t, horizon).unwrap();
        prop_assert_eq!(a.len(), horizon);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((y - c * x).abs() <= 1e-12 * y.abs());
            prop_assert!(*x > 0.0);
        }
        // Powers of two rescale exactly.
        let exact = project_values(base * 4.0, &t, horizon).unwrap();
        for (x, y) in a.iter().zip(&exact) {
            prop_assert_eq!(*y, 4.0 * x);
        }
    }

    #[test]
    fn cyclic_fill_matches_sequential_application(base in 1_000.0f64..500_000.0, t in trend(), horizon in 1usize..15) {
        let got = project_values(base, &t, horizon).unwrap();
        let mut v = base;
        for (h, g) in got.iter().enumerate() {
            v *= 1.0 + t[h % t.len()];
            prop_assert_eq!(*g, v);
        }
    }

    #[test]
    fn zero_threshold_is_pure_base_rate(base in 1.0f64..500_000.0, rate in 0.0f64..0.3, horizon in 0usize..10) {
        let cfg = LegacyAppreciationConfig { base_rate: rate, low_value_rate: 0.5, threshold: 0.0 };
        let got = legacy_forecast(base, &cfg, horizon);
        let mut v = base;
        for g in got {
            v *= 1.0 + rate;
            prop_assert_eq!(g, v);
        }
    }
}
