use proptest::prelude::*;
use taxfund_core::data::synth::{generate_synthetic, GenConfig};
use taxfund_core::data::{load_dataset, validate_dataset, write_dataset, DatasetPaths, Neighborhood, ValidationRules};

fn small(seed: u64) -> taxfund_core::data::Dataset {
    let cfg = GenConfig {
        training_parcels: 15,
        program_parcels: vec![(Neighborhood::VineCity, 10), (Neighborhood::WashingtonPark, 8)],
        cex_records: 12,
        ..GenConfig::default()
    };
    generate_synthetic(seed, &cfg).dataset
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn write_then_load_is_identity(
        seed in any::<u64>(),
        acres in prop::collection::vec(0.0f64..1e6, 1..5),
        rent in 300.0f64..1e5,
    ) {
        let mut d = small(seed);
        for (p, a) in d.parcels.iter_mut().zip(&acres) {
            p.land_acres = *a;
            p.distance_to_beltline = a.sqrt();
        }
        if let Some(r) = d.rents.first_mut() {
            r.monthly_rent_low = rent;
        }
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::in_dir(dir.path());
        write_dataset(&d, &paths).unwrap();
        let back = load_dataset(&paths).unwrap();
        prop_assert!(back.warnings.is_empty());
        prop_assert_eq!(back.dataset, d);
    }

    #[test]
    fn validation_counts_ignore_record_order(seed in any::<u64>(), rot in 0usize..20) {
        let mut d = small(seed);
        d.parcels[0].bedrooms = d.parcels[0].rooms + 1;
        let rules = ValidationRules::default();
        let before = validate_dataset(&d, &rules);
        let n = d.parcels.len();
        d.parcels.rotate_left(rot % n);
        d.assessments.reverse();
        d.cex.reverse();
        let after = validate_dataset(&d, &rules);
        prop_assert_eq!(before.errors.len(), after.errors.len());
        prop_assert_eq!(before.warnings.len(), after.warnings.len());
        prop_assert!(!after.accepted());
    }
}
