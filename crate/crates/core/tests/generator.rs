use proptest::prelude::*;
use subvox_core::generator::{
    downsample, generate_patches, read_dataset, render_high_res, sample_model, write_dataset, GenConfig, Kind,
    Parenchyma,
};
use subvox_core::rng::{stream, Stage};
use subvox_core::ImageGrid;

#[test]
fn dataset_is_identical_across_worker_counts() {
    let cfg = GenConfig::new(Kind::Airway, 5, 3, 77);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| generate_patches(&cfg).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.patches, b.patches);
    let dir = tempfile::tempdir().unwrap();
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    std::fs::create_dir_all(&da).unwrap();
    std::fs::create_dir_all(&db).unwrap();
    write_dataset(&a, &da).unwrap();
    write_dataset(&b, &db).unwrap();
    for f in ["patches.f32", "meta.json"] {
        assert_eq!(std::fs::read(da.join(f)).unwrap(), std::fs::read(db.join(f)).unwrap());
    }
    assert_eq!(read_dataset(&da).unwrap().patches, a.patches);
}

#[test]
fn replica_groups_share_labels_and_differ_in_pixels() {
    let ds = generate_patches(&GenConfig::new(Kind::Vessel, 4, 5, 8)).unwrap();
    for g in ds.groups() {
        assert_eq!(g.len(), 5);
        assert!(g.iter().all(|p| p.targets() == g[0].targets() && p.model_id == g[0].model_id));
        assert!(g.windows(2).all(|w| w[0].pixels != w[1].pixels));
    }
}

#[test]
fn different_seeds_give_different_data() {
    let a = generate_patches(&GenConfig::new(Kind::Vessel, 2, 2, 1)).unwrap();
    let b = generate_patches(&GenConfig::new(Kind::Vessel, 2, 2, 2)).unwrap();
    assert_ne!(a.patches[0].pixels, b.patches[0].pixels);
}

#[test]
fn downsample_conserves_the_mean_of_rendered_images() {
    let mut rng = stream(5, 0, 0, Stage::Model);
    for kind in [Kind::Airway, Kind::Vessel] {
        let m = sample_model(kind, &mut rng);
        let hi = render_high_res(&m, &Parenchyma::default(), &mut rng);
        let lo = downsample(&hi, 10).unwrap();
        assert_eq!((lo.width(), lo.height()), (64, 64));
        let (a, b) = (lo.mean(), hi.mean());
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn downsample_mean_is_conserved(values in prop::collection::vec(-2000.0f64..2000.0, 40 * 40)) {
        let img = ImageGrid::new(40, 40, 0.05, values).unwrap();
        for f in [2, 4, 5, 10] {
            let lo = downsample(&img, f).unwrap();
            prop_assert!((lo.mean() - img.mean()).abs() <= 1e-9);
        }
    }

    #[test]
    fn sampled_models_are_valid(seed in any::<u64>()) {
        let mut rng = stream(seed, 0, 0, Stage::Model);
        for kind in [Kind::Airway, Kind::Vessel] {
            let m = sample_model(kind, &mut rng);
            prop_assert!(m.validate().is_ok());
            let (lumen, wall) = m.labels();
            prop_assert!(lumen > 0.0);
            prop_assert_eq!(wall.is_some(), kind == Kind::Airway);
        }
    }
}
