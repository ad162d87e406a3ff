use std::collections::BTreeMap;

use mvae_core::dataio::{
    generate_synthetic, load_gzsl_dataset, parse_config, write_gzsl_dataset, FEATURES_FILE,
};
use mvae_core::gzsl::{build_classifier_set, fit_and_evaluate, train_classifier, ClassifierParams};
use mvae_core::mvae::{train_model, Trainer};
use mvae_core::{Error, FeatureDataset, ModelConfig, MvaeModel, SeededRng, SyntheticSpec};

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        seen: 5,
        novel: 2,
        per_class: 20,
        d_img: 12,
        d_attr: 6,
        ..SyntheticSpec::default()
    }
}

fn small_config() -> ModelConfig {
    ModelConfig {
        d_img: 12,
        embed_hidden: 16,
        d_attr_embed: 8,
        vae_hidden: 24,
        latent: 4,
        batch: 16,
        epochs: 5,
        beta: 0.01,
        n_syn_per_novel: 20,
        classifier_hidden1: 16,
        classifier_hidden2: 8,
        classifier_epochs: 5,
        ..ModelConfig::default()
    }
}

/// Nearest prototype where each prototype is the mean of the class's
/// `train_seen` samples; test_seen accuracy per class.
fn seen_prototype_accuracy(ds: &FeatureDataset) -> f64 {
    let f = ds.features();
    let mut sums: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
    for &i in &ds.splits().train_seen {
        let e = sums
            .entry(ds.labels()[i])
            .or_insert_with(|| (vec![0.0; f.cols()], 0));
        for (s, v) in e.0.iter_mut().zip(f.row(i)) {
            *s += v;
        }
        e.1 += 1;
    }
    let protos: Vec<(u32, Vec<f64>)> = sums
        .into_iter()
        .map(|(c, (s, n))| (c, s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    let mut hits: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for &i in &ds.splits().test_seen {
        let row = f.row(i);
        let best = protos
            .iter()
            .min_by(|a, b| {
                let da: f64 = a.1.iter().zip(row).map(|(p, x)| (p - x) * (p - x)).sum();
                let db: f64 = b.1.iter().zip(row).map(|(p, x)| (p - x) * (p - x)).sum();
                da.total_cmp(&db)
            })
            .unwrap()
            .0;
        let e = hits.entry(ds.labels()[i]).or_default();
        e.1 += 1;
        if best == ds.labels()[i] {
            e.0 += 1;
        }
    }
    hits.values().map(|&(h, n)| h as f64 / n as f64).sum::<f64>() / hits.len() as f64
}

#[test]
fn synthetic_seen_classes_are_prototype_separable() {
    let ds = generate_synthetic(&SyntheticSpec::default()).unwrap();
    assert!(seen_prototype_accuracy(&ds) >= 0.95);
}

#[test]
fn dataset_survives_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic(&small_spec()).unwrap();
    write_gzsl_dataset(dir.path(), &ds).unwrap();
    assert_eq!(load_gzsl_dataset(dir.path()).unwrap(), ds);
}

#[test]
fn identical_specs_write_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_gzsl_dataset(a.path(), &generate_synthetic(&small_spec()).unwrap()).unwrap();
    write_gzsl_dataset(b.path(), &generate_synthetic(&small_spec()).unwrap()).unwrap();
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn corrupt_dataset_never_loads() {
    let dir = tempfile::tempdir().unwrap();
    write_gzsl_dataset(dir.path(), &generate_synthetic(&small_spec()).unwrap()).unwrap();
    let p = dir.path().join(FEATURES_FILE);
    let mut bytes = std::fs::read(&p).unwrap();
    bytes.truncate(bytes.len() - 1);
    std::fs::write(&p, bytes).unwrap();
    let err = load_gzsl_dataset(dir.path()).unwrap_err();
    assert!(err.is_data_error(), "{err}");
}

#[test]
fn committed_benchmark_config_matches_preset() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/synthetic_benchmark.conf");
    assert_eq!(parse_config(path).unwrap(), ModelConfig::synthetic_benchmark());
}

#[test]
fn reconstruction_descends_without_regularizers() {
    let ds = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let cfg = ModelConfig {
        gamma: 0.0,
        beta: 0.0,
        epochs: 100,
        ..ModelConfig::synthetic_benchmark()
    };
    let (_, history) = train_model(&cfg, &ds, |_, _| {}).unwrap();
    let recon: Vec<f64> = history.iter().map(|c| c.recon).collect();
    for w in recon.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "transient rise above 5%: {} -> {}", w[0], w[1]);
    }
    for w in recon.windows(21) {
        assert!(w[20] <= w[0] * 1.05, "rise over a 20-epoch window: {} -> {}", w[0], w[20]);
    }
    assert!(recon[99] < 0.5 * recon[0]);
}

#[test]
fn classifier_pipeline_is_pure() {
    let ds = generate_synthetic(&small_spec()).unwrap();
    let (model, _) = train_model(&small_config(), &ds, |_, _| {}).unwrap();
    let (c1, m1) = fit_and_evaluate(&model, &ds).unwrap();
    let (c2, m2) = fit_and_evaluate(&model, &ds).unwrap();
    assert_eq!(c1, c2);
    assert_eq!(m1, m2);
    let reseeded = MvaeModel::from_blocks(
        &ModelConfig {
            seed: 7,
            ..model.config().clone()
        },
        model.params().into_iter().cloned().collect(),
    )
    .unwrap();
    assert_ne!(fit_and_evaluate(&reseeded, &ds).unwrap().0, c1);
}

#[test]
fn predictions_range_over_the_union_label_space() {
    let ds = generate_synthetic(&small_spec()).unwrap();
    let (model, _) = train_model(&small_config(), &ds, |_, _| {}).unwrap();
    let set = build_classifier_set(&model, &ds, &mut SeededRng::new(1)).unwrap();
    let clf = train_classifier(
        &set,
        &ClassifierParams::from_config(model.config()),
        &mut SeededRng::new(2),
    )
    .unwrap();
    assert_eq!(clf.label_space(), ds.label_space().as_slice());
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let ds = generate_synthetic(&small_spec()).unwrap();
    let cfg = small_config();
    let (straight, _) = train_model(&cfg, &ds, |_, _| {}).unwrap();
    let mut t = Trainer::new(MvaeModel::new(&cfg, ds.d_attr()).unwrap());
    t.fit(&ds, 2, |_, _| {}).unwrap();
    t.fit(&ds, 3, |_, _| {}).unwrap();
    assert_eq!(t.epochs_done(), 5);
    assert_eq!(t.model(), &straight);
}

#[test]
fn model_for_other_dataset_is_rejected() {
    let ds = generate_synthetic(&small_spec()).unwrap();
    let model = MvaeModel::new(&ModelConfig { d_img: 13, ..small_config() }, ds.d_attr()).unwrap();
    let err = fit_and_evaluate(&model, &ds).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)), "{err}");
}
