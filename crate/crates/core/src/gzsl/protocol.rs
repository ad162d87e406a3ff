//! Classifier-set construction, evaluation and the three-variant ablation.

use std::path::Path;

use crate::dataio::{write_metrics, ClassifierSpace, FeatureDataset, ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::gzsl::classifier::{train_classifier, ClassifierParams, ClassifierSet, MlpClassifier};
use crate::gzsl::metrics::{per_class_accuracy, GzslMetrics};
use crate::mvae::{reparameterize, train_model, LatentDistribution, MvaeModel};
use crate::numcore::{Matrix, SeededRng, Stream};

impl ClassifierParams {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        ClassifierParams {
            hidden1: cfg.classifier_hidden1,
            hidden2: cfg.classifier_hidden2,
            epochs: cfg.classifier_epochs,
            batch: cfg.batch,
            lr: cfg.classifier_lr,
        }
    }
}

fn check_dims(model: &MvaeModel, ds: &FeatureDataset) -> Result<()> {
    if ds.d_img() != model.d_img() || ds.d_attr() != model.d_attr() {
        return Err(Error::Dimension(format!(
            "model expects d_img={} d_attr={}, dataset has d_img={} d_attr={}",
            model.d_img(),
            model.d_attr(),
            ds.d_img(),
            ds.d_attr()
        )));
    }
    Ok(())
}

fn to_space(model: &MvaeModel, z: &Matrix) -> Result<Matrix> {
    match model.config().classifier_space {
        ClassifierSpace::Reconstruction => model.decode(z),
        ClassifierSpace::Latent => Ok(z.clone()),
    }
}

/// Classifier features of real images: the posterior mean from the image
/// modality, mapped into the configured space.
pub fn image_features(model: &MvaeModel, x: &Matrix) -> Result<Matrix> {
    let dist = model.latent_from_image(x)?;
    to_space(model, &dist.mu)
}

/// Training rows for the classifier: encoded seen training images plus
/// `n_syn_per_novel` samples per novel class drawn from the semantic
/// posterior with noise from `rng`.
pub fn build_classifier_set(model: &MvaeModel, ds: &FeatureDataset, rng: &mut SeededRng) -> Result<ClassifierSet> {
    check_dims(model, ds)?;
    let cfg = model.config();
    let train = &ds.splits().train_seen;
    let x = ds.features().select_rows(train)?;
    let seen_labels = ds.labels_at(train);
    let seen_rows = if cfg.classifier_seen_unmasked {
        let sem = model.semantic_for_labels(ds.attributes(), &seen_labels)?;
        to_space(model, &model.latent_from_both(&x, &sem)?.mu)?
    } else {
        image_features(model, &x)?
    };
    let mut blocks = vec![seen_rows];
    let mut labels = seen_labels;
    let n = cfg.n_syn_per_novel;
    if n > 0 {
        for &c in ds.novel_classes() {
            let sem = model.semantic_for_labels(ds.attributes(), &vec![c; n])?;
            let dist: LatentDistribution = model.latent_from_semantic(&sem)?;
            let z = reparameterize(&dist, &rng.gaussian_matrix(n, model.latent_dim()))?;
            blocks.push(to_space(model, &z)?);
            labels.extend(std::iter::repeat_n(c, n));
        }
    }
    ClassifierSet::new(Matrix::vstack(&blocks)?, labels)
}

/// Per-class accuracy over the test splits with S, N and H.
pub fn evaluate_gzsl(model: &MvaeModel, clf: &MlpClassifier, ds: &FeatureDataset) -> Result<GzslMetrics> {
    check_dims(model, ds)?;
    let s = ds.splits();
    if s.test_seen.is_empty() || s.test_novel.is_empty() {
        return Err(Error::Validation(format!(
            "test splits must be non-empty (test_seen={}, test_novel={})",
            s.test_seen.len(),
            s.test_novel.len()
        )));
    }
    let idx: Vec<usize> = s.test_seen.iter().chain(&s.test_novel).copied().collect();
    let feats = image_features(model, &ds.features().select_rows(&idx)?)?;
    let pred = clf.classify(&feats)?;
    let truth = ds.labels_at(&idx);
    let mut m = GzslMetrics::from_per_class(
        per_class_accuracy(&truth, &pred),
        ds.seen_classes(),
        ds.novel_classes(),
    )?;
    m.variant = model.variant().to_string();
    Ok(m)
}

/// Builds the classifier set, fits the classifier and evaluates it. Both
/// random draws come from the config seed.
pub fn fit_and_evaluate(model: &MvaeModel, ds: &FeatureDataset) -> Result<(MlpClassifier, GzslMetrics)> {
    let seed = model.config().seed;
    let set = build_classifier_set(model, ds, &mut SeededRng::for_stream(seed, Stream::Synthesis))?;
    let clf = train_classifier(
        &set,
        &ClassifierParams::from_config(model.config()),
        &mut SeededRng::for_stream(seed, Stream::Classifier),
    )?;
    let m = evaluate_gzsl(model, &clf, ds)?;
    Ok((clf, m))
}

/// Trains and evaluates one variant end to end.
pub fn run_variant(config: &ModelConfig, ds: &FeatureDataset, run_id: &str) -> Result<GzslMetrics> {
    let (model, history) = train_model(config, ds, |_, _| {})?;
    let (_, mut m) = fit_and_evaluate(&model, ds)?;
    m.run_id = run_id.to_owned();
    m.epoch = history.len();
    m.losses = history.last().copied().unwrap_or_default();
    Ok(m)
}

/// Trains mvae, baseline1 and baseline2 from the same config and seed and
/// writes one final row per variant, in that order, to `out`.
pub fn run_ablation(
    config: &ModelConfig,
    ds: &FeatureDataset,
    run_id: &str,
    out: impl AsRef<Path>,
) -> Result<Vec<GzslMetrics>> {
    config.validate()?;
    let results: Vec<Result<GzslMetrics>> = std::thread::scope(|s| {
        let handles: Vec<_> = Variant::ALL
            .iter()
            .map(|&v| {
                let cfg = ModelConfig {
                    variant: v,
                    ..config.clone()
                };
                s.spawn(move || run_variant(&cfg, ds, run_id))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ablation worker panicked"))
            .collect()
    });
    let metrics = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = metrics.iter().map(GzslMetrics::to_row).collect();
    write_metrics(out, &rows)?;
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, Splits, SyntheticSpec};

    fn setup() -> (ModelConfig, FeatureDataset) {
        let ds = generate_synthetic(&SyntheticSpec {
            seen: 4,
            novel: 2,
            per_class: 10,
            d_img: 8,
            d_attr: 5,
            ..Default::default()
        })
        .unwrap();
        let cfg = ModelConfig {
            d_img: 8,
            embed_hidden: 8,
            d_attr_embed: 6,
            vae_hidden: 12,
            latent: 3,
            batch: 8,
            epochs: 2,
            n_syn_per_novel: 7,
            classifier_hidden1: 8,
            classifier_hidden2: 6,
            classifier_epochs: 2,
            ..ModelConfig::default()
        };
        (cfg, ds)
    }

    #[test]
    fn classifier_set_layout() {
        let (cfg, ds) = setup();
        for v in Variant::ALL {
            for space in [ClassifierSpace::Reconstruction, ClassifierSpace::Latent] {
                let c = ModelConfig {
                    variant: v,
                    classifier_space: space,
                    ..cfg.clone()
                };
                let model = MvaeModel::new(&c, ds.d_attr()).unwrap();
                let set = build_classifier_set(&model, &ds, &mut SeededRng::new(1)).unwrap();
                let n_train = ds.splits().train_seen.len();
                assert_eq!(set.inputs.rows(), n_train + 2 * 7);
                let width = match space {
                    ClassifierSpace::Latent => 3,
                    ClassifierSpace::Reconstruction => 8 + 6,
                };
                assert_eq!(set.inputs.cols(), width);
                assert_eq!(&set.labels[n_train..n_train + 7], &[4; 7]);
                assert_eq!(&set.labels[n_train + 7..], &[5; 7]);
                let again = build_classifier_set(&model, &ds, &mut SeededRng::new(1)).unwrap();
                assert_eq!(set, again);
            }
        }
    }

    #[test]
    fn empty_novel_test_split_is_rejected() {
        let (cfg, ds) = setup();
        let s = ds.splits().clone();
        let ds = FeatureDataset::new(
            ds.features().clone(),
            ds.labels().to_vec(),
            ds.attributes().clone(),
            ds.seen_classes().clone(),
            ds.novel_classes().clone(),
            Some(Splits {
                test_novel: vec![],
                ..s
            }),
        )
        .unwrap();
        let model = MvaeModel::new(&cfg, ds.d_attr()).unwrap();
        let set = build_classifier_set(&model, &ds, &mut SeededRng::new(1)).unwrap();
        let clf = train_classifier(&set, &ClassifierParams::from_config(&cfg), &mut SeededRng::new(2)).unwrap();
        assert!(matches!(evaluate_gzsl(&model, &clf, &ds), Err(Error::Validation(_))));
    }

    #[test]
    fn ablation_rows_in_order() {
        let (cfg, ds) = setup();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("ablation.csv");
        let m = run_ablation(&cfg, &ds, "t", &out).unwrap();
        let names: Vec<_> = m.iter().map(|r| r.variant.as_str()).collect();
        assert_eq!(names, ["mvae", "baseline1", "baseline2"]);
        assert_eq!(m[1].losses.wass, 0.0);
        assert!(m[0].losses.wass > 0.0);
        let rows = crate::dataio::read_metrics(&out).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].epoch, 2);
    }
}
