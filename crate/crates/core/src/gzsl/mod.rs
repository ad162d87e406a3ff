//! Generalized zero-shot evaluation: classifier training on real seen and
//! synthesized novel features, per-class accuracy and the harmonic mean.

mod classifier;
mod metrics;
mod protocol;

pub use classifier::{train_classifier, ClassifierParams, ClassifierSet, MlpClassifier};
pub use metrics::{harmonic_mean, mean_class_accuracy, per_class_accuracy, GzslMetrics};
pub use protocol::{
    build_classifier_set, evaluate_gzsl, fit_and_evaluate, image_features, run_ablation, run_variant,
};
