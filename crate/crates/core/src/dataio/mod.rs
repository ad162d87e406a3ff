//! Dataset, configuration and metrics files.

mod config;
mod dataset;
pub mod format;
mod metrics;
mod synth;

pub use config::{
    parse_config, parse_config_over, parse_config_str, ClassifierSpace, ModelConfig, Variant,
    WassersteinMode,
};
pub use dataset::{
    default_splits, load_gzsl_dataset, write_gzsl_dataset, FeatureDataset, Splits,
    ATTRIBUTES_FILE, FEATURES_FILE, LABELS_FILE, NOVEL_FILE, SEEN_FILE, TEST_NOVEL_INDEX_FILE,
    TEST_SEEN_INDEX_FILE, TRAIN_INDEX_FILE,
};
pub use format::{load_feature_matrix, load_labels, write_feature_matrix, write_labels};
pub use metrics::{append_metrics, read_metrics, write_metrics, MetricsRow, METRICS_HEADER};
pub use synth::{generate_synthetic, SyntheticSpec, SEMANTIC_FACTORS};
