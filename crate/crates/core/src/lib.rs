//! Multimodal variational auto-encoder for generalized zero-shot learning.
//!
//! Image features and a learned semantic embedding of class attributes are
//! concatenated into one vector, passed through a single encoder–decoder VAE,
//! and trained with a reconstruction loss plus a Wasserstein term between the
//! two modalities. Reconstructions (or latent codes) of seen-class samples and
//! of synthesized novel-class samples then train an MLP classifier that is
//! scored over the union of seen and novel classes.
//!
//! Everything runs on the small dense core in [`numcore`]; there is no
//! autodiff graph, each network carries its own backward pass.

pub mod dataio;
pub mod embednet;
mod error;
pub mod gzsl;
pub mod mvae;
pub mod numcore;

pub use dataio::{FeatureDataset, ModelConfig, SyntheticSpec};
pub use embednet::DeepEmbeddingNet;
pub use error::{Error, Result};
pub use gzsl::{harmonic_mean, GzslMetrics, MlpClassifier};
pub use mvae::{LatentDistribution, LossWeights, MvaeModel, Variant, WassersteinMode};
pub use numcore::{AffineLayer, Matrix, SeededRng};
