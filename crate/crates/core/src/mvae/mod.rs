//! The multimodal VAE: combined-embedding encoder/decoder, losses, training.

pub mod checkpoint;
mod gradprobe;
mod loss;
mod model;
mod train;
pub mod wasserstein;

pub use crate::dataio::{Variant, WassersteinMode};
pub use loss::{
    build_combined, kl_divergence, kl_grads, reconstruction_grad, reconstruction_loss,
    split_combined, total_loss, LossComponents, LossWeights,
};
pub use model::{reparameterize, InputMask, LatentDistribution, MvaeModel, VaePair, LOGVAR_CLAMP, PAIR_BLOCKS};
pub use gradprobe::{check_model_gradients, LossProbe};
pub use train::{dataset_loss, train_model, Trainer};
pub use wasserstein::{wasserstein2, wasserstein2_with_grad, WassersteinGrad, QUANTILE_GRID};
