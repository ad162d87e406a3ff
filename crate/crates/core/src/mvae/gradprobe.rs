//! Finite-difference check of the full model loss.

use crate::dataio::ModelConfig;
use crate::error::Result;
use crate::mvae::{InputMask, MvaeModel};
use crate::numcore::{gradient_check, Differentiable, GradCheckReport, Matrix, SeededRng};

/// A model with a fixed attribute table, labels, noise and masks, viewed as
/// a function of the image batch.
#[derive(Debug, Clone)]
pub struct LossProbe {
    pub model: MvaeModel,
    pub attributes: Matrix,
    pub labels: Vec<u32>,
    pub eps: Vec<Matrix>,
    pub masks: Vec<InputMask>,
}

impl Differentiable for LossProbe {
    fn block_names(&self) -> Vec<String> {
        self.model.block_names()
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        self.model.params_mut()
    }

    fn loss(&mut self, x: &Matrix) -> Result<f64> {
        Ok(self.loss_and_grads(x)?.0)
    }

    fn loss_and_grads(&mut self, x: &Matrix) -> Result<(f64, Vec<Matrix>)> {
        let (c, g) = self.model.loss_and_grads_masked(
            x,
            &self.attributes,
            &self.labels,
            &self.eps,
            &self.masks,
        )?;
        Ok((c.total, g))
    }
}

/// Builds a model from `config` with `d_attr` attributes over `classes`
/// classes, draws a random batch of `batch` rows and fixed noise from
/// `seed`, and checks every parameter block at `tolerance`.
pub fn check_model_gradients(
    config: &ModelConfig,
    d_attr: usize,
    classes: usize,
    batch: usize,
    masks: Vec<InputMask>,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let model = MvaeModel::new(config, d_attr)?;
    let mut rng = SeededRng::new(config.seed);
    let attributes = rng.gaussian_matrix(classes, d_attr);
    let x = rng.gaussian_matrix(batch, config.d_img);
    let labels = (0..batch).map(|i| (i % classes) as u32).collect();
    let eps = (0..model.noise_blocks())
        .map(|_| rng.gaussian_matrix(batch, config.latent))
        .collect();
    let mut probe = LossProbe {
        model,
        attributes,
        labels,
        eps,
        masks,
    };
    gradient_check(&mut probe, &x, tolerance)
}
