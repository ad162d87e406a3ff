use crate::error::{Error, Result};
use crate::mvae::wasserstein::wasserstein2;
use crate::mvae::{LatentDistribution, WassersteinMode};
use crate::numcore::Matrix;

/// Weights of the reconstruction, Wasserstein and KL terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, gamma: f64, beta: f64) -> Result<Self> {
        for (k, v) in [("alpha", alpha), ("gamma", gamma), ("beta", beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{k} must be finite and non-negative, got {v}")));
            }
        }
        Ok(LossWeights { alpha, gamma, beta })
    }
}

/// Loss of one batch, split into the terms reported in the metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub wass: f64,
}

impl LossComponents {
    /// `alpha * recon + gamma * wass + beta * kl`. The Wasserstein term is
    /// left out entirely when `gamma` is zero.
    pub fn combine(weights: &LossWeights, recon: f64, kl: f64, wass: f64) -> Self {
        let mut total = weights.alpha * recon + weights.beta * kl;
        if weights.gamma != 0.0 {
            total += weights.gamma * wass;
        }
        LossComponents {
            total,
            recon,
            kl,
            wass,
        }
    }
}

/// Row-wise concatenation `[x, sem]`, image block first.
pub fn build_combined(x: &Matrix, sem: &Matrix) -> Result<Matrix> {
    if x.rows() != sem.rows() {
        return Err(Error::shape(
            "build_combined",
            format!("image batch {}", x.shape_str()),
            format!("semantic batch {}", sem.shape_str()),
        ));
    }
    x.hconcat(sem)
}

/// Inverse of [`build_combined`] for an image block of width `d_img`.
pub fn split_combined(combined: &Matrix, d_img: usize) -> Result<(Matrix, Matrix)> {
    combined.split_cols(d_img)
}

/// Mean absolute error over every entry of the batch.
pub fn reconstruction_loss(original: &Matrix, reconstructed: &Matrix) -> Result<f64> {
    if original.shape() != reconstructed.shape() {
        return Err(Error::shape(
            "reconstruction_loss",
            original.shape_str(),
            reconstructed.shape_str(),
        ));
    }
    if original.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = original
        .as_slice()
        .iter()
        .zip(reconstructed.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / original.len() as f64)
}

/// Gradient of [`reconstruction_loss`] with respect to `reconstructed`; the
/// gradient with respect to `original` is its negation. Zero at ties.
pub fn reconstruction_grad(original: &Matrix, reconstructed: &Matrix) -> Result<Matrix> {
    let n = original.len().max(1) as f64;
    reconstructed.zip_map(original, |r, o| {
        if r > o {
            1.0 / n
        } else if r < o {
            -1.0 / n
        } else {
            0.0
        }
    })
}

/// KL from the diagonal Gaussian posterior to `N(0, I)`, summed over latent
/// dimensions and averaged over the batch.
pub fn kl_divergence(dist: &LatentDistribution) -> f64 {
    let b = dist.mu.rows().max(1) as f64;
    let s: f64 = dist
        .mu
        .as_slice()
        .iter()
        .zip(dist.logvar.as_slice())
        .map(|(&m, &lv)| 1.0 + lv - m * m - lv.exp())
        .sum();
    -0.5 * s / b
}

/// `(d KL / d mu, d KL / d logvar)`.
pub fn kl_grads(dist: &LatentDistribution) -> (Matrix, Matrix) {
    let b = dist.mu.rows().max(1) as f64;
    (
        dist.mu.scaled(1.0 / b),
        dist.logvar.map(|lv| 0.5 * (lv.exp() - 1.0) / b),
    )
}

/// Combined objective for one batch given the model outputs.
///
/// `original` is the combined input `[x, sem]`, `reconstructed` the decoder
/// output, and `x_batch`/`sem_batch` the two modalities the Wasserstein term
/// compares.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    original: &Matrix,
    reconstructed: &Matrix,
    dist: &LatentDistribution,
    weights: &LossWeights,
    x_batch: &Matrix,
    sem_batch: &Matrix,
    mode: WassersteinMode,
) -> Result<LossComponents> {
    let recon = reconstruction_loss(original, reconstructed)?;
    let kl = kl_divergence(dist);
    let wass = if weights.gamma != 0.0 {
        wasserstein2(x_batch, sem_batch, mode)?
    } else {
        0.0
    };
    Ok(LossComponents::combine(weights, recon, kl, wass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::SeededRng;
    use proptest::prelude::*;

    fn dist(mu: &[f64], logvar: &[f64]) -> LatentDistribution {
        LatentDistribution::new(Matrix::row_vector(mu), Matrix::row_vector(logvar)).unwrap()
    }

    #[test]
    fn combined_examples() {
        let c = build_combined(&Matrix::row_vector(&[1.0, 2.0]), &Matrix::row_vector(&[3.0])).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 2.0, 3.0]);
        let x = SeededRng::new(1).gaussian_matrix(3, 4);
        let c = build_combined(&x, &Matrix::zeros(3, 2)).unwrap();
        let (xb, sb) = split_combined(&c, 4).unwrap();
        assert_eq!(xb, x);
        assert_eq!(sb.max_abs(), 0.0);
        assert!(build_combined(&x, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn reconstruction_examples() {
        let a = Matrix::row_vector(&[1.0, 2.0]);
        assert_eq!(reconstruction_loss(&a, &a).unwrap(), 0.0);
        let b = Matrix::row_vector(&[0.0, 4.0]);
        assert_eq!(reconstruction_loss(&a, &b).unwrap(), 1.5);
        assert!(reconstruction_loss(&a, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&dist(&[0.0], &[0.0])), 0.0);
        assert_eq!(kl_divergence(&dist(&[1.0], &[0.0])), 0.5);
        assert_eq!(kl_divergence(&dist(&[1.0, 1.0], &[0.0, 0.0])), 1.0);
    }

    #[test]
    fn weighted_total_examples() {
        let mut rng = SeededRng::new(17);
        let x = rng.gaussian_matrix(4, 3);
        let sem = rng.gaussian_matrix(4, 2);
        let orig = build_combined(&x, &sem).unwrap();
        let recon = rng.gaussian_matrix(4, 5);
        let d = LatentDistribution::new(rng.gaussian_matrix(4, 2), rng.gaussian_matrix(4, 2)).unwrap();
        let mode = WassersteinMode::Quantile1d;

        let w = LossWeights::new(2.0, 0.0, 0.0).unwrap();
        let c = total_loss(&orig, &recon, &d, &w, &x, &sem, mode).unwrap();
        assert_eq!(c.total, 2.0 * c.recon);

        let zero = LossWeights::new(0.0, 0.0, 0.0).unwrap();
        assert_eq!(total_loss(&orig, &recon, &d, &zero, &x, &sem, mode).unwrap().total, 0.0);

        let w = LossWeights::new(2.0, 3.0, 1.0).unwrap();
        let c = total_loss(&orig, &recon, &d, &w, &x, &sem, mode).unwrap();
        let r = reconstruction_loss(&orig, &recon).unwrap();
        let k = kl_divergence(&d);
        let ws = wasserstein2(&x, &sem, mode).unwrap();
        assert!((c.total - (2.0 * r + 3.0 * ws + k)).abs() < 1e-12);
    }

    #[test]
    fn zero_gamma_total_ignores_mode() {
        let mut rng = SeededRng::new(2);
        let x = rng.gaussian_matrix(4, 3);
        let sem = rng.gaussian_matrix(4, 2);
        let orig = build_combined(&x, &sem).unwrap();
        let recon = rng.gaussian_matrix(4, 5);
        let d = LatentDistribution::new(rng.gaussian_matrix(4, 2), Matrix::zeros(4, 2)).unwrap();
        let w = LossWeights::new(1.0, 0.0, 1.0).unwrap();
        // gaussian-diag would reject the unequal widths if it were evaluated
        let a = total_loss(&orig, &recon, &d, &w, &x, &sem, WassersteinMode::Quantile1d).unwrap();
        let b = total_loss(&orig, &recon, &d, &w, &x, &sem, WassersteinMode::GaussianDiag).unwrap();
        assert_eq!(a.total.to_bits(), b.total.to_bits());
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(mu in -5.0f64..5.0, lv in -8.0f64..8.0, mu2 in -5.0f64..5.0, lv2 in -8.0f64..8.0) {
            prop_assert!(kl_divergence(&dist(&[mu, mu2], &[lv, lv2])) >= 0.0);
        }

        #[test]
        fn mae_is_symmetric_and_non_negative(seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed);
            let a = rng.gaussian_matrix(3, 4);
            let b = rng.gaussian_matrix(3, 4);
            let ab = reconstruction_loss(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, reconstruction_loss(&b, &a).unwrap());
        }
    }
}
