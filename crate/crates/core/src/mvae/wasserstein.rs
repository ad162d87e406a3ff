//! Wasserstein-2 distance between the image and semantic modalities.
//!
//! The two batches generally have different widths, so the default mode
//! treats every entry of a batch as one draw from a scalar distribution and
//! compares the two pooled distributions through their quantile functions.
//! When the widths agree, `gaussian-diag` fits an axis-aligned Gaussian to
//! each batch and uses the closed form.

use crate::error::{Error, Result};
use crate::mvae::WassersteinMode;
use crate::numcore::Matrix;

/// Number of probability levels the quantile functions are compared on.
pub const QUANTILE_GRID: usize = 512;

/// Distance value and its gradients with respect to both batches.
#[derive(Debug, Clone)]
pub struct WassersteinGrad {
    pub value: f64,
    pub grad_a: Matrix,
    pub grad_b: Matrix,
}

pub fn wasserstein2(a: &Matrix, b: &Matrix, mode: WassersteinMode) -> Result<f64> {
    Ok(wasserstein2_with_grad(a, b, mode)?.value)
}

pub fn wasserstein2_with_grad(
    a: &Matrix,
    b: &Matrix,
    mode: WassersteinMode,
) -> Result<WassersteinGrad> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain(format!(
            "wasserstein2 needs non-empty batches, got {} and {}",
            a.shape_str(),
            b.shape_str()
        )));
    }
    match mode {
        WassersteinMode::Quantile1d => Ok(quantile_1d(a, b)),
        WassersteinMode::GaussianDiag => gaussian_diag(a, b),
    }
}

/// Sorted view of a pooled sample: values ascending, ties in index order.
struct SortedSample {
    order: Vec<usize>,
    values: Vec<f64>,
}

impl SortedSample {
    fn new(data: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.sort_by(|&i, &j| data[i].total_cmp(&data[j]));
        let values = order.iter().map(|&i| data[i]).collect();
        SortedSample { order, values }
    }
}

/// Position of probability level `p` among `n` order statistics, placing
/// the `i`-th statistic at level `(i + 0.5) / n` and interpolating linearly
/// between neighbours. Returns `(lower index, weight of upper)`.
fn quantile_position(p: f64, n: usize) -> (usize, f64) {
    let t = p * n as f64 - 0.5;
    if t <= 0.0 || n == 1 {
        return (0, 0.0);
    }
    if t >= (n - 1) as f64 {
        return (n - 1, 0.0);
    }
    let i = t.floor() as usize;
    (i, t - i as f64)
}

fn quantile_at(s: &SortedSample, pos: (usize, f64)) -> f64 {
    let (i, f) = pos;
    if f == 0.0 {
        s.values[i]
    } else {
        (1.0 - f) * s.values[i] + f * s.values[i + 1]
    }
}

fn scatter(s: &SortedSample, pos: (usize, f64), g: f64, out: &mut [f64]) {
    let (i, f) = pos;
    out[s.order[i]] += (1.0 - f) * g;
    if f != 0.0 {
        out[s.order[i + 1]] += f * g;
    }
}

fn quantile_1d(a: &Matrix, b: &Matrix) -> WassersteinGrad {
    let sa = SortedSample::new(a.as_slice());
    let sb = SortedSample::new(b.as_slice());
    let k = QUANTILE_GRID;
    let mut diffs = Vec::with_capacity(k);
    let mut positions = Vec::with_capacity(k);
    for j in 0..k {
        let p = (j as f64 + 0.5) / k as f64;
        let pa = quantile_position(p, a.len());
        let pb = quantile_position(p, b.len());
        diffs.push(quantile_at(&sa, pa) - quantile_at(&sb, pb));
        positions.push((pa, pb));
    }
    let value = (diffs.iter().map(|d| d * d).sum::<f64>() / k as f64).sqrt();
    let mut ga = vec![0.0; a.len()];
    let mut gb = vec![0.0; b.len()];
    if value > 0.0 {
        for (d, (pa, pb)) in diffs.iter().zip(positions) {
            let g = d / (k as f64 * value);
            scatter(&sa, pa, g, &mut ga);
            scatter(&sb, pb, -g, &mut gb);
        }
    }
    WassersteinGrad {
        value,
        grad_a: Matrix::new(a.rows(), a.cols(), ga).expect("same shape"),
        grad_b: Matrix::new(b.rows(), b.cols(), gb).expect("same shape"),
    }
}

/// Per-column mean and population standard deviation.
fn column_moments(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mean: Vec<f64> = m.sum_rows().as_slice().iter().map(|s| s / n).collect();
    let mut var = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            var[j] += (v - mean[j]).powi(2);
        }
    }
    (mean, var.into_iter().map(|v| (v / n).sqrt()).collect())
}

fn gaussian_diag(a: &Matrix, b: &Matrix) -> Result<WassersteinGrad> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "gaussian-diag Wasserstein needs equal widths, got {} and {}; \
             use the aligned preset (d_attr_embed = d_img) or quantile-1d",
            a.cols(),
            b.cols()
        )));
    }
    let (mu_a, sd_a) = column_moments(a);
    let (mu_b, sd_b) = column_moments(b);
    let value = mu_a
        .iter()
        .zip(&mu_b)
        .zip(sd_a.iter().zip(&sd_b))
        .map(|((ma, mb), (sa, sb))| (ma - mb).powi(2) + (sa - sb).powi(2))
        .sum::<f64>()
        .sqrt();
    let grad = |m: &Matrix, mu: &[f64], sd: &[f64], sign: f64| -> Matrix {
        let n = m.rows() as f64;
        Matrix::from_fn(m.rows(), m.cols(), |i, j| {
            if value == 0.0 {
                return 0.0;
            }
            let dmu = sign * (mu_a[j] - mu_b[j]) / value;
            let dsd = sign * (sd_a[j] - sd_b[j]) / value;
            let mut g = dmu / n;
            if sd[j] > 0.0 {
                g += dsd * (m.get(i, j) - mu[j]) / (n * sd[j]);
            }
            g
        })
    };
    Ok(WassersteinGrad {
        value,
        grad_a: grad(a, &mu_a, &sd_a, 1.0),
        grad_b: grad(b, &mu_b, &sd_b, -1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{relative_error, SeededRng, FD_STEP};
    use proptest::prelude::*;

    const MODES: [WassersteinMode; 2] = [WassersteinMode::Quantile1d, WassersteinMode::GaussianDiag];

    #[test]
    fn identical_batches_are_at_distance_zero() {
        let a = SeededRng::new(1).gaussian_matrix(6, 3);
        for mode in MODES {
            assert_eq!(wasserstein2(&a, &a, mode).unwrap(), 0.0);
        }
    }

    #[test]
    fn translation_gives_shift() {
        let a = SeededRng::new(2).gaussian_matrix(40, 1);
        let b = a.map(|v| v + 0.75);
        for mode in MODES {
            let w = wasserstein2(&a, &b, mode).unwrap();
            assert!((w - 0.75).abs() < 1e-12, "{mode}: {w}");
        }
    }

    #[test]
    fn quantile_grid_equals_order_statistics_when_sizes_match() {
        let mut rng = SeededRng::new(3);
        let a = rng.gaussian_matrix(QUANTILE_GRID, 1);
        let b = rng.gaussian_matrix(QUANTILE_GRID, 1).map(|v| 2.0 * v + 1.0);
        let mut sa = a.clone().into_vec();
        let mut sb = b.clone().into_vec();
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        let brute = (sa.iter().zip(&sb).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
            / sa.len() as f64)
            .sqrt();
        let w = wasserstein2(&a, &b, WassersteinMode::Quantile1d).unwrap();
        assert!((w - brute).abs() < 1e-12);
    }

    #[test]
    fn unequal_widths_rejected_in_gaussian_mode() {
        let err = wasserstein2(&Matrix::zeros(3, 4), &Matrix::zeros(3, 2), WassersteinMode::GaussianDiag)
            .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        assert!(err.to_string().contains("aligned"));
        // pooled mode does not care
        assert!(wasserstein2(&Matrix::zeros(3, 4), &Matrix::zeros(3, 2), WassersteinMode::Quantile1d).is_ok());
    }

    fn check_grads(a: &Matrix, b: &Matrix, mode: WassersteinMode) {
        let g = wasserstein2_with_grad(a, b, mode).unwrap();
        for (which, base, grad) in [(0, a, &g.grad_a), (1, b, &g.grad_b)] {
            for i in 0..base.len() {
                let bump = |d: f64| {
                    let mut m = base.clone();
                    m.as_mut_slice()[i] += d;
                    if which == 0 {
                        wasserstein2(&m, b, mode).unwrap()
                    } else {
                        wasserstein2(a, &m, mode).unwrap()
                    }
                };
                let numeric = (bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP);
                let err = relative_error(grad.as_slice()[i], numeric);
                assert!(err < 1e-4, "{mode} batch {which} entry {i}: {err}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SeededRng::new(9);
        let a = rng.gaussian_matrix(5, 3);
        let b = rng.gaussian_matrix(5, 3).map(|v| 0.5 * v + 0.3);
        check_grads(&a, &b, WassersteinMode::GaussianDiag);
        let c = rng.gaussian_matrix(4, 2).map(|v| v.abs() + 0.2);
        check_grads(&a, &c, WassersteinMode::Quantile1d);
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(seed in 0u64..300, rows in 2usize..12) {
            let mut rng = SeededRng::new(seed);
            let a = rng.gaussian_matrix(rows, 3);
            let b = rng.gaussian_matrix(rows + 1, 3).map(|v| v * 1.5);
            for mode in MODES {
                let ab = wasserstein2(&a, &b, mode).unwrap();
                let ba = wasserstein2(&b, &a, mode).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
            }
        }
    }
}
