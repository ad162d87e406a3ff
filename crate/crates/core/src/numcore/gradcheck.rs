//! Central finite-difference verification of analytic gradients.

use std::fmt;

use crate::error::Result;
use crate::numcore::Matrix;

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely rather than relatively.
const REL_FLOOR: f64 = 1e-6;

/// A scalar loss over named parameter blocks with an analytic gradient.
///
/// `loss` must be deterministic for a fixed input: any sampling noise has to
/// be frozen by the implementor before checking.
pub trait Differentiable {
    fn block_names(&self) -> Vec<String>;
    fn blocks_mut(&mut self) -> Vec<&mut Matrix>;
    fn loss(&mut self, x: &Matrix) -> Result<f64>;
    /// Loss and one gradient per block, in `block_names` order.
    fn loss_and_grads(&mut self, x: &Matrix) -> Result<(f64, Vec<Matrix>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().fold(0.0, |m, b| m.max(b.max_rel_error))
    }

    pub fn failures(&self) -> impl Iterator<Item = &BlockReport> {
        self.blocks.iter().filter(|b| !b.passed)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(
                f,
                "{:<6} {:<28} max_rel_err={:.3e}",
                if b.passed { "ok" } else { "FAIL" },
                b.name,
                b.max_rel_error
            )?;
        }
        write!(
            f,
            "{} ({} blocks, tolerance {:.1e})",
            if self.passed() { "PASSED" } else { "FAILED" },
            self.blocks.len(),
            self.tolerance
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares every analytic gradient entry against a central difference of
/// `net.loss(x)` and reports the worst relative error per block.
pub fn gradient_check<N: Differentiable + ?Sized>(
    net: &mut N,
    x: &Matrix,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let names = net.block_names();
    let (_, grads) = net.loss_and_grads(x)?;
    let mut blocks = Vec::with_capacity(names.len());
    for (b, name) in names.into_iter().enumerate() {
        let mut worst = 0.0f64;
        let n = grads[b].len();
        for i in 0..n {
            let orig = net.blocks_mut()[b].as_slice()[i];
            net.blocks_mut()[b].as_mut_slice()[i] = orig + FD_STEP;
            let plus = net.loss(x)?;
            net.blocks_mut()[b].as_mut_slice()[i] = orig - FD_STEP;
            let minus = net.loss(x)?;
            net.blocks_mut()[b].as_mut_slice()[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grads[b].as_slice()[i], numeric));
        }
        blocks.push(BlockReport {
            name,
            max_rel_error: worst,
            passed: worst < tolerance,
        });
    }
    Ok(GradCheckReport { tolerance, blocks })
}
