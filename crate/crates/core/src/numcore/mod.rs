//! Dense numerics: matrices, affine layers with hand-written backward passes,
//! ReLU, Adam, seeded sampling and finite-difference gradient checks.

mod adam;
mod gradcheck;
mod layer;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamState, Optimizer, OptimizerKind};
pub use gradcheck::{
    gradient_check, relative_error, BlockReport, Differentiable, GradCheckReport, FD_STEP,
};
pub use layer::{relu, relu_backward, relu_forward_backward, AffineGrads, AffineLayer};
pub use matrix::Matrix;
pub use rng::{gaussian_sample, SeededRng, Stream};
