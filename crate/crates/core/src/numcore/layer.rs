use crate::error::{Error, Result};
use crate::numcore::{Matrix, SeededRng};

/// Fully connected layer `y = x · Wᵀ + b` with an explicit backward pass.
///
/// The weight is stored `out × in`. `forward` caches its input so that a
/// following `backward` can form the weight gradient; `infer` runs the same
/// arithmetic without touching the cache.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    weight: Matrix,
    bias: Matrix,
    cached_input: Option<Matrix>,
}

/// Gradients produced by [`AffineLayer::backward`].
#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub input: Matrix,
    pub weight: Matrix,
    pub bias: Matrix,
}

impl AffineLayer {
    pub fn new(weight: Matrix, bias: Matrix) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weight.rows() {
            return Err(Error::shape(
                "AffineLayer::new",
                weight.shape_str(),
                bias.shape_str(),
            ));
        }
        Ok(AffineLayer {
            weight,
            bias,
            cached_input: None,
        })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        AffineLayer {
            weight: Matrix::zeros(output, input),
            bias: Matrix::zeros(1, output),
            cached_input: None,
        }
    }

    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(input: usize, output: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (input + output).max(1) as f64).sqrt();
        let weight = Matrix::from_fn(output, input, |_, _| rng.uniform(-limit, limit));
        AffineLayer {
            weight,
            bias: Matrix::zeros(1, output),
            cached_input: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &Matrix {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Matrix {
        &mut self.bias
    }

    /// `[weight, bias]`, the order used by optimizers and checkpoints.
    pub fn params_mut(&mut self) -> [&mut Matrix; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Matrix; 2] {
        [&self.weight, &self.bias]
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "affine_forward",
                format!("input {}", x.shape_str()),
                format!("weight {}", self.weight.shape_str()),
            ));
        }
        let mut out = x.matmul_t(&self.weight)?;
        out.add_row_broadcast(&self.bias)?;
        Ok(out)
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let out = self.infer(x)?;
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    /// Gradients of a batch-summed loss given `upstream = dL/dy`.
    pub fn backward(&self, upstream: &Matrix) -> Result<AffineGrads> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("affine backward called before forward".into()))?;
        if upstream.rows() != x.rows() || upstream.cols() != self.output_dim() {
            return Err(Error::shape(
                "affine_backward",
                format!("upstream {}", upstream.shape_str()),
                format!(
                    "expected {}x{}",
                    x.rows(),
                    self.output_dim()
                ),
            ));
        }
        Ok(AffineGrads {
            input: upstream.matmul(&self.weight)?,
            weight: upstream.t_matmul(x)?,
            bias: upstream.sum_rows(),
        })
    }

    pub fn clear_cache(&mut self) {
        self.cached_input = None;
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Masks `upstream` by `pre > 0`.
pub fn relu_backward(pre: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    if pre.shape() != upstream.shape() {
        return Err(Error::shape("relu_backward", pre.shape_str(), upstream.shape_str()));
    }
    pre.zip_map(upstream, |p, g| if p > 0.0 { g } else { 0.0 })
}

pub fn relu_forward_backward(x: &Matrix, upstream: &Matrix) -> Result<(Matrix, Matrix)> {
    Ok((relu(x), relu_backward(x, upstream)?))
}
