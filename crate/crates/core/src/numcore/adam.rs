use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Per-parameter-block Adam state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Matrix,
    second_moment: Matrix,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
        }
    }

    pub fn for_params(params: &Matrix, lr: f64) -> Self {
        Self::new(params.rows(), params.cols(), lr)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// `block` names the parameter block in error messages.
pub fn adam_step(
    params: &mut Matrix,
    grads: &Matrix,
    state: &mut AdamState,
    block: &str,
) -> Result<()> {
    params.check_same_shape(grads, "adam_step")?;
    params.check_same_shape(&state.first_moment, "adam_step")?;
    if let Some(i) = grads.first_non_finite() {
        return Err(Error::Numeric(format!("gradient of {block} (entry {i})")));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.epsilon);
    let p = params.as_mut_slice();
    let m = state.first_moment.as_mut_slice();
    let v = state.second_moment.as_mut_slice();
    for (i, &g) in grads.as_slice().iter().enumerate() {
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Update rule for a whole model, one state per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Adam(Vec<AdamState>),
    Sgd { lr: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &[&Matrix], lr: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(
                params
                    .iter()
                    .map(|p| AdamState::for_params(p, lr))
                    .collect(),
            ),
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
        }
    }

    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix], names: &[String]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "Optimizer::step",
                format!("{} parameter blocks", params.len()),
                format!("{} gradient blocks", grads.len()),
            ));
        }
        match self {
            Optimizer::Adam(states) => {
                for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    adam_step(p, g, &mut states[i], names.get(i).map_or("?", |s| s))?;
                }
            }
            Optimizer::Sgd { lr } => {
                for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    p.check_same_shape(g, "sgd_step")?;
                    if let Some(j) = g.first_non_finite() {
                        let name = names.get(i).map_or("?", |s| s);
                        return Err(Error::Numeric(format!("gradient of {name} (entry {j})")));
                    }
                    for (pv, gv) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *pv -= *lr * gv;
                    }
                }
            }
        }
        Ok(())
    }
}
