//! Variational Kalman filter over network weights: a MAP step under a
//! Gaussian random-walk prior centred at the previous estimate, which is
//! weight decay pulling towards `w_prev` rather than towards zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::optimizers::{OptimizerKind, OptimizerSpec, OptimizerState};

use super::mlp::MlpModel;
use super::task::LabeledBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VkfConfig {
    /// Random-walk transition variance.
    pub sigma2: f64,
    pub optimizer: OptimizerSpec,
    pub steps: usize,
}

impl VkfConfig {
    pub fn new(sigma2: f64) -> Self {
        Self {
            sigma2,
            optimizer: OptimizerSpec::adam(1e-3, 0.9, 0.999),
            steps: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::config("VKF transition variance must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::config("VKF needs at least one inner step"));
        }
        self.optimizer.validate()
    }
}

/// Minimizes `L(w) + ‖w − w_prev‖² / (2 n σ²)` from `w_prev`, where
/// `loss_grad` returns the data term `L` and its gradient.
///
/// The data term goes through the inner optimizer and the anchor is applied
/// as an exact proximal map scaled by the optimizer's step size. With plain
/// gradient descent this is proximal gradient descent, so the objective never
/// increases for small enough steps, and both limits are exact: σ² → ∞
/// reproduces the unregularized optimizer path, σ² → 0 pins `w_prev`.
pub fn vkf_update<L>(
    w_prev: &Vector,
    mut loss_grad: L,
    n: usize,
    cfg: &VkfConfig,
    t: usize,
) -> Result<Vector>
where
    L: FnMut(&Vector) -> (f64, Vector),
{
    cfg.validate()?;
    let step_size = match cfg.optimizer.kind {
        OptimizerKind::Adadelta => 1.0,
        _ => cfg.optimizer.learning_rate,
    };
    let c = step_size / (n.max(1) as f64 * cfg.sigma2);
    let mut state = OptimizerState::new(cfg.optimizer, w_prev.len())?;
    let mut w = w_prev.clone();
    for k in 0..cfg.steps {
        let (loss, grad) = loss_grad(&w);
        if !loss.is_finite() || !linalg::all_finite(&grad) {
            return Err(Error::Diverged {
                step: t,
                iterate: k,
            });
        }
        let v = &w + state.step(&grad)?;
        w = (v + w_prev * c) / (1.0 + c);
        if !linalg::all_finite(&w) {
            return Err(Error::Diverged {
                step: t,
                iterate: k + 1,
            });
        }
    }
    Ok(w)
}

/// VKF step for the classifier on one training batch.
pub fn vkf_step(
    w_prev: &Vector,
    batch: &LabeledBatch,
    cfg: &VkfConfig,
    model: &MlpModel,
    t: usize,
) -> Result<Vector> {
    vkf_update(
        w_prev,
        |w| model.loss_grad(w, &batch.x, &batch.y),
        batch.len(),
        cfg,
        t,
    )
}

/// The objective `vkf_update` minimizes, for diagnostics and tests.
pub fn vkf_objective(data_loss: f64, w: &Vector, w_prev: &Vector, n: usize, sigma2: f64) -> f64 {
    data_loss + (w - w_prev).norm_squared() / (2.0 * n as f64 * sigma2)
}
