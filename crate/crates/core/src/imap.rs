//! The implicit MAP filter.
//!
//! Predict propagates the point estimate through the transition mean (no
//! covariance); update runs `K` iterations of an optimizer on the current
//! observation's loss starting from the prediction. The prior is never
//! written down: it is implied by the optimizer, `K`, and the starting point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::FilterRun;
use crate::linalg::{self, Vector};
use crate::models::{mse_loss_grad, StateSpaceModel};
use crate::optimizers::{OptimizerSpec, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImapConfig {
    pub optimizer: OptimizerSpec,
    /// Optimizer iterations per timestep (`K`).
    pub steps: usize,
    /// Start every update from zeroed optimizer accumulators. When false the
    /// moments carry over from the previous timestep.
    #[serde(default = "default_true")]
    pub reset_optimizer_each_step: bool,
}

fn default_true() -> bool {
    true
}

impl ImapConfig {
    pub fn new(optimizer: OptimizerSpec, steps: usize) -> Self {
        Self {
            optimizer,
            steps,
            reset_optimizer_each_step: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("IMAP needs at least one optimizer step"));
        }
        self.optimizer.validate()
    }
}

pub type ImapRun = FilterRun;

/// `mu_t^- = f_t(mu_{t-1})`.
pub fn imap_predict<M: StateSpaceModel + ?Sized>(model: &M, mu_prev: &Vector, t: usize) -> Vector {
    model.transition_mean(mu_prev, t)
}

/// Runs `cfg.steps` optimizer iterations from `mu_minus` with fresh
/// accumulators.
pub fn imap_update<L>(mu_minus: &Vector, loss_grad: L, cfg: &ImapConfig) -> Result<Vector>
where
    L: FnMut(&Vector) -> (f64, Vector),
{
    cfg.validate()?;
    let mut state = OptimizerState::new(cfg.optimizer, mu_minus.len())?;
    update_with_state(mu_minus, loss_grad, cfg.steps, &mut state, 0)
}

/// Update step against an existing optimizer state; `t` is only used to
/// label divergence errors.
pub fn update_with_state<L>(
    mu_minus: &Vector,
    mut loss_grad: L,
    steps: usize,
    state: &mut OptimizerState,
    t: usize,
) -> Result<Vector>
where
    L: FnMut(&Vector) -> (f64, Vector),
{
    let mut m = mu_minus.clone();
    for k in 0..steps {
        let (loss, grad) = loss_grad(&m);
        if !loss.is_finite() || !linalg::all_finite(&grad) {
            return Err(Error::Diverged {
                step: t,
                iterate: k,
            });
        }
        m += state.step(&grad)?;
        if !linalg::all_finite(&m) {
            return Err(Error::Diverged {
                step: t,
                iterate: k + 1,
            });
        }
    }
    Ok(m)
}

/// Filters `observations` with a caller-supplied loss `loss(x, y_t, t)`.
pub fn imap_filter_with_loss<M, L>(
    model: &M,
    mu0: &Vector,
    observations: &[Vector],
    cfg: &ImapConfig,
    mut loss: L,
) -> Result<ImapRun>
where
    M: StateSpaceModel + ?Sized,
    L: FnMut(&Vector, &Vector, usize) -> (f64, Vector),
{
    cfg.validate()?;
    if observations.is_empty() {
        return Err(Error::config("no observations to filter"));
    }
    let mut run = ImapRun::with_capacity(observations.len());
    let mut state = OptimizerState::new(cfg.optimizer, mu0.len())?;
    let mut mu = mu0.clone();
    for (i, y) in observations.iter().enumerate() {
        let t = i + 1;
        let prediction = imap_predict(model, &mu, t);
        if !linalg::all_finite(&prediction) {
            return Err(Error::Diverged {
                step: t,
                iterate: 0,
            });
        }
        if cfg.reset_optimizer_each_step {
            state = OptimizerState::new(cfg.optimizer, mu0.len())?;
        }
        mu = update_with_state(&prediction, |x| loss(x, y, t), cfg.steps, &mut state, t)?;
        run.push(prediction, mu.clone());
    }
    Ok(run)
}

/// Filters with the squared-error loss `½‖y_t − h(x)‖²` (Gaussian likelihood
/// with `R = I`); the measurement noise is absorbed into the optimizer.
pub fn imap_filter<M: StateSpaceModel + ?Sized>(
    model: &M,
    mu0: &Vector,
    observations: &[Vector],
    cfg: &ImapConfig,
) -> Result<ImapRun> {
    imap_filter_with_loss(model, mu0, observations, cfg, |x, y, t| {
        mse_loss_grad(model, x, y, t)
    })
}
