//! Sequential adaptation of a pretrained classifier to a drifting task.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::classical::{pf_step_with, ParticleSet};
use crate::error::{Error, Result};
use crate::imap::update_with_state;
use crate::linalg::Vector;
use crate::optimizers::{OptimizerSpec, OptimizerState};

use super::mlp::MlpModel;
use super::task::DriftBatch;
use super::vkf::{vkf_step, VkfConfig};

/// One way of moving the weights from step to step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    /// Keep the pretrained weights.
    Static,
    /// Fit each batch from the previous weights with a long optimizer run.
    DirectFit,
    /// Implicit MAP: `steps` optimizer iterations from the previous weights.
    Imap {
        steps: usize,
    },
    /// Bootstrap particle filter with a Gaussian random walk on the weights.
    Pf {
        sigma2: f64,
    },
    Vkf {
        sigma2: f64,
    },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Static => "static",
            Strategy::DirectFit => "direct_fit",
            Strategy::Imap { .. } => "imap",
            Strategy::Pf { .. } => "pf",
            Strategy::Vkf { .. } => "vkf",
        }
    }

    pub fn label(&self) -> String {
        match self {
            Strategy::Static | Strategy::DirectFit => self.name().to_string(),
            Strategy::Imap { steps } => format!("imap(K={steps})"),
            Strategy::Pf { sigma2 } => format!("pf(sigma2={sigma2})"),
            Strategy::Vkf { sigma2 } => format!("vkf(sigma2={sigma2})"),
        }
    }
}

/// Knobs shared by every strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    pub pretrain_steps: usize,
    pub pretrain_learning_rate: f64,
    /// Optimizer for direct fit, IMAP, and the VKF inner loop.
    pub optimizer: OptimizerSpec,
    pub direct_fit_steps: usize,
    pub vkf_steps: usize,
    pub particles: usize,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            pretrain_steps: 200,
            pretrain_learning_rate: 0.5,
            optimizer: OptimizerSpec::adam(1e-3, 0.9, 0.999),
            direct_fit_steps: 1000,
            vkf_steps: 1000,
            particles: 1000,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pretrain_learning_rate > 0.0) {
            return Err(Error::config("pretraining learning rate must be positive"));
        }
        if self.direct_fit_steps == 0 || self.vkf_steps == 0 || self.particles == 0 {
            return Err(Error::config(
                "step budgets and particle count must be positive",
            ));
        }
        self.optimizer.validate()
    }
}

/// Per-step accuracies of one strategy on one data sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationRun {
    pub strategy: Strategy,
    pub test_accuracy: Vec<f64>,
    pub validation_accuracy: Vec<f64>,
}

impl AdaptationRun {
    pub fn mean_test_accuracy(&self) -> f64 {
        mean(&self.test_accuracy)
    }

    /// Mean validation accuracy over the first `steps` steps.
    pub fn selection_score(&self, steps: usize) -> f64 {
        let n = steps.clamp(1, self.validation_accuracy.len().max(1));
        mean(&self.validation_accuracy[..n.min(self.validation_accuracy.len())])
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Plain gradient descent on the step-0 training split from `w_init`.
pub fn pretrain(
    model: &MlpModel,
    first: &DriftBatch,
    w_init: &Vector,
    cfg: &AdaptationConfig,
) -> Result<Vector> {
    let mut state =
        OptimizerState::new(OptimizerSpec::gd(cfg.pretrain_learning_rate), model.dim())?;
    let b = &first.train;
    update_with_state(
        w_init,
        |w| model.loss_grad(w, &b.x, &b.y),
        cfg.pretrain_steps,
        &mut state,
        0,
    )
}

/// K optimizer steps on the batch's mean cross-entropy from `w_prev` with
/// fresh optimizer state. Direct fit is this with `K = direct_fit_steps`.
fn optimizer_update(
    model: &MlpModel,
    w_prev: &Vector,
    batch: &DriftBatch,
    spec: OptimizerSpec,
    steps: usize,
    t: usize,
) -> Result<Vector> {
    let mut state = OptimizerState::new(spec, model.dim())?;
    let b = &batch.train;
    update_with_state(
        w_prev,
        |w| model.loss_grad(w, &b.x, &b.y),
        steps,
        &mut state,
        t,
    )
}

/// Runs `strategy` over `data` starting from the pretrained weights `w0`.
///
/// At every step the strategy sees that step's training split, then the
/// resulting weights are scored on the step's validation and test splits.
/// Only the particle filter draws from `rng`.
pub fn run_adaptation<R: RngCore>(
    strategy: Strategy,
    model: &MlpModel,
    cfg: &AdaptationConfig,
    data: &[DriftBatch],
    w0: &Vector,
    rng: &mut R,
) -> Result<AdaptationRun> {
    cfg.validate()?;
    let mut run = AdaptationRun {
        strategy,
        test_accuracy: Vec::with_capacity(data.len()),
        validation_accuracy: Vec::with_capacity(data.len()),
    };
    let mut w = w0.clone();
    let mut particles = match strategy {
        Strategy::Pf { sigma2 } => {
            if !(sigma2 > 0.0) {
                return Err(Error::config("PF transition variance must be positive"));
            }
            Some(ParticleSet::uniform(vec![w0.clone(); cfg.particles])?)
        }
        _ => None,
    };
    for (t, batch) in data.iter().enumerate() {
        w = match strategy {
            Strategy::Static => w,
            Strategy::DirectFit => {
                optimizer_update(model, &w, batch, cfg.optimizer, cfg.direct_fit_steps, t)?
            }
            Strategy::Imap { steps } => {
                if steps == 0 {
                    return Err(Error::config("IMAP needs at least one optimizer step"));
                }
                optimizer_update(model, &w, batch, cfg.optimizer, steps, t)?
            }
            Strategy::Vkf { sigma2 } => {
                let vcfg = VkfConfig {
                    sigma2,
                    optimizer: cfg.optimizer,
                    steps: cfg.vkf_steps,
                };
                vkf_step(&w, &batch.train, &vcfg, model, t)?
            }
            Strategy::Pf { sigma2 } => {
                let std = sigma2.sqrt();
                let ps = particles
                    .take()
                    .expect("particle set exists for the PF strategy");
                let b = &batch.train;
                let out = pf_step_with(
                    &ps,
                    |x, rng: &mut dyn RngCore| {
                        x.map(|v| v + std * rng.sample::<f64, _>(StandardNormal))
                    },
                    |x| -model.total_bce(x, &b.x, &b.y),
                    t,
                    rng,
                )?;
                particles = Some(out.particles);
                out.estimate
            }
        };
        run.validation_accuracy
            .push(model.accuracy(&w, &batch.validation.x, &batch.validation.y));
        run.test_accuracy
            .push(model.accuracy(&w, &batch.test.x, &batch.test.y));
    }
    Ok(run)
}

/// Runs every candidate and keeps the one with the best validation accuracy
/// over the first `selection_steps` steps. Earlier candidates win ties.
/// Candidates that diverge are skipped; if all diverge the last error is
/// returned.
pub fn select_by_validation<R: RngCore>(
    candidates: &[Strategy],
    model: &MlpModel,
    cfg: &AdaptationConfig,
    data: &[DriftBatch],
    w0: &Vector,
    selection_steps: usize,
    mut rng_for: impl FnMut(usize) -> R,
) -> Result<AdaptationRun> {
    let mut best: Option<(f64, AdaptationRun)> = None;
    let mut last_err = None;
    for (i, &s) in candidates.iter().enumerate() {
        match run_adaptation(s, model, cfg, data, w0, &mut rng_for(i)) {
            Ok(run) => {
                let score = run.selection_score(selection_steps);
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, run));
                }
            }
            Err(e @ Error::Diverged { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    match (best, last_err) {
        (Some((_, run)), _) => Ok(run),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::config("no candidate strategies to select from")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::weightspace::task::{drift_task_data, DriftTask};

    fn setup(task: &DriftTask, seed: u64) -> (MlpModel, Vec<DriftBatch>, Vector) {
        let m = MlpModel::default();
        let data = drift_task_data(task, &mut rng::stream(seed, rng::DATA_STREAM));
        let init = m.init(&mut rng::stream(seed, rng::INIT_STREAM));
        let w0 = pretrain(&m, &data[0], &init, &AdaptationConfig::default()).unwrap();
        (m, data, w0)
    }

    #[test]
    fn pretraining_fits_the_first_step() {
        let task = DriftTask::default();
        let (m, data, w0) = setup(&task, 3);
        assert!(m.accuracy(&w0, &data[0].test.x, &data[0].test.y) > 0.8);
    }

    #[test]
    fn static_keeps_weights_and_is_deterministic() {
        let task = DriftTask {
            horizon: 10,
            ..DriftTask::default()
        };
        let (m, data, w0) = setup(&task, 1);
        let cfg = AdaptationConfig::default();
        let a = run_adaptation(
            Strategy::Static,
            &m,
            &cfg,
            &data,
            &w0,
            &mut rng::stream(1, 1),
        )
        .unwrap();
        assert_eq!(a.test_accuracy.len(), 10);
        for (t, acc) in a.test_accuracy.iter().enumerate() {
            assert_eq!(*acc, m.accuracy(&w0, &data[t].test.x, &data[t].test.y));
        }
    }

    #[test]
    fn direct_fit_is_imap_with_the_long_budget() {
        let task = DriftTask {
            horizon: 6,
            ..DriftTask::default()
        };
        let (m, data, w0) = setup(&task, 2);
        let cfg = AdaptationConfig::default();
        let direct = run_adaptation(
            Strategy::DirectFit,
            &m,
            &cfg,
            &data,
            &w0,
            &mut rng::stream(0, 1),
        )
        .unwrap();
        let imap = run_adaptation(
            Strategy::Imap {
                steps: cfg.direct_fit_steps,
            },
            &m,
            &cfg,
            &data,
            &w0,
            &mut rng::stream(0, 1),
        )
        .unwrap();
        assert_eq!(direct.test_accuracy, imap.test_accuracy);
        assert_eq!(direct.validation_accuracy, imap.validation_accuracy);
    }

    #[test]
    fn huge_variance_vkf_tracks_direct_fit() {
        let task = DriftTask {
            horizon: 8,
            ..DriftTask::default()
        };
        let (m, data, w0) = setup(&task, 4);
        let cfg = AdaptationConfig::default();
        let mut wd = w0.clone();
        let mut wv = w0.clone();
        for (t, b) in data.iter().enumerate() {
            wd = optimizer_update(&m, &wd, b, cfg.optimizer, cfg.direct_fit_steps, t).unwrap();
            let vcfg = VkfConfig {
                sigma2: 1e12,
                optimizer: cfg.optimizer,
                steps: cfg.vkf_steps,
            };
            wv = vkf_step(&wv, &b.train, &vcfg, &m, t).unwrap();
            assert!((&wd - &wv).amax() < 1e-4, "step {t}");
        }
    }

    #[test]
    fn pf_is_reproducible_and_finite() {
        let task = DriftTask {
            horizon: 5,
            ..DriftTask::default()
        };
        let (m, data, w0) = setup(&task, 5);
        let cfg = AdaptationConfig {
            particles: 200,
            ..AdaptationConfig::default()
        };
        let s = Strategy::Pf { sigma2: 0.01 };
        let a = run_adaptation(
            s,
            &m,
            &cfg,
            &data,
            &w0,
            &mut rng::stream(5, rng::FILTER_STREAM),
        )
        .unwrap();
        let b = run_adaptation(
            s,
            &m,
            &cfg,
            &data,
            &w0,
            &mut rng::stream(5, rng::FILTER_STREAM),
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.test_accuracy.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn selection_prefers_better_validation_and_earlier_ties() {
        let task = DriftTask {
            horizon: 20,
            ..DriftTask::default()
        };
        let (m, data, w0) = setup(&task, 6);
        let cfg = AdaptationConfig::default();
        let chosen = select_by_validation(
            &[Strategy::Static, Strategy::Imap { steps: 50 }],
            &m,
            &cfg,
            &data,
            &w0,
            10,
            |_| rng::stream(0, 1),
        )
        .unwrap();
        let s = run_adaptation(
            Strategy::Static,
            &m,
            &cfg,
            &data,
            &w0,
            &mut rng::stream(0, 1),
        )
        .unwrap();
        let i = run_adaptation(
            Strategy::Imap { steps: 50 },
            &m,
            &cfg,
            &data,
            &w0,
            &mut rng::stream(0, 1),
        )
        .unwrap();
        let expect = if i.selection_score(10) > s.selection_score(10) {
            i.strategy
        } else {
            s.strategy
        };
        assert_eq!(chosen.strategy, expect);

        let tie = select_by_validation(
            &[Strategy::Static, Strategy::Static],
            &m,
            &cfg,
            &data,
            &w0,
            10,
            |_| rng::stream(0, 1),
        )
        .unwrap();
        assert_eq!(tie.strategy, Strategy::Static);
    }

    #[test]
    fn zero_imap_steps_rejected() {
        let task = DriftTask {
            horizon: 2,
            ..DriftTask::default()
        };
        let (m, data, w0) = setup(&task, 7);
        let r = run_adaptation(
            Strategy::Imap { steps: 0 },
            &m,
            &AdaptationConfig::default(),
            &data,
            &w0,
            &mut rng::stream(0, 1),
        );
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }
}
