use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BuiltModel, DivergencePolicy, ExperimentConfig, MethodConfig, SystemConfig};
use super::stats::{rmse, summarize, RmseSummary};
use crate::classical;
use crate::error::{Error, Result};
use crate::estimates::FilterRun;
use crate::imap::imap_filter;
use crate::linalg::Vector;
use crate::models::{simulate, Trajectory};
use crate::rng::{self, SimRng};

/// Validation seeds live this far above the evaluation block so the two
/// never overlap for any realistic run count.
pub const VALIDATION_SEED_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// Raw RMSE; non-finite when the filter diverged.
    pub rmse: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub method: String,
    pub params: String,
    pub summary: RmseSummary,
    pub runs: Vec<RunRecord>,
}

/// Simulates one trajectory per seed, in parallel, each from the seed's
/// simulation stream.
pub fn simulate_runs(system: &SystemConfig, seeds: &[u64]) -> Result<Vec<Trajectory>> {
    let model = system.truth_model()?;
    seeds
        .par_iter()
        .map(|&seed| {
            simulate(
                model.as_dyn(),
                system.horizon(),
                &mut rng::stream(seed, rng::SIMULATION_STREAM),
            )
        })
        .collect()
}

/// Runs one filter over a trajectory's observations. Particle filters draw
/// from `filter_rng`; the others ignore it.
pub fn run_filter(
    model: &BuiltModel,
    method: &MethodConfig,
    observations: &[Vector],
    filter_rng: &mut SimRng,
) -> Result<FilterRun> {
    let dyn_model = model.as_dyn();
    match method {
        MethodConfig::Kf { .. } => match model {
            BuiltModel::Linear(lin) => classical::run_kf(lin, observations),
            _ => Err(Error::config(
                "the Kalman filter needs a linear system; use ekf or ukf",
            )),
        },
        MethodConfig::Ekf { .. } => classical::run_ekf(dyn_model, observations),
        MethodConfig::Iekf { iterations, .. } => {
            classical::run_iekf(dyn_model, observations, *iterations)
        }
        MethodConfig::Ukf { .. } => classical::run_ukf(dyn_model, observations),
        MethodConfig::Pf { particles, .. } => {
            classical::run_pf(dyn_model, observations, *particles, filter_rng)
        }
        MethodConfig::Imap(cfg) => {
            imap_filter(dyn_model, &dyn_model.initial_mean(), observations, cfg)
        }
    }
}

fn is_numerical_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Diverged { .. } | Error::SingularInnovation { .. } | Error::NotPositiveDefinite(_)
    )
}

/// Raw per-run RMSEs of `method` on pre-simulated trajectories; numerical
/// failures become `+inf`, configuration errors abort.
pub fn evaluate_method(
    system: &SystemConfig,
    method: &MethodConfig,
    trajectories: &[Trajectory],
    seeds: &[u64],
) -> Result<Vec<f64>> {
    method.validate()?;
    let model = system.filter_model(method.process_noise())?;
    trajectories
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(traj, &seed)| {
            let mut frng = rng::stream(seed, rng::FILTER_STREAM);
            match run_filter(&model, method, &traj.observations, &mut frng) {
                Ok(run) => Ok(rmse(&run.estimates, &traj.states).map(|v| {
                    if v.is_finite() {
                        v
                    } else {
                        f64::INFINITY
                    }
                })?),
                Err(e) if is_numerical_failure(&e) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub(crate) fn records(seeds: &[u64], raw: &[f64]) -> Vec<RunRecord> {
    seeds
        .iter()
        .zip(raw)
        .enumerate()
        .map(|(run, (&seed, &rmse))| RunRecord {
            run,
            seed,
            rmse,
            diverged: !rmse.is_finite(),
        })
        .collect()
}

pub(crate) fn finish(
    method: &MethodConfig,
    seeds: &[u64],
    raw: &[f64],
    policy: DivergencePolicy,
) -> MonteCarloResult {
    MonteCarloResult {
        method: method.name().to_string(),
        params: method.param_string(),
        summary: summarize(raw, policy),
        runs: records(seeds, raw),
    }
}

/// Runs `cfg.runs` independent simulations with seeds `base_seed + i`.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.runs as u64).map(|i| cfg.base_seed + i).collect();
    let trajectories = simulate_runs(&cfg.system, &seeds)?;
    let raw = evaluate_method(&cfg.system, &cfg.method, &trajectories, &seeds)?;
    Ok(finish(&cfg.method, &seeds, &raw, cfg.divergence))
}
