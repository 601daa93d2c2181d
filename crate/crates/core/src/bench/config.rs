use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imap::ImapConfig;
use crate::linalg::{Matrix, Vector};
use crate::models::{Dynamics, LinearGaussian, LorenzConfig, LorenzModel, StateSpaceModel, Ungm};

/// The simulated system. `horizon` is the trajectory length `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum SystemConfig {
    Ungm {
        #[serde(default = "ungm_q")]
        q: f64,
        #[serde(default = "ungm_r")]
        r: f64,
        #[serde(default = "ungm_dt")]
        dt: f64,
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
    Lorenz {
        #[serde(default)]
        lorenz: LorenzConfig,
        /// Transition used by the filters; ground truth always comes from
        /// Euler–Maruyama.
        #[serde(default = "default_dynamics")]
        dynamics: Dynamics,
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
    /// `x_t = F x_{t-1} + N(0, Q)`, `y_t = H x_t + N(0, R)`; matrices are
    /// row-major nested arrays.
    Linear {
        f: Vec<Vec<f64>>,
        h: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        mu0: Vec<f64>,
        sigma0: Vec<Vec<f64>>,
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
}

fn ungm_q() -> f64 {
    3.0
}
fn ungm_r() -> f64 {
    2.0
}
fn ungm_dt() -> f64 {
    0.1
}
fn default_horizon() -> usize {
    200
}
fn default_dynamics() -> Dynamics {
    Dynamics::Rk4
}
fn default_runs() -> usize {
    100
}
fn default_validation_runs() -> usize {
    5
}
fn default_iekf_iterations() -> usize {
    5
}
fn default_particles() -> usize {
    1000
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::config(format!(
            "{what} must be a non-empty rectangular array"
        )));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// A concrete model, so that the Kalman filter can reach the linear
/// matrices while everything else goes through the trait.
#[derive(Debug, Clone)]
pub enum BuiltModel {
    Ungm(Ungm),
    Lorenz(LorenzModel),
    Linear(LinearGaussian),
}

impl BuiltModel {
    pub fn as_dyn(&self) -> &dyn StateSpaceModel {
        match self {
            BuiltModel::Ungm(m) => m,
            BuiltModel::Lorenz(m) => m,
            BuiltModel::Linear(m) => m,
        }
    }
}

impl SystemConfig {
    pub fn horizon(&self) -> usize {
        match self {
            SystemConfig::Ungm { horizon, .. }
            | SystemConfig::Lorenz { horizon, .. }
            | SystemConfig::Linear { horizon, .. } => *horizon,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemConfig::Ungm { .. } => "ungm",
            SystemConfig::Lorenz { .. } => "lorenz",
            SystemConfig::Linear { .. } => "linear",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon() == 0 {
            return Err(Error::config("trajectory length must be at least 1"));
        }
        self.truth_model().map(|_| ())
    }

    /// The model used to simulate data.
    pub fn truth_model(&self) -> Result<BuiltModel> {
        self.filter_model(None)
    }

    /// The model handed to a filter. `process_noise` overrides the filter's
    /// process noise: the variance for UNGM, the diffusion scale `α` for
    /// Lorenz (`Q = α² dt I`), and a multiplier on `Q` for linear systems.
    pub fn filter_model(&self, process_noise: Option<f64>) -> Result<BuiltModel> {
        Ok(match self {
            SystemConfig::Ungm { q, r, dt, .. } => {
                BuiltModel::Ungm(Ungm::new(process_noise.unwrap_or(*q), *r, *dt)?)
            }
            SystemConfig::Lorenz {
                lorenz, dynamics, ..
            } => BuiltModel::Lorenz(LorenzModel::with_process_alpha(
                lorenz.clone(),
                *dynamics,
                process_noise.unwrap_or(lorenz.alpha),
            )?),
            SystemConfig::Linear {
                f,
                h,
                q,
                r,
                mu0,
                sigma0,
                ..
            } => BuiltModel::Linear(LinearGaussian::new(
                matrix(f, "f")?,
                matrix(h, "h")?,
                matrix(q, "q")? * process_noise.unwrap_or(1.0),
                matrix(r, "r")?,
                Vector::from_column_slice(mu0),
                matrix(sigma0, "sigma0")?,
            )?),
        })
    }

    /// Same system with the filter-side Lorenz transition swapped.
    pub fn with_dynamics(&self, dynamics: Dynamics) -> Self {
        match self {
            SystemConfig::Lorenz {
                lorenz, horizon, ..
            } => SystemConfig::Lorenz {
                lorenz: lorenz.clone(),
                dynamics,
                horizon: *horizon,
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodConfig {
    Kf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        process_noise: Option<f64>,
    },
    Ekf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        process_noise: Option<f64>,
    },
    Iekf {
        #[serde(default = "default_iekf_iterations")]
        iterations: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        process_noise: Option<f64>,
    },
    Ukf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        process_noise: Option<f64>,
    },
    Pf {
        #[serde(default = "default_particles")]
        particles: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        process_noise: Option<f64>,
    },
    Imap(ImapConfig),
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Kf { .. } => "kf",
            MethodConfig::Ekf { .. } => "ekf",
            MethodConfig::Iekf { .. } => "iekf",
            MethodConfig::Ukf { .. } => "ukf",
            MethodConfig::Pf { .. } => "pf",
            MethodConfig::Imap(_) => "imap",
        }
    }

    pub fn process_noise(&self) -> Option<f64> {
        match self {
            MethodConfig::Kf { process_noise }
            | MethodConfig::Ekf { process_noise }
            | MethodConfig::Iekf { process_noise, .. }
            | MethodConfig::Ukf { process_noise }
            | MethodConfig::Pf { process_noise, .. } => *process_noise,
            MethodConfig::Imap(_) => None,
        }
    }

    /// Copy with the process-noise override set; IMAP ignores it.
    pub fn with_process_noise(&self, value: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            MethodConfig::Kf { process_noise }
            | MethodConfig::Ekf { process_noise }
            | MethodConfig::Iekf { process_noise, .. }
            | MethodConfig::Ukf { process_noise }
            | MethodConfig::Pf { process_noise, .. } => *process_noise = Some(value),
            MethodConfig::Imap(_) => {}
        }
        out
    }

    /// Space-separated hyperparameters, safe to embed in a CSV cell.
    pub fn param_string(&self) -> String {
        let q = |p: &Option<f64>| p.map(|v| format!("q={v}"));
        let parts: Vec<String> = match self {
            MethodConfig::Kf { process_noise }
            | MethodConfig::Ekf { process_noise }
            | MethodConfig::Ukf { process_noise } => q(process_noise).into_iter().collect(),
            MethodConfig::Iekf {
                iterations,
                process_noise,
            } => std::iter::once(format!("K={iterations}"))
                .chain(q(process_noise))
                .collect(),
            MethodConfig::Pf {
                particles,
                process_noise,
            } => std::iter::once(format!("n={particles}"))
                .chain(q(process_noise))
                .collect(),
            MethodConfig::Imap(cfg) => {
                let mut v = vec![cfg.optimizer.label(), format!("K={}", cfg.steps)];
                if !cfg.reset_optimizer_each_step {
                    v.push("carry_state".into());
                }
                v
            }
        };
        parts.join(" ")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodConfig::Iekf { iterations: 0, .. } => {
                Err(Error::config("IEKF iterations must be >= 1"))
            }
            MethodConfig::Pf { particles: 0, .. } => {
                Err(Error::config("particle count must be >= 1"))
            }
            MethodConfig::Imap(cfg) => cfg.validate(),
            _ => Ok(()),
        }
        .and_then(|_| match self.process_noise() {
            Some(v) if !(v > 0.0 && v.is_finite()) => {
                Err(Error::config("process noise override must be positive"))
            }
            _ => Ok(()),
        })
    }

    /// Grid tie-break key: fewer optimizer steps first, then the smaller
    /// learning rate (or process-noise value for the classical filters).
    pub(crate) fn tie_key(&self) -> (usize, f64) {
        match self {
            MethodConfig::Imap(cfg) => (cfg.steps, cfg.optimizer.learning_rate),
            MethodConfig::Iekf {
                iterations,
                process_noise,
            } => (*iterations, process_noise.unwrap_or(0.0)),
            other => (0, other.process_noise().unwrap_or(0.0)),
        }
    }
}

/// How runs whose RMSE is non-finite enter the summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergencePolicy {
    /// Replace with the largest finite RMSE of the batch and count it.
    #[default]
    ReplaceWithMaxFinite,
    /// Keep the non-finite value; the mean becomes infinite.
    Keep,
}

/// Hyperparameter lattice for `gridsearch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "grid", rename_all = "snake_case")]
pub enum GridSpec {
    /// The 287-cell optimizer lattice, optionally restricted to some
    /// optimizer families.
    ImapLattice {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        optimizers: Option<Vec<crate::optimizers::OptimizerKind>>,
    },
    /// `count` evenly spaced process-noise overrides in `[lo, hi]` applied to
    /// the experiment's method.
    ProcessNoise {
        lo: f64,
        hi: f64,
        count: usize,
    },
    Cells {
        cells: Vec<MethodConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub system: SystemConfig,
    #[serde(flatten)]
    pub method: MethodConfig,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_validation_runs")]
    pub validation_runs: usize,
    #[serde(default)]
    pub divergence: DivergencePolicy,
}

impl ExperimentConfig {
    pub fn new(system: SystemConfig, method: MethodConfig) -> Self {
        Self {
            system,
            method,
            runs: default_runs(),
            base_seed: 0,
            grid: None,
            validation_runs: default_validation_runs(),
            divergence: DivergencePolicy::default(),
        }
    }

    pub fn with_runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.validation_runs == 0 {
            return Err(Error::config("runs and validation_runs must be >= 1"));
        }
        self.system.validate()?;
        self.method.validate()?;
        if let Some(GridSpec::ProcessNoise { lo, hi, count }) = &self.grid {
            if *count == 0 || !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(
                    "process-noise grid needs count >= 1 and finite lo <= hi",
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::Ungm {
            q: ungm_q(),
            r: ungm_r(),
            dt: ungm_dt(),
            horizon: default_horizon(),
        }
    }
}
