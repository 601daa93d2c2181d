use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

use super::integrators::{rk4_jacobian, step_euler, step_euler_maruyama, step_rk4};
use super::{Covariance, StateSpaceModel};

/// Parameters of the stochastic Lorenz '63 system
/// `dx = drift(x) dt + alpha dW`, observed as `y = x + r`, `r ~ N(0, obs_noise_var I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LorenzConfig {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub alpha: f64,
    pub dt: f64,
    /// Euler–Maruyama substeps per observation interval for ground truth.
    pub substeps: usize,
    pub obs_noise_var: f64,
}

impl Default for LorenzConfig {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            alpha: 10.0,
            dt: 0.02,
            substeps: 1000,
            obs_noise_var: 2.0,
        }
    }
}

impl LorenzConfig {
    pub fn validate(&self) -> Result<()> {
        if self.substeps < 1 {
            return Err(Error::config("Lorenz substeps must be >= 1"));
        }
        if !(self.alpha > 0.0) || !(self.dt > 0.0) || !(self.obs_noise_var > 0.0) {
            return Err(Error::config(
                "Lorenz alpha, dt and observation noise must be positive",
            ));
        }
        Ok(())
    }
}

pub fn lorenz_drift(x: &Vector, cfg: &LorenzConfig) -> Vector {
    Vector::from_vec(vec![
        cfg.sigma * (x[1] - x[0]),
        x[0] * (cfg.rho - x[2]) - x[1],
        x[0] * x[1] - cfg.beta * x[2],
    ])
}

pub fn lorenz_drift_jacobian(x: &Vector, cfg: &LorenzConfig) -> Matrix {
    Matrix::from_row_slice(
        3,
        3,
        &[
            -cfg.sigma,
            cfg.sigma,
            0.0,
            cfg.rho - x[2],
            -1.0,
            -x[0],
            x[1],
            x[0],
            -cfg.beta,
        ],
    )
}

/// How the filter-side transition approximates the SDE over one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Rk4,
    Euler,
    /// Identity transition (Gaussian random walk).
    #[serde(alias = "grw")]
    RandomWalk,
}

impl Dynamics {
    pub fn name(self) -> &'static str {
        match self {
            Dynamics::Rk4 => "rk4",
            Dynamics::Euler => "euler",
            Dynamics::RandomWalk => "grw",
        }
    }
}

/// Stochastic Lorenz '63 model.
///
/// Ground truth is integrated with Euler–Maruyama using `cfg.substeps`; the
/// filter-facing transition uses `dynamics` with process noise
/// `Q = process_alpha^2 dt I`, where `process_alpha` defaults to `cfg.alpha`.
#[derive(Debug, Clone)]
pub struct LorenzModel {
    cfg: LorenzConfig,
    dynamics: Dynamics,
    process_alpha: f64,
    process: Covariance,
    measurement: Covariance,
}

impl LorenzModel {
    pub fn new(cfg: LorenzConfig, dynamics: Dynamics) -> Result<Self> {
        cfg.validate()?;
        let alpha = cfg.alpha;
        Self::with_process_alpha(cfg, dynamics, alpha)
    }

    /// Same system, but the filter assumes diffusion scale `process_alpha`.
    pub fn with_process_alpha(
        cfg: LorenzConfig,
        dynamics: Dynamics,
        process_alpha: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(process_alpha > 0.0) {
            return Err(Error::config("process alpha must be positive"));
        }
        let process =
            Covariance::scaled_identity(3, process_alpha * process_alpha * cfg.dt, "Lorenz Q")?;
        let measurement = Covariance::scaled_identity(3, cfg.obs_noise_var, "Lorenz R")?;
        Ok(Self {
            cfg,
            dynamics,
            process_alpha,
            process,
            measurement,
        })
    }

    pub fn config(&self) -> &LorenzConfig {
        &self.cfg
    }

    pub fn dynamics(&self) -> Dynamics {
        self.dynamics
    }

    pub fn process_alpha(&self) -> f64 {
        self.process_alpha
    }
}

impl StateSpaceModel for LorenzModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        3
    }

    fn transition_mean(&self, x: &Vector, _t: usize) -> Vector {
        let drift = |v: &Vector| lorenz_drift(v, &self.cfg);
        match self.dynamics {
            Dynamics::Rk4 => step_rk4(drift, x, self.cfg.dt),
            Dynamics::Euler => step_euler(drift, x, self.cfg.dt),
            Dynamics::RandomWalk => x.clone(),
        }
    }

    fn jacobian_f(&self, x: &Vector, _t: usize) -> Matrix {
        let dt = self.cfg.dt;
        match self.dynamics {
            Dynamics::Rk4 => rk4_jacobian(
                |v: &Vector| lorenz_drift(v, &self.cfg),
                |v: &Vector| lorenz_drift_jacobian(v, &self.cfg),
                x,
                dt,
            ),
            Dynamics::Euler => Matrix::identity(3, 3) + lorenz_drift_jacobian(x, &self.cfg) * dt,
            Dynamics::RandomWalk => Matrix::identity(3, 3),
        }
    }

    fn process_noise(&self) -> &Covariance {
        &self.process
    }

    fn truth_sample(&self, x: &Vector, _t: usize, rng: &mut dyn RngCore) -> Vector {
        step_euler_maruyama(
            |v: &Vector| lorenz_drift(v, &self.cfg),
            x,
            self.cfg.dt,
            self.cfg.substeps,
            self.cfg.alpha,
            rng,
        )
    }

    fn measurement_mean(&self, x: &Vector, _t: usize) -> Vector {
        x.clone()
    }

    fn jacobian_h(&self, _x: &Vector, _t: usize) -> Matrix {
        Matrix::identity(3, 3)
    }

    fn measurement_noise(&self) -> &Covariance {
        &self.measurement
    }

    fn initial_mean(&self) -> Vector {
        Vector::from_element(3, 10.0)
    }

    fn initial_cov(&self) -> Matrix {
        Matrix::identity(3, 3)
    }

    fn time_step(&self) -> f64 {
        self.cfg.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_examples() {
        let cfg = LorenzConfig::default();
        assert_eq!(lorenz_drift(&Vector::zeros(3), &cfg), Vector::zeros(3));
        let d = lorenz_drift(&Vector::from_element(3, 1.0), &cfg);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 26.0);
        assert!((d[2] - (1.0 - 8.0 / 3.0)).abs() < 1e-15);
        assert_eq!(
            lorenz_drift(&Vector::from_vec(vec![1.0, 0.0, 0.0]), &cfg),
            Vector::from_vec(vec![-10.0, 28.0, 0.0])
        );
    }

    #[test]
    fn process_noise_scales_with_alpha() {
        let m = LorenzModel::new(LorenzConfig::default(), Dynamics::Rk4).unwrap();
        assert!((m.process_noise().matrix()[(0, 0)] - 2.0).abs() < 1e-12);
        let m =
            LorenzModel::with_process_alpha(LorenzConfig::default(), Dynamics::Rk4, 5.0).unwrap();
        assert!((m.process_noise().matrix()[(2, 2)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn random_walk_is_identity() {
        let m = LorenzModel::new(LorenzConfig::default(), Dynamics::RandomWalk).unwrap();
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(m.transition_mean(&x, 4), x);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = LorenzConfig {
            substeps: 0,
            ..LorenzConfig::default()
        };
        assert!(LorenzModel::new(cfg, Dynamics::Rk4).is_err());
        let cfg = LorenzConfig {
            alpha: 0.0,
            ..LorenzConfig::default()
        };
        assert!(LorenzModel::new(cfg, Dynamics::Rk4).is_err());
    }
}
