use crate::error::Result;
use crate::linalg::{Matrix, Vector};

use super::{Covariance, StateSpaceModel};

/// Deterministic part of the univariate nonlinear growth model transition.
pub fn ungm_transition_mean(x: f64, t: usize, dt: f64) -> f64 {
    0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * t as f64 * dt).cos()
}

pub fn ungm_measurement_mean(x: f64) -> f64 {
    x * x / 20.0
}

/// Univariate nonlinear growth model with additive Gaussian noise.
///
/// `x_0 ~ N(0, 1)`. The quadratic measurement makes the likelihood even in
/// `x`, so the filtering distribution is frequently bimodal.
#[derive(Debug, Clone)]
pub struct Ungm {
    dt: f64,
    process: Covariance,
    measurement: Covariance,
}

impl Ungm {
    pub fn new(q: f64, r: f64, dt: f64) -> Result<Self> {
        Ok(Self {
            dt,
            process: Covariance::scaled_identity(1, q, "UNGM process noise")?,
            measurement: Covariance::scaled_identity(1, r, "UNGM measurement noise")?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

impl StateSpaceModel for Ungm {
    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn transition_mean(&self, x: &Vector, t: usize) -> Vector {
        Vector::from_element(1, ungm_transition_mean(x[0], t, self.dt))
    }

    fn jacobian_f(&self, x: &Vector, _t: usize) -> Matrix {
        let x = x[0];
        let denom = 1.0 + x * x;
        Matrix::from_element(1, 1, 0.5 + 25.0 * (1.0 - x * x) / (denom * denom))
    }

    fn process_noise(&self) -> &Covariance {
        &self.process
    }

    fn measurement_mean(&self, x: &Vector, _t: usize) -> Vector {
        Vector::from_element(1, ungm_measurement_mean(x[0]))
    }

    fn jacobian_h(&self, x: &Vector, _t: usize) -> Matrix {
        Matrix::from_element(1, 1, x[0] / 10.0)
    }

    fn measurement_noise(&self) -> &Covariance {
        &self.measurement
    }

    fn initial_mean(&self) -> Vector {
        Vector::zeros(1)
    }

    fn initial_cov(&self) -> Matrix {
        Matrix::identity(1, 1)
    }

    fn time_step(&self) -> f64 {
        self.dt
    }
}
