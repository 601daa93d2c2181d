use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

use super::{Covariance, StateSpaceModel};

/// Time-invariant linear-Gaussian model `x_t = F x_{t-1} + q`, `y_t = H x_t + r`.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    f: Matrix,
    h: Matrix,
    process: Covariance,
    measurement: Covariance,
    mu0: Vector,
    sigma0: Matrix,
}

impl LinearGaussian {
    pub fn new(
        f: Matrix,
        h: Matrix,
        q: Matrix,
        r: Matrix,
        mu0: Vector,
        sigma0: Matrix,
    ) -> Result<Self> {
        let n = f.nrows();
        let check = |context, expected, got| {
            if expected != got {
                Err(Error::Dimension {
                    context,
                    expected,
                    got,
                })
            } else {
                Ok(())
            }
        };
        check("F columns", n, f.ncols())?;
        check("H columns", n, h.ncols())?;
        check("Q size", n, q.nrows())?;
        check("R size", h.nrows(), r.nrows())?;
        check("mu0 size", n, mu0.len())?;
        check("Sigma0 size", n, sigma0.nrows())?;
        crate::linalg::validate_psd(&sigma0, "initial covariance")?;
        Ok(Self {
            f,
            h,
            process: Covariance::new(q, "process noise Q")?,
            measurement: Covariance::new(r, "measurement noise R")?,
            mu0,
            sigma0,
        })
    }

    pub fn transition_matrix(&self) -> &Matrix {
        &self.f
    }

    pub fn observation_matrix(&self) -> &Matrix {
        &self.h
    }
}

impl StateSpaceModel for LinearGaussian {
    fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    fn transition_mean(&self, x: &Vector, _t: usize) -> Vector {
        &self.f * x
    }

    fn jacobian_f(&self, _x: &Vector, _t: usize) -> Matrix {
        self.f.clone()
    }

    fn process_noise(&self) -> &Covariance {
        &self.process
    }

    fn measurement_mean(&self, x: &Vector, _t: usize) -> Vector {
        &self.h * x
    }

    fn jacobian_h(&self, _x: &Vector, _t: usize) -> Matrix {
        self.h.clone()
    }

    fn measurement_noise(&self) -> &Covariance {
        &self.measurement
    }

    fn initial_mean(&self) -> Vector {
        self.mu0.clone()
    }

    fn initial_cov(&self) -> Matrix {
        self.sigma0.clone()
    }
}
