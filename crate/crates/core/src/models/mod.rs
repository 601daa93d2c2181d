//! State-space models and the simulator.
//!
//! A model supplies the transition mean `f_t`, the measurement mean `h`,
//! their Jacobians, Gaussian process/measurement noise, and the initial
//! distribution. Filters only talk to models through [`StateSpaceModel`].

mod integrators;
mod linear;
mod lorenz;
mod trajectory;
mod ungm;

pub use integrators::{rk4_jacobian, step_euler, step_euler_maruyama, step_rk4};
pub use linear::LinearGaussian;
pub use lorenz::{lorenz_drift, lorenz_drift_jacobian, Dynamics, LorenzConfig, LorenzModel};
pub use trajectory::{fmt_sig12 as trajectory_fmt, Trajectory};
pub use ungm::{ungm_measurement_mean, ungm_transition_mean, Ungm};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// A validated Gaussian noise covariance with a cached square root and precision.
///
/// Positive semi-definite matrices are accepted so that noiseless models can
/// be expressed; the square root then comes from the eigendecomposition and
/// the precision is the pseudo-inverse.
#[derive(Debug, Clone)]
pub struct Covariance {
    cov: Matrix,
    lower: Matrix,
    precision: Matrix,
}

impl Covariance {
    pub fn new(cov: Matrix, what: &'static str) -> Result<Self> {
        linalg::validate_psd(&cov, what)?;
        let (lower, precision) = match nalgebra::Cholesky::new(cov.clone()) {
            Some(c) => (c.l(), c.inverse()),
            None => {
                let eig = nalgebra::SymmetricEigen::new(cov.clone());
                let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                let lower = &eig.eigenvectors * Matrix::from_diagonal(&sqrt);
                let precision = cov
                    .clone()
                    .pseudo_inverse(1e-12)
                    .map_err(|_| Error::NotPositiveDefinite(what))?;
                (lower, precision)
            }
        };
        Ok(Self {
            cov,
            lower,
            precision,
        })
    }

    pub fn scaled_identity(dim: usize, variance: f64, what: &'static str) -> Result<Self> {
        Self::new(Matrix::identity(dim, dim) * variance, what)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.cov
    }

    /// A square root `L` with `L L^T = cov`.
    pub fn sqrt(&self) -> &Matrix {
        &self.lower
    }

    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }
}

/// The model contract every filter consumes.
///
/// `t` is the index of the state being produced (`x_t = f_t(x_{t-1}) + q`).
pub trait StateSpaceModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    fn transition_mean(&self, x: &Vector, t: usize) -> Vector;
    fn jacobian_f(&self, x: &Vector, t: usize) -> Matrix;
    fn process_noise(&self) -> &Covariance;

    fn measurement_mean(&self, x: &Vector, t: usize) -> Vector;
    fn jacobian_h(&self, x: &Vector, t: usize) -> Matrix;
    fn measurement_noise(&self) -> &Covariance;

    fn initial_mean(&self) -> Vector;
    fn initial_cov(&self) -> Matrix;

    /// Physical time between consecutive steps.
    fn time_step(&self) -> f64 {
        1.0
    }

    /// Draw from the filter-side transition distribution `N(f_t(x), Q)`.
    fn transition_sample(&self, x: &Vector, t: usize, rng: &mut dyn RngCore) -> Vector {
        linalg::sample_gaussian(
            &self.transition_mean(x, t),
            self.process_noise().sqrt(),
            rng,
        )
    }

    /// Draw the next ground-truth state. Defaults to [`Self::transition_sample`];
    /// models whose truth comes from a finer integrator override it.
    fn truth_sample(&self, x: &Vector, t: usize, rng: &mut dyn RngCore) -> Vector {
        self.transition_sample(x, t, rng)
    }

    fn measurement_sample(&self, x: &Vector, t: usize, rng: &mut dyn RngCore) -> Vector {
        linalg::sample_gaussian(
            &self.measurement_mean(x, t),
            self.measurement_noise().sqrt(),
            rng,
        )
    }

    /// `½ (y - h(x))^T R^{-1} (y - h(x))`, constants dropped.
    fn neg_loglik(&self, x: &Vector, y: &Vector, t: usize) -> f64 {
        let resid = y - self.measurement_mean(x, t);
        0.5 * resid.dot(&(self.measurement_noise().precision() * &resid))
    }

    fn grad_neg_loglik(&self, x: &Vector, y: &Vector, t: usize) -> Vector {
        let resid = y - self.measurement_mean(x, t);
        -(self.jacobian_h(x, t).transpose() * (self.measurement_noise().precision() * resid))
    }
}

/// Gaussian negative log-likelihood `½‖y − h(x)‖²_R` and its gradient
/// `−H^T R^{-1} (y − h(x))`, where `hx = h(x)` and `jac_h` is the measurement
/// Jacobian at `x`.
pub fn neg_loglik_and_grad_gaussian(
    y: &Vector,
    hx: &Vector,
    jac_h: &Matrix,
    r: &Matrix,
) -> Result<(f64, Vector)> {
    if y.len() != hx.len() {
        return Err(Error::Dimension {
            context: "observation",
            expected: hx.len(),
            got: y.len(),
        });
    }
    let chol = linalg::cholesky(r, "measurement noise R")?;
    let resid = y - hx;
    let weighted = chol.solve(&resid);
    Ok((0.5 * resid.dot(&weighted), -(jac_h.transpose() * weighted)))
}

/// Squared-error loss `½‖y − h(x)‖²` and its gradient: the Gaussian
/// negative log-likelihood with `R = I`, which is what the implicit filter
/// optimizes in the benchmark configurations.
pub fn mse_loss_grad<M: StateSpaceModel + ?Sized>(
    model: &M,
    x: &Vector,
    y: &Vector,
    t: usize,
) -> (f64, Vector) {
    let resid = y - model.measurement_mean(x, t);
    let grad = -(model.jacobian_h(x, t).transpose() * &resid);
    (0.5 * resid.norm_squared(), grad)
}

/// Samples a trajectory of length `steps`: `x_0` from the initial
/// distribution, then `x_t` from [`StateSpaceModel::truth_sample`] and `y_t`
/// from the measurement distribution for `t = 1..=steps`.
pub fn simulate<M: StateSpaceModel + ?Sized>(
    model: &M,
    steps: usize,
    rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::config("trajectory length must be at least 1"));
    }
    let init = Covariance::new(model.initial_cov(), "initial covariance")?;
    let mut x = linalg::sample_gaussian(&model.initial_mean(), init.sqrt(), rng);
    let mut times = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    let mut observations = Vec::with_capacity(steps);
    for t in 1..=steps {
        x = model.truth_sample(&x, t, rng);
        let y = model.measurement_sample(&x, t, rng);
        times.push(t as f64 * model.time_step());
        states.push(x.clone());
        observations.push(y);
    }
    Trajectory::new(times, states, observations)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Central-difference gradient of a scalar function.
    pub fn fd_gradient(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
        Vector::from_iterator(
            x.len(),
            (0..x.len()).map(|i| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            }),
        )
    }

    /// Central-difference Jacobian of a vector function.
    pub fn fd_jacobian(f: impl Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Matrix {
        let m = f(x).len();
        let mut jac = Matrix::zeros(m, x.len());
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            jac.set_column(i, &((f(&xp) - f(&xm)) / (2.0 * h)));
        }
        jac
    }

    /// Relative error with an absolute floor, so near-zero derivatives do not
    /// blow up the ratio.
    pub fn fd_rel_err(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).norm() / b.norm().max(1e-3)
    }
}
