//! Baseline filters: Kalman, extended and iterated extended Kalman,
//! unscented Kalman, and the bootstrap particle filter.

mod kalman;
mod particle;
mod ukf;

pub use kalman::{
    ekf_predict, ekf_step, ekf_update, iekf_step, iekf_update, kalman_update, kf_predict, kf_step,
};
pub use particle::{pf_step, pf_step_with, ParticleSet, PfOutput};
pub use ukf::{ukf_predict, ukf_sigma_points, ukf_step, ukf_update, SigmaPoints, UkfParams};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::estimates::FilterRun;
use crate::linalg::{self, Matrix, Vector};
use crate::models::{LinearGaussian, StateSpaceModel};

const MIN_EIG_TOL: f64 = 1e-10;

/// Gaussian filtering or predictive distribution `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianBelief {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() || !cov.is_square() {
            return Err(Error::Dimension {
                context: "belief covariance",
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        linalg::validate_psd(&cov, "belief covariance")?;
        Ok(Self { mean, cov })
    }

    pub fn from_model<M: StateSpaceModel + ?Sized>(model: &M) -> Result<Self> {
        Self::new(model.initial_mean(), model.initial_cov())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Symmetrizes the covariance and rejects non-finite or clearly
    /// indefinite results.
    pub(crate) fn finalize(mut self, step: usize) -> Result<Self> {
        linalg::symmetrize(&mut self.cov);
        if !linalg::all_finite(&self.mean) || !linalg::all_finite(&self.cov) {
            return Err(Error::Diverged { step, iterate: 0 });
        }
        let scale = self.cov.amax().max(1.0);
        let neg_diag = self
            .cov
            .diagonal()
            .iter()
            .any(|d| *d < -MIN_EIG_TOL * scale);
        if neg_diag {
            return Err(Error::NotPositiveDefinite("filter covariance"));
        }
        debug_assert!(
            linalg::min_eigenvalue(&self.cov) >= -1e-8 * scale,
            "covariance lost positive semi-definiteness"
        );
        Ok(self)
    }
}

/// Kalman filter over a linear-Gaussian model.
pub fn run_kf(model: &LinearGaussian, observations: &[Vector]) -> Result<FilterRun> {
    let f = model.transition_matrix();
    let h = model.observation_matrix();
    let q = model.process_noise().matrix();
    let r = model.measurement_noise().matrix();
    let mut belief = GaussianBelief::from_model(model)?;
    let mut run = FilterRun::with_capacity(observations.len());
    for (i, y) in observations.iter().enumerate() {
        let pred = kf_predict(&belief, f, q, i + 1)?;
        belief = kalman_update(&pred, &(h * &pred.mean), h, r, y, i + 1)?;
        run.push(pred.mean, belief.mean.clone());
    }
    Ok(run)
}

pub fn run_ekf<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Vector],
) -> Result<FilterRun> {
    run_gaussian(model, observations, |b, y, t| {
        let pred = ekf_predict(b, model, t)?;
        let post = ekf_update(&pred, model, y, t)?;
        Ok((pred, post))
    })
}

pub fn run_iekf<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Vector],
    iterations: usize,
) -> Result<FilterRun> {
    run_gaussian(model, observations, |b, y, t| {
        let pred = ekf_predict(b, model, t)?;
        let post = iekf_update(&pred, model, y, t, iterations)?;
        Ok((pred, post))
    })
}

pub fn run_ukf<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Vector],
) -> Result<FilterRun> {
    let params = UkfParams::for_dim(model.state_dim());
    run_gaussian(model, observations, |b, y, t| {
        let pred = ukf_predict(b, model, t, &params)?;
        let post = ukf_update(&pred, model, y, t, &params)?;
        Ok((pred, post))
    })
}

/// Bootstrap particle filter with `n` particles started from the model's
/// initial distribution.
pub fn run_pf<M, R>(model: &M, observations: &[Vector], n: usize, rng: &mut R) -> Result<FilterRun>
where
    M: StateSpaceModel + ?Sized,
    R: RngCore,
{
    let mut ps = ParticleSet::from_model(model, n, rng)?;
    let mut run = FilterRun::with_capacity(observations.len());
    for (i, y) in observations.iter().enumerate() {
        let out = pf_step(&ps, model, y, i + 1, rng)?;
        if out.flagged {
            run.flagged_steps.push(i + 1);
        }
        run.push(out.prediction, out.estimate);
        ps = out.particles;
    }
    Ok(run)
}

fn run_gaussian<M, S>(model: &M, observations: &[Vector], mut step: S) -> Result<FilterRun>
where
    M: StateSpaceModel + ?Sized,
    S: FnMut(&GaussianBelief, &Vector, usize) -> Result<(GaussianBelief, GaussianBelief)>,
{
    let mut belief = GaussianBelief::from_model(model)?;
    let mut run = FilterRun::with_capacity(observations.len());
    for (i, y) in observations.iter().enumerate() {
        let (pred, post) = step(&belief, y, i + 1)?;
        run.push(pred.mean, post.mean.clone());
        belief = post;
    }
    Ok(run)
}
