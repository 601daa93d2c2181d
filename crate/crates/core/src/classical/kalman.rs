use nalgebra::Cholesky;

use super::GaussianBelief;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::models::StateSpaceModel;

/// `μ⁻ = Fμ`, `Σ⁻ = FΣF^T + Q`.
pub fn kf_predict(
    belief: &GaussianBelief,
    f: &Matrix,
    q: &Matrix,
    step: usize,
) -> Result<GaussianBelief> {
    check_square(f, belief.dim(), "transition matrix")?;
    GaussianBelief {
        mean: f * &belief.mean,
        cov: f * &belief.cov * f.transpose() + q,
    }
    .finalize(step)
}

/// Linear update given the predicted observation `hx` and observation matrix
/// `h`. The gain comes from a Cholesky solve against `S = HΣ⁻H^T + R`.
pub fn kalman_update(
    pred: &GaussianBelief,
    hx: &Vector,
    h: &Matrix,
    r: &Matrix,
    y: &Vector,
    step: usize,
) -> Result<GaussianBelief> {
    let innovation = y - hx;
    let (gain, s) = gain(pred, h, r, step)?;
    posterior(pred, &gain, &s, &innovation, step)
}

pub fn kf_step(
    belief: &GaussianBelief,
    f: &Matrix,
    q: &Matrix,
    h: &Matrix,
    r: &Matrix,
    y: &Vector,
) -> Result<GaussianBelief> {
    let pred = kf_predict(belief, f, q, 0)?;
    kalman_update(&pred, &(h * &pred.mean), h, r, y, 0)
}

/// Linearizes the transition at the current mean.
pub fn ekf_predict<M: StateSpaceModel + ?Sized>(
    belief: &GaussianBelief,
    model: &M,
    t: usize,
) -> Result<GaussianBelief> {
    let f = model.jacobian_f(&belief.mean, t);
    GaussianBelief {
        mean: model.transition_mean(&belief.mean, t),
        cov: &f * &belief.cov * f.transpose() + model.process_noise().matrix(),
    }
    .finalize(t)
}

/// Linearizes the measurement at the predicted mean.
pub fn ekf_update<M: StateSpaceModel + ?Sized>(
    pred: &GaussianBelief,
    model: &M,
    y: &Vector,
    t: usize,
) -> Result<GaussianBelief> {
    let h = model.jacobian_h(&pred.mean, t);
    let hx = model.measurement_mean(&pred.mean, t);
    kalman_update(pred, &hx, &h, model.measurement_noise().matrix(), y, t)
}

pub fn ekf_step<M: StateSpaceModel + ?Sized>(
    belief: &GaussianBelief,
    model: &M,
    y: &Vector,
    t: usize,
) -> Result<GaussianBelief> {
    ekf_update(&ekf_predict(belief, model, t)?, model, y, t)
}

/// Iterated update: relinearize `h` at the running iterate `x` with
/// innovation `y − h(x) − H(x)(μ⁻ − x)`, `iterations` times. The covariance
/// uses the final gain.
pub fn iekf_update<M: StateSpaceModel + ?Sized>(
    pred: &GaussianBelief,
    model: &M,
    y: &Vector,
    t: usize,
    iterations: usize,
) -> Result<GaussianBelief> {
    if iterations == 0 {
        return Err(Error::config("IEKF needs at least one iteration"));
    }
    let r = model.measurement_noise().matrix();
    let mut x = pred.mean.clone();
    let mut last = None;
    for _ in 0..iterations {
        let h = model.jacobian_h(&x, t);
        let innovation = (y - model.measurement_mean(&x, t)) - &h * (&pred.mean - &x);
        let (k, s) = gain(pred, &h, r, t)?;
        x = &pred.mean + &k * &innovation;
        if !linalg::all_finite(&x) {
            return Err(Error::Diverged {
                step: t,
                iterate: 0,
            });
        }
        last = Some((k, s));
    }
    let (k, s) = last.expect("at least one iteration");
    GaussianBelief {
        mean: x,
        cov: &pred.cov - &k * s * k.transpose(),
    }
    .finalize(t)
}

pub fn iekf_step<M: StateSpaceModel + ?Sized>(
    belief: &GaussianBelief,
    model: &M,
    y: &Vector,
    t: usize,
    iterations: usize,
) -> Result<GaussianBelief> {
    iekf_update(&ekf_predict(belief, model, t)?, model, y, t, iterations)
}

/// Returns the gain `Σ⁻H^T S^{-1}` and the innovation covariance `S`.
pub(super) fn gain(
    pred: &GaussianBelief,
    h: &Matrix,
    r: &Matrix,
    step: usize,
) -> Result<(Matrix, Matrix)> {
    if h.ncols() != pred.dim() {
        return Err(Error::Dimension {
            context: "observation matrix columns",
            expected: pred.dim(),
            got: h.ncols(),
        });
    }
    let pht = &pred.cov * h.transpose();
    let mut s = h * &pht + r;
    linalg::symmetrize(&mut s);
    let k = solve_right(&pht, &s, step)?;
    Ok((k, s))
}

/// `A S^{-1}` for symmetric positive definite `S`.
pub(super) fn solve_right(a: &Matrix, s: &Matrix, step: usize) -> Result<Matrix> {
    if !linalg::all_finite(s) {
        return Err(Error::Diverged { step, iterate: 0 });
    }
    let chol = Cholesky::new(s.clone()).ok_or(Error::SingularInnovation { step })?;
    Ok(chol.solve(&a.transpose()).transpose())
}

pub(super) fn posterior(
    pred: &GaussianBelief,
    gain: &Matrix,
    s: &Matrix,
    innovation: &Vector,
    step: usize,
) -> Result<GaussianBelief> {
    GaussianBelief {
        mean: &pred.mean + gain * innovation,
        cov: &pred.cov - gain * s * gain.transpose(),
    }
    .finalize(step)
}

fn check_square(m: &Matrix, n: usize, context: &'static str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension {
            context,
            expected: n,
            got: m.nrows(),
        });
    }
    Ok(())
}
