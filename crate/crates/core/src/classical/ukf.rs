use super::kalman::{posterior, solve_right};
use super::GaussianBelief;
use crate::error::Result;
use crate::linalg::{self, Matrix, Vector};
use crate::models::StateSpaceModel;

/// Scaling parameters with `α = 1`, `β = 3 − n`, `λ = α²(n + β) − n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl UkfParams {
    pub fn for_dim(n: usize) -> Self {
        let n = n as f64;
        let alpha = 1.0;
        let beta = 3.0 - n;
        Self {
            alpha,
            beta,
            lambda: alpha * alpha * (n + beta) - n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SigmaPoints {
    pub points: Vec<Vector>,
    pub mean_weights: Vec<f64>,
    pub cov_weights: Vec<f64>,
}

impl SigmaPoints {
    fn weighted_mean(&self, values: &[Vector]) -> Vector {
        let mut acc = Vector::zeros(values[0].len());
        for (w, v) in self.mean_weights.iter().zip(values) {
            acc.axpy(*w, v, 1.0);
        }
        acc
    }

    fn weighted_cross(&self, a: &[Vector], ma: &Vector, b: &[Vector], mb: &Vector) -> Matrix {
        let mut acc = Matrix::zeros(ma.len(), mb.len());
        for ((w, x), y) in self.cov_weights.iter().zip(a).zip(b) {
            acc += (x - ma) * (y - mb).transpose() * *w;
        }
        acc
    }
}

/// `2n + 1` points `μ`, `μ ± √(n+λ) L_i` where `L` is the (jittered)
/// lower Cholesky factor. Non-central weights are `1 / (2(n+λ))`.
pub fn ukf_sigma_points(belief: &GaussianBelief, params: &UkfParams) -> Result<SigmaPoints> {
    let n = belief.dim();
    let nl = n as f64 + params.lambda;
    let lower = linalg::cholesky_lower_jittered(&belief.cov, "sigma-point covariance")? * nl.sqrt();
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(belief.mean.clone());
    for i in 0..n {
        points.push(&belief.mean + lower.column(i));
    }
    for i in 0..n {
        points.push(&belief.mean - lower.column(i));
    }
    let wi = 1.0 / (2.0 * nl);
    let w0m = params.lambda / nl;
    let w0c = w0m + 1.0 - params.alpha * params.alpha + params.beta;
    let mut mean_weights = vec![wi; 2 * n + 1];
    let mut cov_weights = mean_weights.clone();
    mean_weights[0] = w0m;
    cov_weights[0] = w0c;
    Ok(SigmaPoints {
        points,
        mean_weights,
        cov_weights,
    })
}

/// Unscented transform through the transition mean, plus `Q`.
pub fn ukf_predict<M: StateSpaceModel + ?Sized>(
    belief: &GaussianBelief,
    model: &M,
    t: usize,
    params: &UkfParams,
) -> Result<GaussianBelief> {
    let sp = ukf_sigma_points(belief, params)?;
    let prop: Vec<Vector> = sp
        .points
        .iter()
        .map(|x| model.transition_mean(x, t))
        .collect();
    let mean = sp.weighted_mean(&prop);
    let cov = sp.weighted_cross(&prop, &mean, &prop, &mean) + model.process_noise().matrix();
    GaussianBelief { mean, cov }.finalize(t)
}

/// Fresh sigma points around the prediction, pushed through `h`.
pub fn ukf_update<M: StateSpaceModel + ?Sized>(
    pred: &GaussianBelief,
    model: &M,
    y: &Vector,
    t: usize,
    params: &UkfParams,
) -> Result<GaussianBelief> {
    let sp = ukf_sigma_points(pred, params)?;
    let ys: Vec<Vector> = sp
        .points
        .iter()
        .map(|x| model.measurement_mean(x, t))
        .collect();
    let y_hat = sp.weighted_mean(&ys);
    let mut s = sp.weighted_cross(&ys, &y_hat, &ys, &y_hat) + model.measurement_noise().matrix();
    linalg::symmetrize(&mut s);
    let c = sp.weighted_cross(&sp.points, &pred.mean, &ys, &y_hat);
    let gain = solve_right(&c, &s, t)?;
    posterior(pred, &gain, &s, &(y - y_hat), t)
}

pub fn ukf_step<M: StateSpaceModel + ?Sized>(
    belief: &GaussianBelief,
    model: &M,
    y: &Vector,
    t: usize,
    params: &UkfParams,
) -> Result<GaussianBelief> {
    ukf_update(&ukf_predict(belief, model, t, params)?, model, y, t, params)
}
