//! Fixed-step integrators for autonomous drifts `dx = d(x) dt (+ alpha dW)`.

use rand::RngCore;

use crate::linalg::{self, Matrix, Vector};

/// Euler–Maruyama over an interval `dt`, split into `substeps` inner steps of
/// size `h = dt / substeps`: `x <- x + h d(x) + alpha sqrt(h) xi`.
pub fn step_euler_maruyama<D>(
    drift: D,
    x: &Vector,
    dt: f64,
    substeps: usize,
    alpha: f64,
    rng: &mut dyn RngCore,
) -> Vector
where
    D: Fn(&Vector) -> Vector,
{
    let substeps = substeps.max(1);
    let h = dt / substeps as f64;
    let noise_scale = alpha * h.sqrt();
    let mut state = x.clone();
    for _ in 0..substeps {
        let d = drift(&state);
        state.axpy(h, &d, 1.0);
        if noise_scale != 0.0 {
            let xi = linalg::standard_normal_vector(state.len(), rng);
            state.axpy(noise_scale, &xi, 1.0);
        }
    }
    state
}

/// One classical fourth-order Runge–Kutta step.
pub fn step_rk4<D>(drift: D, x: &Vector, dt: f64) -> Vector
where
    D: Fn(&Vector) -> Vector,
{
    let k1 = drift(x);
    let k2 = drift(&(x + &k1 * (0.5 * dt)));
    let k3 = drift(&(x + &k2 * (0.5 * dt)));
    let k4 = drift(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

pub fn step_euler<D>(drift: D, x: &Vector, dt: f64) -> Vector
where
    D: Fn(&Vector) -> Vector,
{
    x + drift(x) * dt
}

/// Exact Jacobian of the RK4 map `x -> step_rk4(drift, x, dt)`, obtained by
/// differentiating each stage.
pub fn rk4_jacobian<D, J>(drift: D, drift_jac: J, x: &Vector, dt: f64) -> Matrix
where
    D: Fn(&Vector) -> Vector,
    J: Fn(&Vector) -> Matrix,
{
    let n = x.len();
    let eye = Matrix::identity(n, n);
    let k1 = drift(x);
    let dk1 = drift_jac(x);
    let x2 = x + &k1 * (0.5 * dt);
    let k2 = drift(&x2);
    let dk2 = drift_jac(&x2) * (&eye + &dk1 * (0.5 * dt));
    let x3 = x + &k2 * (0.5 * dt);
    let k3 = drift(&x3);
    let dk3 = drift_jac(&x3) * (&eye + &dk2 * (0.5 * dt));
    let x4 = x + &k3 * dt;
    let dk4 = drift_jac(&x4) * (&eye + &dk3 * dt);
    eye + (dk1 + dk2 * 2.0 + dk3 * 2.0 + dk4) * (dt / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::lorenz::{lorenz_drift, LorenzConfig};
    use crate::rng;
    use rand::Rng;

    fn decay(x: &Vector) -> Vector {
        -x
    }

    #[test]
    fn em_without_noise_or_drift_is_identity() {
        let x = Vector::from_vec(vec![1.0, -2.0, 3.0]);
        let out = step_euler_maruyama(
            |v: &Vector| Vector::zeros(v.len()),
            &x,
            0.5,
            100,
            0.0,
            &mut rng::stream(0, 0),
        );
        assert_eq!(out, x);
    }

    #[test]
    fn em_linear_decay_matches_exponential() {
        let x = Vector::from_vec(vec![2.0, -0.5]);
        let out = step_euler_maruyama(decay, &x, 0.02, 10_000, 0.0, &mut rng::stream(0, 0));
        let exact = &x * (-0.02_f64).exp();
        assert!(linalg::relative_error(&out, &exact) < 1e-5);
    }

    #[test]
    fn em_brownian_variance() {
        let mut r = rng::stream(9, 0);
        let zero = Vector::zeros(1);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                step_euler_maruyama(
                    |v: &Vector| Vector::zeros(v.len()),
                    &zero,
                    1.0,
                    10_000,
                    1.0,
                    &mut r,
                )[0]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn rk4_on_linear_ode_is_taylor_polynomial() {
        let out = step_rk4(decay, &Vector::from_element(1, 1.0), 0.1);
        let taylor = 1.0 - 0.1 + 0.005 - 0.1_f64.powi(3) / 6.0 + 0.1_f64.powi(4) / 24.0;
        assert!((out[0] - taylor).abs() < 1e-15);
        assert!((out[0] - 0.9048375).abs() < 1e-7);
        let x = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(step_rk4(|v: &Vector| Vector::zeros(v.len()), &x, 0.3), x);
    }

    #[test]
    fn rk4_small_step_is_first_order() {
        let cfg = LorenzConfig::default();
        let x = Vector::from_vec(vec![1.0, 1.0, 1.0]);
        let out = step_rk4(|v: &Vector| lorenz_drift(v, &cfg), &x, 1e-6);
        let f = Vector::from_vec(vec![0.0, 26.0, 1.0 - 8.0 / 3.0]);
        let first_order = &x + &f * 1e-6;
        // the dt^2/2 J f term is ~1.3e-10 here, so the comparison includes it
        let jf = crate::models::lorenz_drift_jacobian(&x, &cfg) * &f;
        let second_order = &first_order + jf * 0.5e-12;
        assert!((&out - second_order).amax() < 1e-10);
        assert!((out - first_order).amax() < 2e-10);
    }

    #[test]
    fn euler_examples() {
        assert!((step_euler(decay, &Vector::from_element(1, 1.0), 0.1)[0] - 0.9).abs() < 1e-15);
        let cfg = LorenzConfig::default();
        let out = step_euler(
            |v: &Vector| lorenz_drift(v, &cfg),
            &Vector::from_vec(vec![1.0, 0.0, 0.0]),
            0.02,
        );
        assert!((out - Vector::from_vec(vec![0.8, 0.56, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn rk4_beats_euler_on_lorenz() {
        let cfg = LorenzConfig::default();
        let drift = |v: &Vector| lorenz_drift(v, &cfg);
        let mut r = rng::stream(21, 0);
        let trials = 100;
        let mut wins = 0;
        for _ in 0..trials {
            let x = Vector::from_iterator(3, (0..3).map(|_| r.random_range(-20.0..20.0)))
                + Vector::from_vec(vec![0.0, 0.0, 25.0]);
            let reference = step_euler_maruyama(drift, &x, 0.02, 10_000, 0.0, &mut r);
            let e_rk4 = (step_rk4(drift, &x, 0.02) - &reference).norm();
            let e_euler = (step_euler(drift, &x, 0.02) - &reference).norm();
            if e_rk4 <= e_euler {
                wins += 1;
            }
        }
        assert!(
            wins as f64 >= 0.95 * trials as f64,
            "rk4 won {wins}/{trials}"
        );
    }
}
