//! Gradient descent as Kalman filtering in the linear-Gaussian case.
//!
//! For a quadratic log-likelihood, `K` preconditioned gradient steps from the
//! prior mean land exactly on the Kalman posterior mean when the
//! preconditioner `M` and the prior covariance are related through a shared
//! generalized eigenbasis. Both directions of that map live here, together
//! with the recursion itself, its natural-gradient reading, and the
//! measurement-noise compensation that justifies fitting with `R = I`.

use nalgebra::SymmetricEigen;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Eigenvalues below this (relative to the largest) count as unobserved
/// directions.
const ZERO_EIG_TOL: f64 = 1e-12;

/// A basis `C` with `C^T A C = I` and `C^T B C = diag(eigs)`.
#[derive(Debug, Clone)]
pub struct SimDiag {
    pub basis: Matrix,
    /// Ascending.
    pub eigs: Vec<f64>,
}

impl SimDiag {
    /// Largest of `|C^T A C - I|` and `|C^T B C - diag(eigs)|`, entrywise.
    pub fn residual(&self, a: &Matrix, b: &Matrix) -> f64 {
        let c = &self.basis;
        let n = c.ncols();
        let ra = c.transpose() * a * c - Matrix::identity(n, n);
        let rb =
            c.transpose() * b * c - Matrix::from_diagonal(&Vector::from_column_slice(&self.eigs));
        ra.amax().max(rb.amax() / b.amax().max(1.0))
    }
}

/// Cholesky-whitens `a` and eigendecomposes the whitened `b`.
pub fn simultaneous_diagonalize(a: &Matrix, b: &Matrix) -> Result<SimDiag> {
    if !a.is_square() || !b.is_square() || a.nrows() != b.nrows() {
        return Err(Error::Dimension {
            context: "simultaneous_diagonalize",
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let n = a.nrows();
    let l = linalg::cholesky(a, "A")?.l();
    // W = L^{-1} B L^{-T}
    let linv_b = l
        .solve_lower_triangular(b)
        .ok_or(Error::NotPositiveDefinite("A"))?;
    let mut w = l
        .solve_lower_triangular(&linv_b.transpose())
        .ok_or(Error::NotPositiveDefinite("A"))?;
    linalg::symmetrize(&mut w);
    let eig = SymmetricEigen::new(w);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let v = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let eigs = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let basis = l
        .transpose()
        .solve_upper_triangular(&v)
        .ok_or(Error::NotPositiveDefinite("A"))?;
    let out = SimDiag { basis, eigs };
    debug_assert!(
        out.residual(a, b) < 1e-6,
        "simultaneous diagonalization residual"
    );
    Ok(out)
}

fn information_matrix(h: &Matrix, r: &Matrix) -> Result<Matrix> {
    let chol = linalg::cholesky(r, "R")?;
    let mut info = h.transpose() * chol.solve(h);
    linalg::symmetrize(&mut info);
    Ok(info)
}

fn spd_inverse(m: &Matrix, what: &'static str) -> Result<Matrix> {
    let mut inv = linalg::cholesky(m, what)?.inverse();
    linalg::symmetrize(&mut inv);
    Ok(inv)
}

fn zero_tol(eigs: &[f64]) -> f64 {
    ZERO_EIG_TOL * eigs.iter().fold(1.0f64, |m, e| m.max(e.abs()))
}

fn check_steps(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::config("K must be at least 1"))
    } else {
        Ok(())
    }
}

/// Per-direction step size `λ = (1 − (1 + r)^{−1/K}) / r`, with `λ = 1` for
/// an unobserved direction.
pub fn step_size_for_precision(r: f64, k: usize, tol: f64) -> f64 {
    if r.abs() <= tol {
        1.0
    } else {
        -(-(r.ln_1p()) / k as f64).exp_m1() / r
    }
}

/// Per-direction prior variance `σ = ((1 − s)^{−K} − 1) / s`, with `σ = 1`
/// for an unobserved direction.
pub fn prior_variance_for_step(s: f64, k: usize, tol: f64) -> Result<f64> {
    if s.abs() <= tol {
        return Ok(1.0);
    }
    if s >= 1.0 {
        return Err(Error::StepTooLarge { eigenvalue: s });
    }
    Ok((-(k as f64) * (-s).ln_1p()).exp_m1() / s)
}

/// The learning-rate matrix `M` that makes `K` steps of preconditioned GD
/// reproduce the Kalman update under prior covariance `sigma_minus`.
pub fn lr_matrix_from_prior(
    sigma_minus: &Matrix,
    h: &Matrix,
    r: &Matrix,
    k: usize,
) -> Result<Matrix> {
    check_steps(k)?;
    let prec = spd_inverse(sigma_minus, "prior covariance")?;
    let sd = simultaneous_diagonalize(&prec, &information_matrix(h, r)?)?;
    let tol = zero_tol(&sd.eigs);
    let lambda = Vector::from_iterator(
        sd.eigs.len(),
        sd.eigs
            .iter()
            .map(|&ri| step_size_for_precision(ri, k, tol)),
    );
    let mut m = &sd.basis * Matrix::from_diagonal(&lambda) * sd.basis.transpose();
    linalg::symmetrize(&mut m);
    Ok(m)
}

/// The prior covariance implied by `K` preconditioned GD steps with
/// learning-rate matrix `m`.
pub fn prior_from_lr_matrix(m: &Matrix, h: &Matrix, r: &Matrix, k: usize) -> Result<Matrix> {
    check_steps(k)?;
    let minv = spd_inverse(m, "learning-rate matrix")?;
    let sd = simultaneous_diagonalize(&minv, &information_matrix(h, r)?)?;
    let tol = zero_tol(&sd.eigs);
    let sigma = sd
        .eigs
        .iter()
        .map(|&si| prior_variance_for_step(si, k, tol))
        .collect::<Result<Vec<_>>>()?;
    let mut out =
        &sd.basis * Matrix::from_diagonal(&Vector::from_vec(sigma)) * sd.basis.transpose();
    linalg::symmetrize(&mut out);
    Ok(out)
}

/// `K` steps of `μ ← μ + M H^T R^{-1} (y − H μ)` from `mu_minus`.
pub fn santos_recursion(
    mu_minus: &Vector,
    m: &Matrix,
    h: &Matrix,
    r: &Matrix,
    y: &Vector,
    k: usize,
) -> Result<Vector> {
    let chol = linalg::cholesky(r, "R")?;
    let mut mu = mu_minus.clone();
    for _ in 0..k {
        let innov = chol.solve(&(y - h * &mu));
        mu += m * (h.transpose() * innov);
    }
    Ok(mu)
}

/// One fixed-covariance natural-gradient step on the expected log-likelihood,
/// with step size `rho`.
pub fn ngd_vi_update(
    x: &Vector,
    m: &Matrix,
    rho: f64,
    h: &Matrix,
    r: &Matrix,
    y: &Vector,
) -> Result<Vector> {
    let chol = linalg::cholesky(r, "R")?;
    let innov = chol.solve(&(y - h * x));
    Ok(x + (m * (h.transpose() * innov)) * rho)
}

/// `X = Σ* H^T (R*)^{-1} (H^T)^+`: a prior covariance that, paired with unit
/// measurement noise, yields the same Kalman gain as `(Σ*, R*)`.
pub fn compensated_prior(sigma_star: &Matrix, h: &Matrix, r_star: &Matrix) -> Result<Matrix> {
    let chol = linalg::cholesky(r_star, "R*")?;
    let ht_pinv = h
        .transpose()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::config(format!("pseudo-inverse failed: {e}")))?;
    Ok(sigma_star * h.transpose() * chol.inverse() * ht_pinv)
}

/// Kalman gain `Σ H^T (H Σ H^T + R)^{-1}`, computed with a linear solve so it
/// also accepts the non-symmetric compensated prior.
pub fn kalman_gain(sigma: &Matrix, h: &Matrix, r: &Matrix) -> Result<Matrix> {
    let s = h * sigma * h.transpose() + r;
    let pht = sigma * h.transpose();
    let lu = s.transpose().lu();
    lu.solve(&pht.transpose())
        .map(|kt| kt.transpose())
        .ok_or(Error::SingularInnovation { step: 0 })
}

/// `W^T W + 0.1 I` with standard-normal `W`.
pub fn random_spd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    let w = random_gaussian_matrix(n, n, rng);
    let mut m = w.transpose() * &w + Matrix::identity(n, n) * 0.1;
    linalg::symmetrize(&mut m);
    m
}

pub fn random_gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let z = linalg::standard_normal_vector(rows * cols, rng);
    Matrix::from_column_slice(rows, cols, z.as_slice())
}

/// A random linear-Gaussian update problem.
#[derive(Debug, Clone)]
pub struct LinearInstance {
    pub mu_minus: Vector,
    pub sigma_minus: Matrix,
    pub h: Matrix,
    pub r: Matrix,
    pub y: Vector,
    pub k: usize,
}

/// State dimension in `1..=max_dim`, observation dimension in `1..=max_dim`,
/// `K` in `1..=max_k`.
pub fn random_instance<R: Rng + ?Sized>(
    max_dim: usize,
    max_k: usize,
    rng: &mut R,
) -> LinearInstance {
    let n = rng.random_range(1..=max_dim);
    let m = rng.random_range(1..=max_dim);
    LinearInstance {
        mu_minus: linalg::standard_normal_vector(n, rng),
        sigma_minus: random_spd(n, rng),
        h: random_gaussian_matrix(m, n, rng),
        r: random_spd(m, rng),
        y: linalg::standard_normal_vector(m, rng),
        k: rng.random_range(1..=max_k),
    }
}

/// A random learning-rate matrix rescaled so that its largest generalized
/// eigenvalue against `H^T R^{-1} H` equals `s_max < 1`.
pub fn random_admissible_lr<R: Rng + ?Sized>(
    h: &Matrix,
    r: &Matrix,
    s_max: f64,
    rng: &mut R,
) -> Result<Matrix> {
    let m = random_spd(h.ncols(), rng);
    let sd = simultaneous_diagonalize(
        &spd_inverse(&m, "learning-rate matrix")?,
        &information_matrix(h, r)?,
    )?;
    let top = sd.eigs.last().copied().unwrap_or(0.0);
    Ok(if top > 0.0 { m * (s_max / top) } else { m })
}

/// Worst residuals across random instances; see [`verify`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub instances: usize,
    pub forward_max_rel: f64,
    pub reverse_max_rel: f64,
    pub roundtrip_max_rel: f64,
    pub gain_max_rel: f64,
    pub simdiag_max_residual: f64,
}

/// Checks both directions of the duality, the `M` round trip, and the gain
/// identity on `instances` random problems, against the gain-form Kalman
/// update.
pub fn verify<R: Rng + ?Sized>(instances: usize, rng: &mut R) -> Result<EquivalenceReport> {
    let mut rep = EquivalenceReport {
        instances,
        ..Default::default()
    };
    for _ in 0..instances {
        let inst = random_instance(5, 10, rng);
        let kf_mean = |sigma: &Matrix| -> Result<Vector> {
            let gain = kalman_gain(sigma, &inst.h, &inst.r)?;
            Ok(&inst.mu_minus + gain * (&inst.y - &inst.h * &inst.mu_minus))
        };

        let sd = simultaneous_diagonalize(
            &spd_inverse(&inst.sigma_minus, "prior")?,
            &information_matrix(&inst.h, &inst.r)?,
        )?;
        rep.simdiag_max_residual = rep.simdiag_max_residual.max(sd.residual(
            &spd_inverse(&inst.sigma_minus, "prior")?,
            &information_matrix(&inst.h, &inst.r)?,
        ));

        let m = lr_matrix_from_prior(&inst.sigma_minus, &inst.h, &inst.r, inst.k)?;
        let gd = santos_recursion(&inst.mu_minus, &m, &inst.h, &inst.r, &inst.y, inst.k)?;
        rep.forward_max_rel = rep
            .forward_max_rel
            .max(linalg::relative_error(&gd, &kf_mean(&inst.sigma_minus)?));

        let s_max = rng.random_range(0.05..0.7);
        let m2 = random_admissible_lr(&inst.h, &inst.r, s_max, rng)?;
        let prior = prior_from_lr_matrix(&m2, &inst.h, &inst.r, inst.k)?;
        let gd2 = santos_recursion(&inst.mu_minus, &m2, &inst.h, &inst.r, &inst.y, inst.k)?;
        rep.reverse_max_rel = rep
            .reverse_max_rel
            .max(linalg::relative_error(&gd2, &kf_mean(&prior)?));
        let back = lr_matrix_from_prior(&prior, &inst.h, &inst.r, inst.k)?;
        rep.roundtrip_max_rel = rep
            .roundtrip_max_rel
            .max(linalg::relative_error(&back, &m2));

        // gain identity needs a square invertible H
        let n = inst.sigma_minus.nrows();
        let hs = random_gaussian_matrix(n, n, rng);
        let rs = random_spd(n, rng);
        let x = compensated_prior(&inst.sigma_minus, &hs, &rs)?;
        let lhs = kalman_gain(&x, &hs, &Matrix::identity(n, n))?;
        let rhs = kalman_gain(&inst.sigma_minus, &hs, &rs)?;
        rep.gain_max_rel = rep.gain_max_rel.max(linalg::relative_error(&lhs, &rhs));
    }
    Ok(rep)
}
