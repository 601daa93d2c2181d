//! Dense linear-algebra helpers shared by the filters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

const SYMMETRY_TOL: f64 = 1e-9;
const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-6;

/// Replaces `m` with `(m + m^T) / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}

/// Cholesky factorization of a matrix that must be symmetric positive definite.
pub fn cholesky(m: &Matrix, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(Error::NotPositiveDefinite(what));
    }
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite(what))
}

/// Checks that `m` is symmetric positive definite.
pub fn validate_spd(m: &Matrix, what: &'static str) -> Result<()> {
    cholesky(m, what).map(|_| ())
}

/// Checks symmetric positive semi-definite up to a small eigenvalue tolerance.
pub fn validate_psd(m: &Matrix, what: &'static str) -> Result<()> {
    if !is_symmetric(m, SYMMETRY_TOL) || min_eigenvalue(m) < -1e-10 * m.amax().max(1.0) {
        return Err(Error::NotPositiveDefinite(what));
    }
    Ok(())
}

/// Lower-triangular square root with diagonal jitter escalation
/// (1e-12, 1e-11, ..., 1e-6) when the plain factorization fails.
pub fn cholesky_lower_jittered(m: &Matrix, what: &'static str) -> Result<Matrix> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c.l());
    }
    let n = sym.nrows();
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * 1.000_001 {
        let trial = &sym + Matrix::identity(n, n) * jitter;
        if let Some(c) = Cholesky::new(trial) {
            return Ok(c.l());
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite(what))
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Draws `mean + L z` with `z ~ N(0, I)`, where `lower` is a Cholesky factor.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &Vector, lower: &Matrix, rng: &mut R) -> Vector {
    let z = standard_normal_vector(mean.len(), rng);
    mean + lower * z
}

pub fn standard_normal_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    Vector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Relative error `|a - b| / |b|` in the Frobenius norm (absolute when `b = 0`).
pub fn relative_error<R, C, S1, S2>(
    a: &nalgebra::Matrix<f64, R, C, S1>,
    b: &nalgebra::Matrix<f64, R, C, S2>,
) -> f64
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S1: nalgebra::storage::Storage<f64, R, C>,
    S2: nalgebra::storage::Storage<f64, R, C>,
{
    let diff = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

pub fn all_finite<R, C, S>(m: &nalgebra::Matrix<f64, R, C, S>) -> bool
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S: nalgebra::storage::Storage<f64, R, C>,
{
    m.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let mut m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        symmetrize(&mut m);
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 3.0]));
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let indefinite = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(validate_spd(&indefinite, "m").is_err());
        let asym = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(validate_spd(&asym, "m").is_err());
        assert!(validate_spd(&Matrix::identity(3, 3), "m").is_ok());
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let psd = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = cholesky_lower_jittered(&psd, "psd").unwrap();
        assert!(relative_error(&(&l * l.transpose()), &psd) < 1e-5);
        let neg = -Matrix::identity(2, 2);
        assert!(cholesky_lower_jittered(&neg, "neg").is_err());
    }

    #[test]
    fn gaussian_sampling_matches_covariance() {
        let cov = Matrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let l = cholesky(&cov, "cov").unwrap().l();
        let mean = Vector::from_vec(vec![1.0, -1.0]);
        let mut r = rng::stream(3, 0);
        let n = 50_000;
        let draws: Vec<Vector> = (0..n).map(|_| sample_gaussian(&mean, &l, &mut r)).collect();
        let m = draws.iter().fold(Vector::zeros(2), |acc, d| acc + d) / n as f64;
        let mut c = Matrix::zeros(2, 2);
        for d in &draws {
            let e = d - &m;
            c += &e * e.transpose();
        }
        c /= (n - 1) as f64;
        assert!(relative_error(&m, &mean) < 0.02);
        assert!(relative_error(&c, &cov) < 0.03);
    }
}
