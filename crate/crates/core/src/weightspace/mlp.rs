//! A one-hidden-layer perceptron whose weights live in a single flat vector,
//! so that a filter can treat the weights as its state.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

const PROB_CLAMP: f64 = 1e-12;

/// `input → hidden → 1` with rectifier hidden units and a sigmoid output.
///
/// Flat layout: `W1` row-major (`hidden × input`), `b1`, `W2` (`hidden`), `b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input: usize,
    pub hidden: usize,
}

impl Default for MlpModel {
    fn default() -> Self {
        Self {
            input: 2,
            hidden: 16,
        }
    }
}

/// Unflattened parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Vector,
    pub w2: Vector,
    pub b2: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MlpModel {
    pub fn new(input: usize, hidden: usize) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::config("MLP layer sizes must be positive"));
        }
        Ok(Self { input, hidden })
    }

    /// Number of weights `D`.
    pub fn dim(&self) -> usize {
        (self.input + 1) * self.hidden + self.hidden + 1
    }

    pub fn unflatten(&self, w: &Vector) -> MlpParams {
        assert_eq!(w.len(), self.dim(), "weight vector has wrong dimension");
        let (i, h) = (self.input, self.hidden);
        let w1 = Matrix::from_row_slice(h, i, &w.as_slice()[..h * i]);
        let b1 = Vector::from_column_slice(&w.as_slice()[h * i..h * i + h]);
        let w2 = Vector::from_column_slice(&w.as_slice()[h * i + h..h * i + 2 * h]);
        MlpParams {
            w1,
            b1,
            w2,
            b2: w[self.dim() - 1],
        }
    }

    pub fn flatten(&self, p: &MlpParams) -> Vector {
        let mut out = Vec::with_capacity(self.dim());
        for r in 0..self.hidden {
            out.extend(p.w1.row(r).iter());
        }
        out.extend(p.b1.iter());
        out.extend(p.w2.iter());
        out.push(p.b2);
        Vector::from_vec(out)
    }

    /// He-style initialization: hidden weights `N(0, 2/input)`, output
    /// weights `N(0, 1/hidden)`, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let n1 = Normal::new(0.0, (2.0 / self.input as f64).sqrt()).expect("positive std");
        let n2 = Normal::new(0.0, (1.0 / self.hidden as f64).sqrt()).expect("positive std");
        let (i, h) = (self.input, self.hidden);
        let mut w = Vector::zeros(self.dim());
        for k in 0..h * i {
            w[k] = n1.sample(rng);
        }
        for k in 0..h {
            w[h * i + h + k] = n2.sample(rng);
        }
        w
    }

    fn check_batch(&self, w: &Vector, x: &Matrix) {
        assert_eq!(w.len(), self.dim(), "weight vector has wrong dimension");
        assert_eq!(
            x.ncols(),
            self.input,
            "feature width does not match the network input"
        );
    }

    /// Output logit for every row of `x`.
    pub fn logits(&self, w: &Vector, x: &Matrix) -> Vec<f64> {
        self.check_batch(w, x);
        let mut hidden = vec![0.0; self.hidden];
        (0..x.nrows())
            .map(|r| self.row_logit(w.as_slice(), x, r, &mut hidden))
            .collect()
    }

    /// Logit of row `r`, leaving hidden pre-activations in `hidden`.
    fn row_logit(&self, w: &[f64], x: &Matrix, r: usize, hidden: &mut [f64]) -> f64 {
        let (ni, nh) = (self.input, self.hidden);
        let (w1, rest) = w.split_at(nh * ni);
        let (b1, rest) = rest.split_at(nh);
        let (w2, b2) = rest.split_at(nh);
        let mut z = b2[0];
        for j in 0..nh {
            let mut a = b1[j];
            for i in 0..ni {
                a += w1[j * ni + i] * x[(r, i)];
            }
            hidden[j] = a;
            z += w2[j] * a.max(0.0);
        }
        z
    }

    /// Class-1 probability for every row of `x`.
    pub fn forward(&self, w: &Vector, x: &Matrix) -> Vec<f64> {
        self.logits(w, x).into_iter().map(sigmoid).collect()
    }

    /// Mean binary cross-entropy and its gradient with respect to `w`.
    pub fn loss_grad(&self, w: &Vector, x: &Matrix, y: &[f64]) -> (f64, Vector) {
        self.check_batch(w, x);
        assert_eq!(x.nrows(), y.len(), "one label per row");
        let n = y.len().max(1) as f64;
        let (ni, nh) = (self.input, self.hidden);
        let ws = w.as_slice();
        let w2 = &ws[nh * ni + nh..nh * ni + 2 * nh];
        let mut grad = Vector::zeros(self.dim());
        let g = grad.as_mut_slice();
        let mut loss = 0.0;
        let mut hidden = vec![0.0; nh];
        for (r, &label) in y.iter().enumerate() {
            let prob = sigmoid(self.row_logit(ws, x, r, &mut hidden));
            let pc = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            loss -= label * pc.ln() + (1.0 - label) * (1.0 - pc).ln();

            let dz = (prob - label) / n;
            g[nh * ni + 2 * nh] += dz;
            for (j, &a) in hidden.iter().enumerate() {
                if a > 0.0 {
                    g[nh * ni + nh + j] += dz * a;
                    let da = dz * w2[j];
                    g[nh * ni + j] += da;
                    for i in 0..ni {
                        g[j * ni + i] += da * x[(r, i)];
                    }
                }
            }
        }
        (loss / n, grad)
    }

    /// Sum of per-example BCE, the negative log-likelihood of the labels.
    pub fn total_bce(&self, w: &Vector, x: &Matrix, y: &[f64]) -> f64 {
        self.forward(w, x)
            .into_iter()
            .zip(y)
            .map(|(p, &label)| {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
            })
            .sum()
    }

    /// Fraction of rows classified correctly at threshold 0.5.
    pub fn accuracy(&self, w: &Vector, x: &Matrix, y: &[f64]) -> f64 {
        if y.is_empty() {
            return f64::NAN;
        }
        let hits = self
            .logits(w, x)
            .into_iter()
            .zip(y)
            .filter(|(z, &label)| (*z > 0.0) == (label > 0.5))
            .count();
        hits as f64 / y.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::fd_gradient;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn batch(n: usize, rng: &mut impl Rng) -> (Matrix, Vec<f64>) {
        let x = Matrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
        let y = (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
            .collect();
        (x, y)
    }

    #[test]
    fn dimension_and_round_trip() {
        let m = MlpModel::default();
        assert_eq!(m.dim(), 65);
        let mut r = rng::stream(1, 0);
        let w = Vector::from_fn(65, |_, _| r.random_range(-1.0..1.0));
        assert_eq!(m.flatten(&m.unflatten(&w)), w);
    }

    #[test]
    fn zero_weights_give_one_half() {
        let m = MlpModel::default();
        let x = Matrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, -4.0, 100.0, 3.0]);
        for p in m.forward(&Vector::zeros(65), &x) {
            assert_eq!(p, 0.5);
        }
    }

    #[test]
    fn saturated_output_bias() {
        let m = MlpModel::default();
        let mut w = Vector::zeros(65);
        w[64] = 20.0;
        let p = m.forward(&w, &Matrix::from_row_slice(1, 2, &[0.3, -0.7]))[0];
        assert!((1.0 - p).abs() < 1e-8);
    }

    #[test]
    fn single_hidden_unit_by_hand() {
        // Unit 0 only: a = 0.5*x1 - 2*x2 + 0.1, z = 1.5*relu(a) - 0.3.
        let m = MlpModel::default();
        let mut p = m.unflatten(&Vector::zeros(65));
        p.w1[(0, 0)] = 0.5;
        p.w1[(0, 1)] = -2.0;
        p.b1[0] = 0.1;
        p.w2[0] = 1.5;
        p.b2 = -0.3;
        let w = m.flatten(&p);
        let x = Matrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        let z = m.logits(&w, &x);
        let a0: f64 = 0.5 + 2.0 + 0.1;
        assert!((z[0] - (1.5 * a0 - 0.3)).abs() < 1e-12);
        // Second row has a negative pre-activation, so only the bias remains.
        assert!((z[1] - (-0.3)).abs() < 1e-12);
        assert!((m.forward(&w, &x)[0] - 1.0 / (1.0 + (-(1.5 * a0 - 0.3f64)).exp())).abs() < 1e-12);
    }

    #[test]
    fn balanced_batch_at_zero_costs_ln2() {
        let m = MlpModel::default();
        let x = Matrix::from_row_slice(4, 2, &[1.0, 2.0, -1.0, 0.0, 3.0, 3.0, 0.5, -0.5]);
        let (loss, _) = m.loss_grad(&Vector::zeros(65), &x, &[1.0, 0.0, 1.0, 0.0]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_predictions() {
        let m = MlpModel::default();
        let mut w = Vector::zeros(65);
        w[64] = 40.0;
        let x = Matrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.0]);
        let (loss, grad) = m.loss_grad(&w, &x, &[1.0, 1.0]);
        assert!(loss < 1e-10);
        assert!(grad.norm() <= 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences_on_50_pairs() {
        let m = MlpModel::default();
        let mut r = rng::stream(42, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let w = Vector::from_fn(65, |_, _| r.random_range(-1.0..1.0));
            let (x, y) = batch(8, &mut r);
            let (_, g) = m.loss_grad(&w, &x, &y);
            let fd = fd_gradient(|v| m.loss_grad(v, &x, &y).0, &w, 1e-6);
            worst = worst.max((&g - &fd).norm() / fd.norm().max(1e-12));
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn total_bce_is_n_times_mean() {
        let m = MlpModel::default();
        let mut r = rng::stream(3, 0);
        let w = m.init(&mut r);
        let (x, y) = batch(10, &mut r);
        let (mean, _) = m.loss_grad(&w, &x, &y);
        assert!((m.total_bce(&w, &x, &y) - 10.0 * mean).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn probabilities_stay_in_unit_interval(seed in 0u64..500) {
            let m = MlpModel::default();
            let mut r = rng::stream(seed, 0);
            let w = m.init(&mut r) * 3.0;
            let (x, _) = batch(6, &mut r);
            for p in m.forward(&w, &x) {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
