//! Rotating two-cluster classification task.
//!
//! Class 1 is centred at `radius·(cos θ_t, sin θ_t)` with `θ_t = ω t`, class 0
//! at the antipode, both with identity covariance.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftTask {
    /// Rotation per step, in radians.
    pub omega: f64,
    pub radius: f64,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub horizon: usize,
}

impl Default for DriftTask {
    fn default() -> Self {
        Self {
            omega: 2.0 * std::f64::consts::PI / 80.0,
            radius: 1.5,
            train_size: 32,
            validation_size: 16,
            test_size: 100,
            horizon: 80,
        }
    }
}

impl DriftTask {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.radius.is_finite() && self.radius >= 0.0) {
            return Err(Error::config(
                "drift task needs finite omega and non-negative radius",
            ));
        }
        if self.train_size == 0 || self.test_size == 0 || self.horizon == 0 {
            return Err(Error::config(
                "drift task sizes and horizon must be positive",
            ));
        }
        Ok(())
    }

    pub fn angle(&self, t: usize) -> f64 {
        self.omega * t as f64
    }

    /// Centre of the class-1 cluster at step `t`.
    pub fn center(&self, t: usize) -> Vector {
        let th = self.angle(t);
        Vector::from_vec(vec![self.radius * th.cos(), self.radius * th.sin()])
    }
}

/// Labelled points, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Everything drawn at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftBatch {
    pub train: LabeledBatch,
    pub validation: LabeledBatch,
    pub test: LabeledBatch,
}

fn draw<R: Rng + ?Sized>(center: &Vector, n: usize, rng: &mut R) -> LabeledBatch {
    let mut x = Matrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        let label = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let sign = if label > 0.5 { 1.0 } else { -1.0 };
        for c in 0..2 {
            let z: f64 = rng.sample(StandardNormal);
            x[(r, c)] = sign * center[c] + z;
        }
        y.push(label);
    }
    LabeledBatch { x, y }
}

/// Draws the train, validation, and test splits for step `t`.
pub fn drift_task_sample<R: Rng + ?Sized>(task: &DriftTask, t: usize, rng: &mut R) -> DriftBatch {
    let c = task.center(t);
    DriftBatch {
        train: draw(&c, task.train_size, rng),
        validation: draw(&c, task.validation_size, rng),
        test: draw(&c, task.test_size, rng),
    }
}

/// All `horizon` steps drawn in order from one stream, so every strategy
/// sees the same splits.
pub fn drift_task_data<R: Rng + ?Sized>(task: &DriftTask, rng: &mut R) -> Vec<DriftBatch> {
    (0..task.horizon)
        .map(|t| drift_task_sample(task, t, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn stationary_task_has_fixed_centres() {
        let task = DriftTask {
            omega: 0.0,
            ..DriftTask::default()
        };
        for t in 0..task.horizon {
            assert_eq!(task.center(t), task.center(0));
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let task = DriftTask::default();
        let a = drift_task_data(&task, &mut rng::stream(9, rng::DATA_STREAM));
        let b = drift_task_data(&task, &mut rng::stream(9, rng::DATA_STREAM));
        assert_eq!(a, b);
        assert_eq!(a.len(), 80);
        assert_eq!(a[0].train.len(), 32);
        assert_eq!(a[0].validation.len(), 16);
        assert_eq!(a[0].test.len(), 100);
    }

    fn phi(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26 erf, good to 1.5e-7.
        let z = x / std::f64::consts::SQRT_2;
        let t = 1.0 / (1.0 + 0.3275911 * z.abs());
        let poly = t
            * (0.254829592
                + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
        let erf = 1.0 - poly * (-z * z).exp();
        0.5 * (1.0 + erf.copysign(z))
    }

    #[test]
    fn bayes_linear_rule_hits_phi_radius() {
        let mut r = rng::stream(5, rng::DATA_STREAM);
        for radius in [0.5, 1.0, 1.5] {
            let task = DriftTask {
                radius,
                test_size: 2000,
                ..DriftTask::default()
            };
            let mut hits = 0usize;
            let mut total = 0usize;
            for t in (0..80).step_by(4) {
                let b = drift_task_sample(&task, t, &mut r);
                let c = task.center(t);
                for i in 0..b.test.len() {
                    let proj = b.test.x[(i, 0)] * c[0] + b.test.x[(i, 1)] * c[1];
                    hits += usize::from((proj > 0.0) == (b.test.y[i] > 0.5));
                    total += 1;
                }
            }
            let acc = hits as f64 / total as f64;
            let expect = phi(radius);
            // 40000 Bernoulli draws: standard error below 0.0025.
            assert!(
                (acc - expect).abs() < 0.01,
                "radius {radius}: {acc} vs {expect}"
            );
        }
    }

    #[test]
    fn labels_roughly_balanced() {
        let task = DriftTask {
            test_size: 5000,
            ..DriftTask::default()
        };
        let b = drift_task_sample(&task, 3, &mut rng::stream(1, rng::DATA_STREAM));
        let frac = b.test.y.iter().sum::<f64>() / 5000.0;
        assert!((frac - 0.5).abs() < 0.03);
    }
}
