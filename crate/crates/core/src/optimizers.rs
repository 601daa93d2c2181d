//! Gradient-history optimizers.
//!
//! Each optimizer maps the current loss gradient (and its accumulated
//! history) to an additive update: the caller always applies
//! `m <- m + delta`, with the descent sign already inside `delta`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const ADADELTA_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[serde(alias = "sgd")]
    Gd,
    Adagrad,
    Adadelta,
    Rmsprop,
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::Adam,
        OptimizerKind::Rmsprop,
        OptimizerKind::Adagrad,
        OptimizerKind::Adadelta,
        OptimizerKind::Gd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Gd => "gd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Adam => "adam",
        }
    }

    fn uses_learning_rate(self) -> bool {
        self != OptimizerKind::Adadelta
    }
}

/// Optimizer family and hyperparameters.
///
/// `gamma` is the squared-gradient decay for RMSprop and Adadelta; `beta1`
/// and `beta2` are Adam's moment decays. Unused fields are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_decay")]
    pub gamma: f64,
    #[serde(default = "default_decay")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    /// Defaults to 1e-8 (1e-6 for Adadelta).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

fn default_learning_rate() -> f64 {
    1e-3
}

fn default_decay() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

impl OptimizerSpec {
    fn base(kind: OptimizerKind) -> Self {
        Self {
            kind,
            learning_rate: default_learning_rate(),
            gamma: default_decay(),
            beta1: default_decay(),
            beta2: default_beta2(),
            epsilon: None,
        }
    }

    pub fn gd(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::base(OptimizerKind::Gd)
        }
    }

    pub fn adagrad(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::base(OptimizerKind::Adagrad)
        }
    }

    pub fn rmsprop(learning_rate: f64, gamma: f64) -> Self {
        Self {
            learning_rate,
            gamma,
            ..Self::base(OptimizerKind::Rmsprop)
        }
    }

    pub fn adadelta(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::base(OptimizerKind::Adadelta)
        }
    }

    pub fn adam(learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            ..Self::base(OptimizerKind::Adam)
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(match self.kind {
            OptimizerKind::Adadelta => ADADELTA_EPSILON,
            _ => DEFAULT_EPSILON,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if self.kind.uses_learning_rate()
            && !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
        {
            // a zero step is allowed for GD so that "no update" can be expressed
            if !(self.kind == OptimizerKind::Gd && self.learning_rate == 0.0) {
                return Err(Error::config(format!(
                    "{}: learning rate must be positive",
                    self.kind.name()
                )));
            }
        }
        match self.kind {
            OptimizerKind::Rmsprop | OptimizerKind::Adadelta if !in_unit(self.gamma) => {
                return Err(Error::config(format!(
                    "{}: gamma must lie in (0, 1)",
                    self.kind.name()
                )));
            }
            OptimizerKind::Adam if !in_unit(self.beta1) || !in_unit(self.beta2) => {
                return Err(Error::config("adam: beta1 and beta2 must lie in (0, 1)"));
            }
            _ => {}
        }
        if !(self.epsilon() > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        Ok(())
    }

    /// Compact `name(eta=..., ...)` label used in result tables.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for OptimizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            OptimizerKind::Gd | OptimizerKind::Adagrad => {
                write!(f, "{}(eta={})", self.kind.name(), self.learning_rate)
            }
            OptimizerKind::Rmsprop => write!(
                f,
                "rmsprop(eta={} gamma={})",
                self.learning_rate, self.gamma
            ),
            OptimizerKind::Adadelta => write!(f, "adadelta(gamma={})", self.gamma),
            OptimizerKind::Adam => write!(
                f,
                "adam(eta={} beta1={} beta2={})",
                self.learning_rate, self.beta1, self.beta2
            ),
        }
    }
}

/// Accumulators of one optimizer run. Buffers not used by the optimizer
/// family are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    spec: OptimizerSpec,
    step_count: u64,
    first_moment: Vector,
    second_moment: Vector,
    delta_accum: Vector,
}

impl OptimizerState {
    pub fn new(spec: OptimizerSpec, dim: usize) -> Result<Self> {
        spec.validate()?;
        if dim == 0 {
            return Err(Error::config("optimizer dimension must be >= 1"));
        }
        let sized = |used: bool| {
            if used {
                Vector::zeros(dim)
            } else {
                Vector::zeros(0)
            }
        };
        use OptimizerKind::*;
        Ok(Self {
            spec,
            step_count: 0,
            first_moment: sized(spec.kind == Adam),
            second_moment: sized(spec.kind != Gd),
            delta_accum: sized(spec.kind == Adadelta),
        })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &Vector {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &Vector {
        &self.second_moment
    }

    pub fn delta_accum(&self) -> &Vector {
        &self.delta_accum
    }

    /// Consumes one loss gradient and returns the additive update.
    pub fn step(&mut self, grad: &Vector) -> Result<Vector> {
        let dim = match self.spec.kind {
            OptimizerKind::Gd => grad.len(),
            _ => self.second_moment.len(),
        };
        if grad.len() != dim {
            return Err(Error::Dimension {
                context: "optimizer gradient",
                expected: dim,
                got: grad.len(),
            });
        }
        let s = self.spec;
        let eps = s.epsilon();
        let delta = match s.kind {
            OptimizerKind::Gd => grad * (-s.learning_rate),
            OptimizerKind::Adagrad => {
                self.second_moment.zip_apply(grad, |v, g| *v += g * g);
                grad.zip_map(&self.second_moment, |g, v| {
                    -s.learning_rate * g / (v.sqrt() + eps)
                })
            }
            OptimizerKind::Rmsprop => {
                self.second_moment
                    .zip_apply(grad, |v, g| *v = s.gamma * *v + (1.0 - s.gamma) * g * g);
                grad.zip_map(&self.second_moment, |g, v| {
                    -s.learning_rate * g / (v.sqrt() + eps)
                })
            }
            OptimizerKind::Adam => {
                self.first_moment
                    .zip_apply(grad, |m, g| *m = s.beta1 * *m + (1.0 - s.beta1) * g);
                self.second_moment
                    .zip_apply(grad, |v, g| *v = s.beta2 * *v + (1.0 - s.beta2) * g * g);
                let k = (self.step_count + 1) as i32;
                let c1 = 1.0 - s.beta1.powi(k);
                let c2 = 1.0 - s.beta2.powi(k);
                self.first_moment.zip_map(&self.second_moment, |m, v| {
                    let m_hat = m / c1;
                    let v_hat = v / c2;
                    -s.learning_rate * m_hat / (v_hat.sqrt() + eps)
                })
            }
            OptimizerKind::Adadelta => {
                self.second_moment
                    .zip_apply(grad, |v, g| *v = s.gamma * *v + (1.0 - s.gamma) * g * g);
                let delta = Vector::from_iterator(
                    grad.len(),
                    grad.iter()
                        .zip(self.second_moment.iter())
                        .zip(self.delta_accum.iter())
                        .map(|((g, v), u)| -((u + eps).sqrt() / (v + eps).sqrt()) * g),
                );
                self.delta_accum
                    .zip_apply(&delta, |u, d| *u = s.gamma * *u + (1.0 - s.gamma) * d * d);
                delta
            }
        };
        self.step_count += 1;
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn init_examples() {
        let gd = OptimizerState::new(OptimizerSpec::gd(0.1), 3).unwrap();
        assert_eq!(gd.step_count(), 0);
        assert!(gd.first_moment().is_empty() && gd.second_moment().is_empty());

        let adam =
            OptimizerState::new(OptimizerSpec::adam(0.1, 0.1, 0.1).with_epsilon(1e-8), 1).unwrap();
        assert_eq!(adam.first_moment(), &Vector::zeros(1));
        assert_eq!(adam.second_moment(), &Vector::zeros(1));

        let ada = OptimizerState::new(OptimizerSpec::adadelta(0.9), 2).unwrap();
        assert_eq!(ada.second_moment(), &Vector::zeros(2));
        assert_eq!(ada.delta_accum(), &Vector::zeros(2));
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(OptimizerState::new(OptimizerSpec::gd(-0.1), 1).is_err());
        assert!(OptimizerState::new(OptimizerSpec::rmsprop(0.1, 1.0), 1).is_err());
        assert!(OptimizerState::new(OptimizerSpec::adam(0.1, 0.0, 0.5), 1).is_err());
        assert!(OptimizerState::new(OptimizerSpec::adagrad(0.1).with_epsilon(0.0), 1).is_err());
        assert!(OptimizerState::new(OptimizerSpec::gd(0.1), 0).is_err());
    }

    #[test]
    fn gd_step() {
        let mut s = OptimizerState::new(OptimizerSpec::gd(0.1), 1).unwrap();
        assert!((s.step(&v(&[2.0])).unwrap()[0] + 0.2).abs() < 1e-15);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn adam_first_step_has_magnitude_eta() {
        for eta in [0.1, 0.5, 1.0] {
            let mut s = OptimizerState::new(OptimizerSpec::adam(eta, 0.1, 0.1), 1).unwrap();
            let d = s.step(&v(&[3.0])).unwrap()[0];
            assert!((d + eta * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        }
    }

    #[test]
    fn rmsprop_first_step() {
        let mut s = OptimizerState::new(OptimizerSpec::rmsprop(0.1, 0.5), 1).unwrap();
        let d = s.step(&v(&[4.0])).unwrap()[0];
        assert_eq!(s.second_moment()[0], 8.0);
        assert!((d + 0.141421356).abs() < 1e-6);
    }

    #[test]
    fn adagrad_two_steps() {
        let mut s = OptimizerState::new(OptimizerSpec::adagrad(1.0), 1).unwrap();
        let d1 = s.step(&v(&[1.0])).unwrap()[0];
        let d2 = s.step(&v(&[1.0])).unwrap()[0];
        assert!((d1 + 1.0 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!((d2 + 1.0 / (2f64.sqrt() + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adadelta_first_step() {
        let mut s = OptimizerState::new(OptimizerSpec::adadelta(0.9), 1).unwrap();
        let d = s.step(&v(&[2.0])).unwrap()[0];
        let expected = -(1e-6f64.sqrt() / (0.1 * 4.0 + 1e-6f64).sqrt()) * 2.0;
        assert!((d - expected).abs() < 1e-15);
        assert!((s.delta_accum()[0] - 0.1 * expected * expected).abs() < 1e-20);
    }

    #[test]
    fn dimension_mismatch() {
        let mut s = OptimizerState::new(OptimizerSpec::adam(0.1, 0.9, 0.9), 2).unwrap();
        assert!(s.step(&v(&[1.0])).is_err());
    }

    #[test]
    fn gd_on_quadratic_is_geometric() {
        // loss ½(y - x)², gradient x - y
        let (y, x0, eta) = (1.7, -0.4, 0.3);
        let mut s = OptimizerState::new(OptimizerSpec::gd(eta), 1).unwrap();
        let mut x = x0;
        for k in 1..=25 {
            x += s.step(&v(&[x - y])).unwrap()[0];
            let closed = y + (1.0 - eta).powi(k) * (x0 - y);
            assert!((x - closed).abs() < 1e-12);
        }
    }

    fn any_spec() -> impl Strategy<Value = OptimizerSpec> {
        (
            0usize..5,
            0.01..1.0f64,
            prop::sample::select(vec![0.1, 0.5, 0.9]),
        )
            .prop_map(|(k, eta, decay)| match k {
                0 => OptimizerSpec::gd(eta),
                1 => OptimizerSpec::adagrad(eta),
                2 => OptimizerSpec::rmsprop(eta, decay),
                3 => OptimizerSpec::adadelta(decay),
                _ => OptimizerSpec::adam(eta, decay, decay),
            })
    }

    proptest! {
        #[test]
        fn descent_sign(spec in any_spec(), grads in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3), 1..8)) {
            let mut s = OptimizerState::new(spec, 3).unwrap();
            for (k, g) in grads.iter().enumerate() {
                let g = v(g);
                let d = s.step(&g).unwrap();
                let always = matches!(spec.kind, OptimizerKind::Gd | OptimizerKind::Adagrad | OptimizerKind::Rmsprop);
                if always || k == 0 {
                    for (di, gi) in d.iter().zip(g.iter()) {
                        prop_assert!(di * gi <= 0.0);
                    }
                }
            }
        }

        #[test]
        fn first_step_scale_invariance(g in 1.0..100.0f64, scale in 1.0..1000.0f64, eta in 0.01..1.0f64) {
            for spec in [OptimizerSpec::rmsprop(eta, 0.5), OptimizerSpec::adam(eta, 0.5, 0.5)] {
                let a = OptimizerState::new(spec, 1).unwrap().step(&v(&[g])).unwrap()[0];
                let b = OptimizerState::new(spec, 1).unwrap().step(&v(&[g * scale])).unwrap()[0];
                prop_assert!(((a - b) / a).abs() <= 1e-3);
            }
        }

        #[test]
        fn deterministic(spec in any_spec(), grads in prop::collection::vec(-10.0..10.0f64, 1..20)) {
            let run = || {
                let mut s = OptimizerState::new(spec, 1).unwrap();
                grads.iter().map(|g| s.step(&v(&[*g])).unwrap()[0].to_bits()).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }
    }
}
