use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::models::{Covariance, StateSpaceModel};

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Vector>,
    /// Normalized; uniform after each resampling.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PfOutput {
    /// Resampled, uniformly weighted.
    pub particles: ParticleSet,
    /// Weighted mean of the propagated particles under the incoming weights.
    pub prediction: Vector,
    /// Likelihood-weighted mean, taken before resampling.
    pub estimate: Vector,
    /// `1 / Σ w²` of the likelihood weights.
    pub effective_sample_size: f64,
    /// Every likelihood underflowed and the weights were reset to uniform.
    pub flagged: bool,
}

impl ParticleSet {
    pub fn uniform(particles: Vec<Vector>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::config("particle filter needs at least one particle"));
        }
        let w = 1.0 / particles.len() as f64;
        Ok(Self {
            weights: vec![w; particles.len()],
            particles,
        })
    }

    pub fn from_model<M, R>(model: &M, n: usize, rng: &mut R) -> Result<Self>
    where
        M: StateSpaceModel + ?Sized,
        R: RngCore,
    {
        let init = Covariance::new(model.initial_cov(), "initial covariance")?;
        let mu0 = model.initial_mean();
        Self::uniform(
            (0..n)
                .map(|_| linalg::sample_gaussian(&mu0, init.sqrt(), rng))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean(&self) -> Vector {
        weighted_mean(&self.particles, &self.weights)
    }
}

fn weighted_mean(particles: &[Vector], weights: &[f64]) -> Vector {
    let mut acc = Vector::zeros(particles[0].len());
    for (p, w) in particles.iter().zip(weights) {
        acc.axpy(*w, p, 1.0);
    }
    acc
}

/// Propagate through the transition distribution, weight by the
/// likelihood in log space, estimate, then multinomially resample.
pub fn pf_step<M, R>(
    ps: &ParticleSet,
    model: &M,
    y: &Vector,
    t: usize,
    rng: &mut R,
) -> Result<PfOutput>
where
    M: StateSpaceModel + ?Sized,
    R: RngCore,
{
    pf_step_with(
        ps,
        |x, rng| model.transition_sample(x, t, rng),
        |x| -model.neg_loglik(x, y, t),
        t,
        rng,
    )
}

/// Bootstrap step with a caller-supplied proposal and log-likelihood.
pub fn pf_step_with<P, L, R>(
    ps: &ParticleSet,
    mut propagate: P,
    loglik: L,
    t: usize,
    rng: &mut R,
) -> Result<PfOutput>
where
    P: FnMut(&Vector, &mut dyn RngCore) -> Vector,
    L: Fn(&Vector) -> f64,
    R: RngCore,
{
    let n = ps.len();
    if n == 0 {
        return Err(Error::config("particle filter needs at least one particle"));
    }
    let propagated: Vec<Vector> = ps
        .particles
        .iter()
        .map(|x| propagate(x, &mut *rng))
        .collect();
    let prediction = weighted_mean(&propagated, &ps.weights);

    let logw: Vec<f64> = propagated
        .iter()
        .zip(&ps.weights)
        .map(|(x, w)| w.ln() + loglik(x))
        .collect();
    let max = logw
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = if max.is_finite() {
        logw.iter()
            .map(|l| if l.is_nan() { 0.0 } else { (l - max).exp() })
            .collect()
    } else {
        vec![0.0; n]
    };
    let total: f64 = weights.iter().sum();
    let flagged = !(total > 0.0 && total.is_finite());
    if flagged {
        weights = vec![1.0 / n as f64; n];
    } else {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    let estimate = weighted_mean(&propagated, &weights);
    let effective_sample_size = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    if !linalg::all_finite(&estimate) {
        return Err(Error::Diverged {
            step: t,
            iterate: 0,
        });
    }

    let index = WeightedIndex::new(&weights)
        .map_err(|e| Error::config(format!("resampling weights: {e}")))?;
    let resampled = (0..n)
        .map(|_| propagated[index.sample(&mut *rng)].clone())
        .collect();
    Ok(PfOutput {
        particles: ParticleSet::uniform(resampled)?,
        prediction,
        estimate,
        effective_sample_size,
        flagged,
    })
}
