use serde::{Deserialize, Serialize};

use super::config::DivergencePolicy;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// `sqrt(1/(T d) Σ_t ‖est_t − truth_t‖²)`.
pub fn rmse(estimates: &[Vector], truth: &[Vector]) -> Result<f64> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::Dimension {
            context: "rmse sequence length",
            expected: truth.len(),
            got: estimates.len(),
        });
    }
    let d = truth[0].len();
    let mut sum = 0.0;
    for (e, x) in estimates.iter().zip(truth) {
        if e.len() != x.len() || x.len() != d {
            return Err(Error::Dimension {
                context: "rmse state dimension",
                expected: d,
                got: e.len(),
            });
        }
        sum += (e - x).norm_squared();
    }
    Ok((sum / (truth.len() * d) as f64).sqrt())
}

/// Mean and normal-approximation 95% half width `1.96 s / √n` with the
/// sample standard deviation.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::config(
            "confidence interval needs at least two values",
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, 1.96 * var.sqrt() / n.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseSummary {
    /// Values entering the statistics, in run order (diverged runs already
    /// replaced when the policy says so).
    pub per_run: Vec<f64>,
    pub mean: f64,
    /// `None` for a single run.
    pub half_width: Option<f64>,
    pub diverged_count: usize,
}

/// Builds a summary from raw per-run RMSEs, where a non-finite value marks
/// a diverged run.
pub fn summarize(raw: &[f64], policy: DivergencePolicy) -> RmseSummary {
    let diverged_count = raw.iter().filter(|v| !v.is_finite()).count();
    let max_finite = raw
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NAN, f64::max);
    let per_run: Vec<f64> = match policy {
        DivergencePolicy::ReplaceWithMaxFinite if max_finite.is_finite() => raw
            .iter()
            .map(|v| if v.is_finite() { *v } else { max_finite })
            .collect(),
        _ => raw
            .iter()
            .map(|v| if v.is_nan() { f64::INFINITY } else { *v })
            .collect(),
    };
    let (mean, half_width) = match confidence_interval(&per_run) {
        Ok((m, h)) => (m, Some(h)),
        Err(_) => (per_run.first().copied().unwrap_or(f64::NAN), None),
    };
    RmseSummary {
        per_run,
        mean,
        half_width,
        diverged_count,
    }
}
