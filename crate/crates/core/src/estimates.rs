//! Per-step filter output shared by every filter family.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::models::trajectory_fmt;

/// Predictive means `mu_t^-` and filtering estimates `mu_t` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterRun {
    pub predictions: Vec<Vector>,
    pub estimates: Vec<Vector>,
    /// Steps (1-based) at which the filter had to recover from a degenerate
    /// state, e.g. all particle weights underflowing.
    pub flagged_steps: Vec<usize>,
}

impl FilterRun {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            predictions: Vec::with_capacity(n),
            estimates: Vec::with_capacity(n),
            flagged_steps: Vec::new(),
        }
    }

    pub fn push(&mut self, prediction: Vector, estimate: Vector) {
        self.predictions.push(prediction);
        self.estimates.push(estimate);
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    /// CSV `t,mu_minus_1..d,mu_hat_1..d` with 1-based step index.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.estimates.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("mu_minus_{i}")));
        header.extend((1..=d).map(|i| format!("mu_hat_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (t, (p, e)) in self.predictions.iter().zip(&self.estimates).enumerate() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(p.iter().chain(e.iter()).map(|v| trajectory_fmt(*v)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty estimate file".into()))??;
        let ncols = header.trim().split(',').count();
        if ncols < 3 || ncols % 2 == 0 {
            return Err(Error::Parse(format!(
                "unexpected estimate header `{header}`"
            )));
        }
        let d = (ncols - 1) / 2;
        let mut run = FilterRun::default();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .trim()
                .split(',')
                .skip(1)
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(e.to_string()))?;
            if vals.len() != 2 * d {
                return Err(Error::Parse("estimate row has wrong column count".into()));
            }
            run.push(
                Vector::from_column_slice(&vals[..d]),
                Vector::from_column_slice(&vals[d..]),
            );
        }
        Ok(run)
    }
}
