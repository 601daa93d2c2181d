use std::io::{BufRead, Write};

use super::monte_carlo::RunRecord;
use super::stats::RmseSummary;
use crate::error::{Error, Result};

/// One line of a results table.
pub struct TableRow<'a> {
    pub method: &'a str,
    pub params: &'a str,
    pub summary: &'a RmseSummary,
}

/// `method,param_string,rmse_mean,rmse_ci,diverged`; `rmse_ci` is empty for
/// single-run summaries.
pub fn write_table_csv<W: Write>(mut out: W, rows: &[TableRow<'_>]) -> Result<()> {
    writeln!(out, "method,param_string,rmse_mean,rmse_ci,diverged")?;
    for row in rows {
        let ci = row
            .summary
            .half_width
            .map(|h| h.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            row.method, row.params, row.summary.mean, ci, row.summary.diverged_count
        )?;
    }
    Ok(())
}

/// `run,seed,rmse,diverged` where `rmse` is the value that entered the
/// summary (after any divergence replacement).
pub fn write_run_csv<W: Write>(
    mut out: W,
    runs: &[RunRecord],
    summary: &RmseSummary,
) -> Result<()> {
    writeln!(out, "run,seed,rmse,diverged")?;
    for (rec, value) in runs.iter().zip(&summary.per_run) {
        writeln!(out, "{},{},{},{}", rec.run, rec.seed, value, rec.diverged)?;
    }
    Ok(())
}

/// Reads back the `rmse` column of [`write_run_csv`].
pub fn read_run_csv<R: BufRead>(input: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let field = line
            .split(',')
            .nth(2)
            .ok_or_else(|| Error::Parse(format!("run row {i} has too few columns")))?;
        out.push(
            field
                .parse()
                .map_err(|e| Error::Parse(format!("run row {i}: {e}")))?,
        );
    }
    Ok(out)
}
