use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Aligned ground truth and observations for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub observations: Vec<Vector>,
}

/// Formats a value with 12 significant digits.
pub fn fmt_sig12(v: f64) -> String {
    format!("{v:.11e}")
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vector>, observations: Vec<Vector>) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::config("trajectory must be non-empty"));
        }
        for (context, got) in [
            ("trajectory states", states.len()),
            ("trajectory observations", observations.len()),
        ] {
            if got != n {
                return Err(Error::Dimension {
                    context,
                    expected: n,
                    got,
                });
            }
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            times,
            states,
            observations,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn obs_dim(&self) -> usize {
        self.observations[0].len()
    }

    /// CSV with header `t,x_1..x_d,y_1..y_m`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.state_dim();
        let m = self.obs_dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("y_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for ((t, x), y) in self.times.iter().zip(&self.states).zip(&self.observations) {
            let row: Vec<String> = std::iter::once(*t)
                .chain(x.iter().copied())
                .chain(y.iter().copied())
                .map(fmt_sig12)
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trajectory file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") {
            return Err(Error::Parse("trajectory header must start with `t`".into()));
        }
        let d = cols.iter().filter(|c| c.starts_with("x_")).count();
        let m = cols.iter().filter(|c| c.starts_with("y_")).count();
        if d == 0 || m == 0 || 1 + d + m != cols.len() {
            return Err(Error::Parse(format!(
                "unexpected trajectory header `{header}`"
            )));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut observations = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .trim()
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 2)))?;
            if vals.len() != cols.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} columns",
                    lineno + 2,
                    vals.len()
                )));
            }
            times.push(vals[0]);
            states.push(Vector::from_column_slice(&vals[1..1 + d]));
            observations.push(Vector::from_column_slice(&vals[1 + d..]));
        }
        Self::new(times, states, observations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate, Dynamics, LorenzConfig, LorenzModel};
    use crate::rng;

    #[test]
    fn csv_round_trip_to_twelve_digits() {
        let cfg = LorenzConfig {
            substeps: 10,
            ..LorenzConfig::default()
        };
        let model = LorenzModel::new(cfg, Dynamics::Rk4).unwrap();
        let traj = simulate(&model, 20, &mut rng::stream(3, 0)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x_1,x_2,x_3,y_1,y_2,y_3\n"));
        let back = Trajectory::read_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 20);
        for (a, b) in back.states.iter().zip(&traj.states) {
            assert!(crate::linalg::relative_error(a, b) < 1e-11);
        }
        let mut again = Vec::new();
        back.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_unordered_times() {
        let v = Vector::zeros(1);
        assert!(Trajectory::new(
            vec![1.0, 1.0],
            vec![v.clone(), v.clone()],
            vec![v.clone(), v]
        )
        .is_err());
    }
}
