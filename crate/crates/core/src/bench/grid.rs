use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, GridSpec, MethodConfig};
use super::monte_carlo::{
    evaluate_method, finish, simulate_runs, MonteCarloResult, VALIDATION_SEED_OFFSET,
};
use crate::error::{Error, Result};
use crate::imap::ImapConfig;
use crate::optimizers::{OptimizerKind, OptimizerSpec};

pub const LATTICE_STEPS: [usize; 7] = [1, 3, 5, 10, 25, 50, 100];
pub const LATTICE_LEARNING_RATES: [f64; 5] = [1.0, 0.5, 0.1, 0.05, 0.01];
pub const LATTICE_DECAYS: [f64; 3] = [0.1, 0.5, 0.9];

/// The optimizer lattice: every `K` with every learning rate and decay the
/// family uses. Adadelta has neither and contributes one cell per `K`; Adam
/// ties `β₂ = β₁`. All five families give 287 cells.
pub fn imap_lattice_grid(kinds: &[OptimizerKind]) -> Vec<MethodConfig> {
    let mut cells = Vec::new();
    for &kind in kinds {
        for &k in &LATTICE_STEPS {
            let specs: Vec<OptimizerSpec> = match kind {
                OptimizerKind::Gd => LATTICE_LEARNING_RATES
                    .iter()
                    .map(|&e| OptimizerSpec::gd(e))
                    .collect(),
                OptimizerKind::Adagrad => LATTICE_LEARNING_RATES
                    .iter()
                    .map(|&e| OptimizerSpec::adagrad(e))
                    .collect(),
                OptimizerKind::Adadelta => vec![OptimizerSpec::adadelta(0.9)],
                OptimizerKind::Rmsprop => LATTICE_LEARNING_RATES
                    .iter()
                    .flat_map(|&e| {
                        LATTICE_DECAYS
                            .iter()
                            .map(move |&g| OptimizerSpec::rmsprop(e, g))
                    })
                    .collect(),
                OptimizerKind::Adam => LATTICE_LEARNING_RATES
                    .iter()
                    .flat_map(|&e| {
                        LATTICE_DECAYS
                            .iter()
                            .map(move |&b| OptimizerSpec::adam(e, b, b))
                    })
                    .collect(),
            };
            cells.extend(
                specs
                    .into_iter()
                    .map(|s| MethodConfig::Imap(ImapConfig::new(s, k))),
            );
        }
    }
    cells
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

impl GridSpec {
    pub fn cells(&self, base: &MethodConfig) -> Vec<MethodConfig> {
        match self {
            GridSpec::ImapLattice { optimizers } => {
                imap_lattice_grid(optimizers.as_deref().unwrap_or(&OptimizerKind::ALL))
            }
            GridSpec::ProcessNoise { lo, hi, count } => linspace(*lo, *hi, *count)
                .into_iter()
                .map(|v| base.with_process_noise(v))
                .collect(),
            GridSpec::Cells { cells } => cells.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell: MethodConfig,
    pub validation: MonteCarloResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// In grid order.
    pub table: Vec<GridRow>,
    /// Index into `table` of the selected cell.
    pub best: usize,
    /// The selected cell on the evaluation seeds `base_seed + i`.
    pub evaluation: MonteCarloResult,
}

impl GridResult {
    pub fn best_cell(&self) -> &MethodConfig {
        &self.table[self.best].cell
    }

    /// Row indices sorted best first with the same rule used for selection.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.table.len()).collect();
        idx.sort_by(|&a, &b| compare_rows(&self.table[a], &self.table[b]));
        idx
    }
}

fn compare_rows(a: &GridRow, b: &GridRow) -> Ordering {
    let ma = a.validation.summary.mean;
    let mb = b.validation.summary.mean;
    // NaN sorts last
    ma.partial_cmp(&mb)
        .unwrap_or_else(|| ma.is_nan().cmp(&mb.is_nan()))
        .then_with(|| {
            let (ka, ea) = a.cell.tie_key();
            let (kb, eb) = b.cell.tie_key();
            ka.cmp(&kb).then(ea.total_cmp(&eb))
        })
}

/// Scores every cell on `cfg.validation_runs` simulations whose seeds sit
/// above [`VALIDATION_SEED_OFFSET`], picks the lowest mean RMSE (ties: fewer
/// steps, then the smaller learning rate), then evaluates that cell on the
/// `cfg.runs` evaluation seeds.
pub fn grid_search(cfg: &ExperimentConfig) -> Result<GridResult> {
    cfg.validate()?;
    let cells = cfg
        .grid
        .as_ref()
        .map(|g| g.cells(&cfg.method))
        .unwrap_or_else(|| vec![cfg.method.clone()]);
    if cells.is_empty() {
        return Err(Error::config("grid has no cells"));
    }
    let val_seeds: Vec<u64> = (0..cfg.validation_runs as u64)
        .map(|i| cfg.base_seed + VALIDATION_SEED_OFFSET + i)
        .collect();
    let val_traj = simulate_runs(&cfg.system, &val_seeds)?;
    let table = cells
        .par_iter()
        .map(|cell| {
            let raw = evaluate_method(&cfg.system, cell, &val_traj, &val_seeds)?;
            Ok(GridRow {
                cell: cell.clone(),
                validation: finish(cell, &val_seeds, &raw, cfg.divergence),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = (0..table.len())
        .min_by(|&a, &b| compare_rows(&table[a], &table[b]))
        .expect("non-empty grid");

    let eval_seeds: Vec<u64> = (0..cfg.runs as u64).map(|i| cfg.base_seed + i).collect();
    let eval_traj = simulate_runs(&cfg.system, &eval_seeds)?;
    let raw = evaluate_method(&cfg.system, &table[best].cell, &eval_traj, &eval_seeds)?;
    let evaluation = finish(&table[best].cell, &eval_seeds, &raw, cfg.divergence);
    Ok(GridResult {
        table,
        best,
        evaluation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::SystemConfig;

    #[test]
    fn lattice_grid_has_287_cells() {
        let cells = imap_lattice_grid(&OptimizerKind::ALL);
        assert_eq!(cells.len(), 287);
        let count = |k: OptimizerKind| {
            cells
                .iter()
                .filter(|c| matches!(c, MethodConfig::Imap(i) if i.optimizer.kind == k))
                .count()
        };
        assert_eq!(count(OptimizerKind::Adadelta), 7);
        assert_eq!(count(OptimizerKind::Gd), 35);
        assert_eq!(count(OptimizerKind::Adagrad), 35);
        assert_eq!(count(OptimizerKind::Rmsprop), 105);
        assert_eq!(count(OptimizerKind::Adam), 105);
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.5, 250.0, 500);
        assert_eq!(v.len(), 500);
        assert_eq!(v[0], 0.5);
        assert!((v[499] - 250.0).abs() < 1e-12);
    }

    #[test]
    fn single_cell_grid_returns_it() {
        let cell = MethodConfig::Imap(ImapConfig::new(OptimizerSpec::gd(0.1), 3));
        let mut cfg = ExperimentConfig::new(
            SystemConfig::Ungm {
                q: 3.0,
                r: 2.0,
                dt: 0.1,
                horizon: 20,
            },
            MethodConfig::Ekf {
                process_noise: None,
            },
        )
        .with_runs(3);
        cfg.grid = Some(GridSpec::Cells {
            cells: vec![cell.clone()],
        });
        let res = grid_search(&cfg).unwrap();
        assert_eq!(res.best_cell(), &cell);
        assert_eq!(res.table.len(), 1);
    }

    #[test]
    fn validation_and_evaluation_seeds_are_disjoint() {
        let mut cfg = ExperimentConfig::new(
            SystemConfig::Ungm {
                q: 3.0,
                r: 2.0,
                dt: 0.1,
                horizon: 10,
            },
            MethodConfig::Ukf {
                process_noise: None,
            },
        )
        .with_runs(10);
        cfg.grid = Some(GridSpec::ProcessNoise {
            lo: 1.0,
            hi: 5.0,
            count: 3,
        });
        let res = grid_search(&cfg).unwrap();
        let eval: Vec<u64> = res.evaluation.runs.iter().map(|r| r.seed).collect();
        for row in &res.table {
            assert!(row.validation.runs.iter().all(|r| !eval.contains(&r.seed)));
        }
    }

    #[test]
    fn ties_prefer_fewer_steps_then_smaller_rate() {
        // GD with zero learning rate never moves, so every cell ties
        let cells: Vec<MethodConfig> = [(5, 0.0), (1, 0.0), (3, 0.0)]
            .iter()
            .map(|&(k, e)| MethodConfig::Imap(ImapConfig::new(OptimizerSpec::gd(e), k)))
            .collect();
        let mut cfg = ExperimentConfig::new(
            SystemConfig::Ungm {
                q: 3.0,
                r: 2.0,
                dt: 0.1,
                horizon: 10,
            },
            cells[0].clone(),
        )
        .with_runs(2);
        cfg.grid = Some(GridSpec::Cells { cells });
        let res = grid_search(&cfg).unwrap();
        assert_eq!(res.best, 1);
    }
}
