//! Filtering in weight space: a small classifier adapted step by step to a
//! rotating two-cluster task, treating the network weights as the state.

mod adapt;
mod mlp;
mod task;
mod vkf;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adapt::{
    pretrain, run_adaptation, select_by_validation, AdaptationConfig, AdaptationRun, Strategy,
};
pub use mlp::{sigmoid, MlpModel, MlpParams};
pub use task::{drift_task_data, drift_task_sample, DriftBatch, DriftTask, LabeledBatch};
pub use vkf::{vkf_objective, vkf_step, vkf_update, VkfConfig};

use crate::bench::confidence_interval;
use crate::error::{Error, Result};
use crate::models::trajectory_fmt;
use crate::rng;

/// Strategy families compared by [`driftbench`]; grid families pick their
/// hyperparameter on validation data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyFamily {
    Static,
    DirectFit,
    Imap,
    Pf,
    Vkf,
}

impl StrategyFamily {
    pub const ALL: [StrategyFamily; 5] = [
        StrategyFamily::Static,
        StrategyFamily::DirectFit,
        StrategyFamily::Imap,
        StrategyFamily::Pf,
        StrategyFamily::Vkf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyFamily::Static => "static",
            StrategyFamily::DirectFit => "direct_fit",
            StrategyFamily::Imap => "imap",
            StrategyFamily::Pf => "pf",
            StrategyFamily::Vkf => "vkf",
        }
    }
}

pub const IMAP_STEP_GRID: [usize; 5] = [1, 10, 25, 50, 100];
pub const SIGMA2_GRID: [f64; 5] = [0.1, 0.05, 0.01, 0.005, 0.001];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftBenchConfig {
    pub task: DriftTask,
    pub model: MlpModel,
    pub adaptation: AdaptationConfig,
    pub seeds: usize,
    pub base_seed: u64,
    pub strategies: Vec<StrategyFamily>,
    pub imap_steps: Vec<usize>,
    pub vkf_sigma2: Vec<f64>,
    pub pf_sigma2: Vec<f64>,
}

impl Default for DriftBenchConfig {
    fn default() -> Self {
        Self {
            task: DriftTask::default(),
            model: MlpModel::default(),
            adaptation: AdaptationConfig::default(),
            seeds: 10,
            base_seed: 0,
            strategies: StrategyFamily::ALL.to_vec(),
            imap_steps: IMAP_STEP_GRID.to_vec(),
            vkf_sigma2: SIGMA2_GRID.to_vec(),
            pf_sigma2: SIGMA2_GRID.to_vec(),
        }
    }
}

impl DriftBenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.adaptation.validate()?;
        MlpModel::new(self.model.input, self.model.hidden)?;
        if self.model.input != 2 {
            return Err(Error::config("the drift task has two input features"));
        }
        if self.seeds == 0 {
            return Err(Error::config("need at least one seed"));
        }
        if self.strategies.is_empty() {
            return Err(Error::config("no strategies selected"));
        }
        for f in &self.strategies {
            if self.candidates(*f).is_empty() {
                return Err(Error::config(format!(
                    "empty hyperparameter grid for {}",
                    f.name()
                )));
            }
        }
        Ok(())
    }

    pub fn candidates(&self, family: StrategyFamily) -> Vec<Strategy> {
        match family {
            StrategyFamily::Static => vec![Strategy::Static],
            StrategyFamily::DirectFit => vec![Strategy::DirectFit],
            StrategyFamily::Imap => self
                .imap_steps
                .iter()
                .map(|&steps| Strategy::Imap { steps })
                .collect(),
            StrategyFamily::Pf => self
                .pf_sigma2
                .iter()
                .map(|&sigma2| Strategy::Pf { sigma2 })
                .collect(),
            StrategyFamily::Vkf => self
                .vkf_sigma2
                .iter()
                .map(|&sigma2| Strategy::Vkf { sigma2 })
                .collect(),
        }
    }

    /// Steps whose validation accuracy drives hyperparameter selection.
    pub fn selection_steps(&self) -> usize {
        (self.task.horizon / 2).max(1)
    }
}

/// Selected run of every family for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub runs: Vec<AdaptationRun>,
}

/// Draws the data, pretrains, and runs every configured family for `seed`.
pub fn run_seed(cfg: &DriftBenchConfig, seed: u64) -> Result<SeedOutcome> {
    let data = drift_task_data(&cfg.task, &mut rng::stream(seed, rng::DATA_STREAM));
    let init = cfg.model.init(&mut rng::stream(seed, rng::INIT_STREAM));
    let w0 = pretrain(&cfg.model, &data[0], &init, &cfg.adaptation)?;
    let runs = cfg
        .strategies
        .iter()
        .map(|&f| {
            select_by_validation(
                &cfg.candidates(f),
                &cfg.model,
                &cfg.adaptation,
                &data,
                &w0,
                cfg.selection_steps(),
                |_| rng::stream(seed, rng::FILTER_STREAM),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedOutcome { seed, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    /// Mean over seeds of the per-seed mean test accuracy.
    pub mean_accuracy: f64,
    /// 95% half width across seeds; absent with a single seed.
    pub ci_half_width: Option<f64>,
    pub per_seed: Vec<f64>,
    /// Chosen configuration per seed.
    pub selected: Vec<String>,
    /// Test accuracy at every step, averaged over seeds.
    pub per_step: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftBenchResult {
    pub seeds: Vec<u64>,
    pub strategies: Vec<StrategySummary>,
}

impl DriftBenchResult {
    pub fn get(&self, name: &str) -> Option<&StrategySummary> {
        self.strategies.iter().find(|s| s.strategy == name)
    }

    /// `t,strategy,accuracy` with seed-averaged accuracies.
    pub fn write_accuracy_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,strategy,accuracy")?;
        let horizon = self.strategies.first().map_or(0, |s| s.per_step.len());
        for t in 0..horizon {
            for s in &self.strategies {
                writeln!(out, "{t},{},{}", s.strategy, trajectory_fmt(s.per_step[t]))?;
            }
        }
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Runs all seeds in parallel and summarizes each strategy family.
pub fn driftbench(cfg: &DriftBenchConfig) -> Result<DriftBenchResult> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64)
        .map(|i| cfg.base_seed.wrapping_add(i))
        .collect();
    let outcomes = seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;

    let strategies = cfg
        .strategies
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let runs: Vec<&AdaptationRun> = outcomes.iter().map(|o| &o.runs[i]).collect();
            let per_seed: Vec<f64> = runs.iter().map(|r| r.mean_test_accuracy()).collect();
            let n = runs.len() as f64;
            let per_step = (0..cfg.task.horizon)
                .map(|t| runs.iter().map(|r| r.test_accuracy[t]).sum::<f64>() / n)
                .collect();
            let (mean_accuracy, ci_half_width) = match confidence_interval(&per_seed) {
                Ok((m, h)) => (m, Some(h)),
                Err(_) => (per_seed[0], None),
            };
            StrategySummary {
                strategy: f.name().to_string(),
                mean_accuracy,
                ci_half_width,
                per_seed,
                selected: runs.iter().map(|r| r.strategy.label()).collect(),
                per_step,
            }
        })
        .collect();
    Ok(DriftBenchResult { seeds, strategies })
}
