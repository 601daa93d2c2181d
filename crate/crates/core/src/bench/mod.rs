//! Monte-Carlo experiment harness: seeded trajectories, filter execution,
//! RMSE summaries, and hyperparameter grid search.

mod config;
mod grid;
mod monte_carlo;
mod report;
mod stats;

pub use config::{
    BuiltModel, DivergencePolicy, ExperimentConfig, GridSpec, MethodConfig, SystemConfig,
};
pub use grid::{
    grid_search, imap_lattice_grid, linspace, GridResult, GridRow, LATTICE_DECAYS,
    LATTICE_LEARNING_RATES, LATTICE_STEPS,
};
pub use monte_carlo::{
    evaluate_method, run_filter, run_monte_carlo, simulate_runs, MonteCarloResult, RunRecord,
    VALIDATION_SEED_OFFSET,
};
pub use report::{read_run_csv, write_run_csv, write_table_csv, TableRow};
pub use stats::{confidence_interval, rmse, summarize, RmseSummary};
