use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use imap_core::bench::{
    grid_search, rmse, run_filter, run_monte_carlo, write_run_csv, write_table_csv,
    ExperimentConfig, GridResult, MonteCarloResult, SystemConfig, TableRow,
};
use imap_core::equivalence;
use imap_core::models::simulate;
use imap_core::rng;
use imap_core::weightspace::{driftbench, DriftBenchConfig};
use imap_core::Trajectory;

#[derive(Parser)]
#[command(name = "imap", version, about = "Implicit MAP filtering experiments")]
struct Cli {
    /// Worker threads for Monte-Carlo runs (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo runs (or seeds); overrides the configuration.
    #[arg(long)]
    runs: Option<usize>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write it as CSV.
    Simulate(Common),
    /// Run one filter over a trajectory CSV and write its estimates.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Trajectory produced by `simulate`.
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Monte-Carlo RMSE table for one method.
    Bench(Common),
    /// Grid search on validation seeds, then evaluate the best cell.
    Gridsearch(Common),
    /// Residuals of the optimizer/Kalman equivalence on random instances.
    VerifyEquivalence {
        #[command(flatten)]
        common: Common,
        /// Fail when any residual exceeds this.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
    /// Weight-space adaptation strategies on the drifting classification task.
    Driftbench(Common),
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Simulate(c) => cmd_simulate(&c),
        Command::Filter { common, trajectory } => cmd_filter(&common, &trajectory),
        Command::Bench(c) => cmd_bench(&c),
        Command::Gridsearch(c) => cmd_gridsearch(&c),
        Command::VerifyEquivalence { common, tolerance } => cmd_verify(&common, tolerance),
        Command::Driftbench(c) => cmd_driftbench(&c),
    }
}

fn read_config_text(c: &Common) -> Result<String> {
    let path = c
        .config
        .as_ref()
        .context("--config is required for this command")?;
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn experiment(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_json(&read_config_text(c)?)?;
    if let Some(seed) = c.seed {
        cfg.base_seed = seed;
    }
    if let Some(runs) = c.runs {
        cfg.runs = runs;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// File writer, or stdout when no path is given.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn out_dir(c: &Common, default: &str) -> Result<PathBuf> {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = output(Some(path))?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(c: &Common) -> Result<()> {
    // Only the system part of the configuration matters here.
    let system: SystemConfig =
        serde_json::from_str(&read_config_text(c)?).context("parsing the system configuration")?;
    system.validate()?;
    let model = system.truth_model()?;
    let seed = c.seed.unwrap_or(0);
    let traj = simulate(
        model.as_dyn(),
        system.horizon(),
        &mut rng::stream(seed, rng::SIMULATION_STREAM),
    )?;
    let mut w = output(c.out.as_deref())?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_filter(c: &Common, trajectory: &Path) -> Result<()> {
    let cfg = experiment(c)?;
    let file =
        File::open(trajectory).with_context(|| format!("opening {}", trajectory.display()))?;
    let traj = Trajectory::read_csv(BufReader::new(file))?;
    let model = cfg.system.filter_model(cfg.method.process_noise())?;
    let mut filter_rng = rng::stream(cfg.base_seed, rng::FILTER_STREAM);
    let run = run_filter(&model, &cfg.method, &traj.observations, &mut filter_rng)?;
    let mut w = output(c.out.as_deref())?;
    run.write_csv(&mut w)?;
    w.flush()?;
    eprintln!(
        "{} rmse={}",
        cfg.method.name(),
        rmse(&run.estimates, &traj.states)?
    );
    Ok(())
}

fn print_summary(r: &MonteCarloResult) {
    let ci = r
        .summary
        .half_width
        .map(|h| format!(" ± {h:.3}"))
        .unwrap_or_default();
    println!(
        "{} [{}] rmse {:.3}{ci} ({} diverged of {})",
        r.method,
        r.params,
        r.summary.mean,
        r.summary.diverged_count,
        r.runs.len()
    );
}

fn write_result(dir: &Path, r: &MonteCarloResult) -> Result<()> {
    let mut table = output(Some(&dir.join("table.csv")))?;
    write_table_csv(
        &mut table,
        &[TableRow {
            method: &r.method,
            params: &r.params,
            summary: &r.summary,
        }],
    )?;
    table.flush()?;
    let mut runs = output(Some(&dir.join("runs.csv")))?;
    write_run_csv(&mut runs, &r.runs, &r.summary)?;
    runs.flush()?;
    Ok(())
}

fn cmd_bench(c: &Common) -> Result<()> {
    let cfg = experiment(c)?;
    let result = run_monte_carlo(&cfg)?;
    let dir = out_dir(c, "bench-out")?;
    write_result(&dir, &result)?;
    write_json(&dir.join("result.json"), &result)?;
    print_summary(&result);
    Ok(())
}

fn cmd_gridsearch(c: &Common) -> Result<()> {
    let cfg = experiment(c)?;
    if cfg.grid.is_none() {
        bail!("gridsearch needs a \"grid\" entry in the configuration");
    }
    let result: GridResult = grid_search(&cfg)?;
    let dir = out_dir(c, "grid-out")?;
    let rows: Vec<TableRow> = result
        .ranking()
        .into_iter()
        .map(|i| {
            let v = &result.table[i].validation;
            TableRow {
                method: &v.method,
                params: &v.params,
                summary: &v.summary,
            }
        })
        .collect();
    let mut grid = output(Some(&dir.join("grid.csv")))?;
    write_table_csv(&mut grid, &rows)?;
    grid.flush()?;
    write_result(&dir, &result.evaluation)?;
    write_json(&dir.join("result.json"), &result)?;
    println!("{} cells; selected:", result.table.len());
    print_summary(&result.evaluation);
    Ok(())
}

fn cmd_verify(c: &Common, tolerance: f64) -> Result<()> {
    let instances = c.runs.unwrap_or(200);
    let seed = c.seed.unwrap_or(0);
    let report = equivalence::verify(instances, &mut rng::stream(seed, rng::DATA_STREAM))?;
    match &c.out {
        Some(p) => write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    let worst = [
        report.forward_max_rel,
        report.reverse_max_rel,
        report.roundtrip_max_rel,
        report.gain_max_rel,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    eprintln!("{instances} instances, worst relative residual {worst:.3e}");
    if worst.is_nan() || worst > tolerance {
        bail!("residual {worst:.3e} exceeds tolerance {tolerance:.1e}");
    }
    Ok(())
}

fn cmd_driftbench(c: &Common) -> Result<()> {
    let mut cfg: DriftBenchConfig = match &c.config {
        Some(_) => serde_json::from_str(&read_config_text(c)?)
            .context("parsing the drift configuration")?,
        None => DriftBenchConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.base_seed = seed;
    }
    if let Some(runs) = c.runs {
        cfg.seeds = runs;
    }
    let result = driftbench(&cfg)?;
    let dir = out_dir(c, "drift-out")?;
    let mut acc = output(Some(&dir.join("accuracy.csv")))?;
    result.write_accuracy_csv(&mut acc)?;
    acc.flush()?;
    write_json(&dir.join("summary.json"), &result)?;
    for s in &result.strategies {
        let ci = s
            .ci_half_width
            .map(|h| format!(" ± {:.4}", h))
            .unwrap_or_default();
        println!("{:<10} accuracy {:.4}{ci}", s.strategy, s.mean_accuracy);
    }
    Ok(())
}
