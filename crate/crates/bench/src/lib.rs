//! Fixtures shared by the criterion benchmarks.

use imap_core::bench::SystemConfig;
use imap_core::models::{simulate, Dynamics, LorenzConfig};
use imap_core::{rng, Result, Trajectory};

/// UNGM with the benchmark noise levels.
pub fn ungm_system(horizon: usize) -> SystemConfig {
    SystemConfig::Ungm {
        q: 3.0,
        r: 2.0,
        dt: 0.1,
        horizon,
    }
}

/// Stochastic Lorenz with the default configuration and RK4 filter dynamics.
pub fn lorenz_system(horizon: usize) -> SystemConfig {
    SystemConfig::Lorenz {
        lorenz: LorenzConfig::default(),
        dynamics: Dynamics::Rk4,
        horizon,
    }
}

/// One simulated trajectory for `seed`.
pub fn trajectory(system: &SystemConfig, seed: u64) -> Result<Trajectory> {
    let model = system.truth_model()?;
    simulate(
        model.as_dyn(),
        system.horizon(),
        &mut rng::stream(seed, rng::SIMULATION_STREAM),
    )
}
