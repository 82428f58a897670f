//! TOML inputs of the `simulate` and `solve` commands.

use std::path::PathBuf;

use serde::Deserialize;
use sosrec::renewal::KernelSpec;
use sosrec::{Error, RecoveryFunction, Result, TimeGrid};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_end: f64,
    pub n_points: Option<usize>,
    pub dt: Option<f64>,
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        match (self.n_points, self.dt) {
            (Some(n), None) => TimeGrid::uniform(self.t_end, n),
            (None, Some(dt)) => TimeGrid::with_step(self.t_end, dt),
            _ => Err(Error::Config("grid needs exactly one of n_points or dt".into())),
        }
    }
}

fn default_realizations() -> usize {
    10_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub systems: Vec<RecoveryFunction>,
    pub grid: GridSpec,
    #[serde(default = "default_realizations")]
    pub n_realizations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Per-state functionality; equal impact when absent.
    pub functionality: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSource {
    /// Clock-reset kernel of independent systems.
    ClockReset { systems: Vec<RecoveryFunction> },
    /// Kernel JSON file, relative to the config file.
    File { path: PathBuf },
    Explicit(KernelSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub grid: GridSpec,
    pub kernel: KernelSource,
    /// Times at which `R(t)` is exported, snapped to the nearest grid point.
    #[serde(default)]
    pub slices: Vec<f64>,
    /// Per-state functionality. Defaults to equal impact when the states
    /// form a subset space (clock-reset kernels, or 2^n states); otherwise
    /// no curve is written.
    pub functionality: Option<Vec<f64>>,
    /// Initial state distribution; all mass on state 0 when absent.
    pub initial: Option<Vec<f64>>,
}
