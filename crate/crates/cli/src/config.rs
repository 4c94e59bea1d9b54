//! Run configuration: an optional JSON file, overridden field by field by
//! command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use riskctl_core::Mode;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Model file (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Optimization direction: max or min.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Ball index for a single truncated solve.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_from: Option<usize>,
    #[arg(long)]
    pub n_to: Option<usize>,
    /// Ball radius per index (`radius(n) = scale * n`).
    #[arg(long)]
    pub radius_scale: Option<f64>,
    /// Restart distribution, one weight per state; overrides the model's.
    #[arg(long, value_delimiter = ',')]
    pub mu: Option<Vec<f64>>,
    /// Damping weight of the power iteration.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Stopping tolerance on the Collatz–Wielandt span.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Level-set slack for the compactness check.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Simulation horizon.
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of simulated paths.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start state label.
    #[arg(long)]
    pub x0: Option<String>,
    /// Explicit stationary policy, one action label per state.
    #[arg(long, value_delimiter = ',')]
    pub policy: Option<Vec<String>>,
    /// Radius of the reference ball for exit fractions.
    #[arg(long)]
    pub reference_radius: Option<f64>,
    /// Horizons for the exit diagnostic.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    /// Cost ceiling of the harmonic example.
    #[arg(long)]
    pub c_bar: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
    }

    /// Fields set in `flags` win.
    pub fn merged(mut self, flags: RunConfig) -> Self {
        overlay!(self, flags; model, mode, n, n_from, n_to, radius_scale, mu, delta, tol, max_iters,
            epsilon, m, paths, seed, x0, policy, reference_radius, horizons, c_bar, out);
        self
    }

    pub fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, CliError> {
        value
            .clone()
            .ok_or_else(|| CliError::Config(format!("missing --{flag}")))
    }
}
