//! Solver suite for long-run risk-sensitive control of finite controlled
//! Markov chains.
//!
//! The growth rate `lambda` and log-eigenfunction `w` solve the
//! multiplicative Bellman equation
//! `e^{w(x)} = best_a e^{c(x,a) - lambda} sum_y P^a(x,y) e^{w(y)}`,
//! where `best` is `sup` (maximize the growth of `E exp(sum c)`) or `inf`
//! (minimize it). Models with a radial coordinate are solved on a growing
//! sequence of ball truncations and the limit is analyzed.

pub mod checks;
pub mod eigen;
pub mod error;
pub mod limit;
pub mod markov;
pub mod model;
pub mod oracles;
pub mod policy;
pub mod sim;
pub mod truncation;

pub use checks::{
    check_accessibility_max, check_accessibility_min, check_dominance_bound, DominanceBound,
    Reachability,
};
pub use eigen::{
    apply_bellman, collatz_wielandt, finite_horizon_oracle, policy_eigen, solve_eigen,
    EigenSolution, SolverOptions,
};
pub use error::{Error, Result};
pub use limit::{check_a3, check_a4, full_residual, solve_sequence, LimitReport, SweepOptions};
pub use markov::{FixedPolicy, MarkovModel, Mode};
pub use model::{load_model, validate, ControlledModel, ModelFile, StateRecord, ValidationReport};
pub use oracles::{harmonic_closed_form, harmonic_model, perron_root_oracle, HarmonicSpec};
pub use policy::{extract_policy, PolicySolution};
pub use sim::{exass_diagnostic, simulate, SimulationEstimate};
pub use truncation::{
    build_truncated, distance_to_ball, RadiusRule, TruncatedModel, TruncationScheme,
};

/// Version tag written into every JSON output.
pub const SCHEMA_VERSION: u32 = 1;
