//! Common view over plain models, truncated models and fixed-policy restrictions.

use serde::{Deserialize, Serialize};

use crate::model::{ControlledModel, Row};

/// Which Bellman operator is in force: sup over actions or inf over actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Max,
    Min,
}

impl Mode {
    /// True when `candidate` strictly improves on `incumbent` under this mode.
    #[inline]
    pub fn better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Mode::Max => candidate > incumbent,
            Mode::Min => candidate < incumbent,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Max => "max",
            Mode::Min => "min",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Mode::Max),
            "min" => Ok(Mode::Min),
            other => Err(format!("unknown mode {other:?} (expected max or min)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Anything the Bellman operator can act on.
pub trait MarkovModel {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn cost(&self, x: usize, a: usize) -> f64;
    fn row(&self, a: usize, x: usize) -> Row<'_>;
    fn label(&self, x: usize) -> &str;

    /// States over which the log-eigenfunction is normalized to have max 0.
    fn is_interior(&self, _x: usize) -> bool {
        true
    }

    /// Smallest and largest running cost.
    fn cost_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in 0..self.num_states() {
            for a in 0..self.num_actions() {
                let c = self.cost(x, a);
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        (lo, hi)
    }

    /// Accessibility precondition for positivity of the eigenvector: every
    /// core state reaches every core singleton (existentially in max mode,
    /// against all strategies in min mode).
    fn accessibility_precheck(&self, mode: Mode) -> bool
    where
        Self: Sized,
    {
        let allowed = vec![true; self.num_states()];
        crate::checks::all_pairs_reachable(self, &allowed, mode)
    }
}

impl MarkovModel for ControlledModel {
    fn num_states(&self) -> usize {
        ControlledModel::num_states(self)
    }

    fn num_actions(&self) -> usize {
        ControlledModel::num_actions(self)
    }

    fn cost(&self, x: usize, a: usize) -> f64 {
        ControlledModel::cost(self, x, a)
    }

    fn row(&self, a: usize, x: usize) -> Row<'_> {
        ControlledModel::row(self, a, x)
    }

    fn label(&self, x: usize) -> &str {
        ControlledModel::label(self, x)
    }

    fn cost_bounds(&self) -> (f64, f64) {
        (self.c_lower(), self.c_bar())
    }
}

/// Single-action restriction of a model to a stationary selector.
#[derive(Debug, Clone, Copy)]
pub struct FixedPolicy<'a, M> {
    model: &'a M,
    policy: &'a [usize],
}

impl<'a, M: MarkovModel> FixedPolicy<'a, M> {
    pub fn new(model: &'a M, policy: &'a [usize]) -> crate::Result<Self> {
        if policy.len() != model.num_states() {
            return Err(crate::Error::InvalidArgument(format!(
                "policy has {} entries, model has {} states",
                policy.len(),
                model.num_states()
            )));
        }
        if let Some(x) = policy.iter().position(|&a| a >= model.num_actions()) {
            return Err(crate::Error::InvalidArgument(format!(
                "policy assigns action index {} at state {:?}; model has {} actions",
                policy[x],
                model.label(x),
                model.num_actions()
            )));
        }
        Ok(FixedPolicy { model, policy })
    }
}

impl<M: MarkovModel> MarkovModel for FixedPolicy<'_, M> {
    fn num_states(&self) -> usize {
        self.model.num_states()
    }

    fn num_actions(&self) -> usize {
        1
    }

    fn cost(&self, x: usize, _a: usize) -> f64 {
        self.model.cost(x, self.policy[x])
    }

    fn row(&self, _a: usize, x: usize) -> Row<'_> {
        self.model.row(self.policy[x], x)
    }

    fn label(&self, x: usize) -> &str {
        self.model.label(x)
    }

    fn is_interior(&self, x: usize) -> bool {
        self.model.is_interior(x)
    }
}
