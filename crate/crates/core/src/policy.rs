//! Stationary selectors read off a solved Bellman equation.

use serde::{Deserialize, Serialize};

use crate::eigen::bellman_selector;
use crate::error::{Error, Result};
use crate::limit::full_residual;
use crate::markov::{MarkovModel, Mode};

/// Default bound on the Bellman residual below which a selector is extracted.
pub const DEFAULT_MAX_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySolution {
    /// Action index per state.
    pub selector: Vec<usize>,
    pub mode: Mode,
    pub lambda_claimed: f64,
    /// Bellman residual of the `(w, lambda)` pair the selector came from.
    pub residual: f64,
}

impl PolicySolution {
    /// Selector with action labels instead of indices.
    pub fn labelled(&self, actions: &[String]) -> Vec<String> {
        self.selector.iter().map(|&a| actions[a].clone()).collect()
    }
}

/// Per state, the action attaining the sup (max mode) or inf (min mode) of
/// `c(x,a) + ln sum_y P(x,y|a) e^{w(y)}`, lowest index on ties.
pub fn extract_policy<M: MarkovModel>(
    model: &M,
    w: &[f64],
    lambda: f64,
    mode: Mode,
    max_residual: f64,
) -> Result<PolicySolution> {
    if w.len() != model.num_states() {
        return Err(Error::InvalidArgument(format!(
            "w has {} entries, model has {} states",
            w.len(),
            model.num_states()
        )));
    }
    let residual = full_residual(model, w, lambda, mode)?;
    if residual.is_nan() || residual > max_residual {
        return Err(Error::ResidualTooLarge {
            residual,
            threshold: max_residual,
        });
    }
    Ok(PolicySolution {
        selector: bellman_selector(model, w, mode),
        mode,
        lambda_claimed: lambda,
        residual,
    })
}
