//! Finite controlled Markov models and their JSON file format.
//!
//! A model is a finite state list (each state carries a radial coordinate,
//! its distance from a designated center), a finite action list, one
//! stochastic row per (action, state) and a running cost per (state, action).

use std::io::Read;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row sums of stochastic vectors.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A state record: unique label plus radial coordinate `r >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub label: String,
    pub r: f64,
}

/// On-disk representation of a model. Field names are fixed by the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub states: Vec<StateRecord>,
    pub actions: Vec<String>,
    /// action label -> rows in state order.
    pub kernel: IndexMap<String, Vec<Vec<f64>>>,
    /// cost[state][action]
    pub cost: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationAnnotation>,
}

/// Annotation block attached when a truncated model is written out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationAnnotation {
    pub n: usize,
    pub radius: f64,
    pub exterior_label: String,
}

/// Row-compressed storage of the transition rows, indexed by `a * n + x`.
/// Only strictly positive entries are stored; column order is increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseKernel {
    n_states: usize,
    n_actions: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
}

/// Borrowed sparse row.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub cols: &'a [usize],
    pub probs: &'a [f64],
}

impl<'a> Row<'a> {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.cols.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    /// Probability mass assigned to column `y`.
    pub fn get(&self, y: usize) -> f64 {
        match self.cols.binary_search(&y) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }
}

impl SparseKernel {
    /// Builds from dense rows given as `rows[a][x][y]`.
    pub fn from_dense(n_states: usize, rows: &[Vec<Vec<f64>>]) -> Self {
        let n_actions = rows.len();
        let mut offsets = Vec::with_capacity(n_actions * n_states + 1);
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        offsets.push(0);
        for per_action in rows {
            for row in per_action {
                for (y, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        cols.push(y);
                        probs.push(p);
                    }
                }
                offsets.push(cols.len());
            }
        }
        SparseKernel {
            n_states,
            n_actions,
            offsets,
            cols,
            probs,
        }
    }

    /// Builds from sparse rows `rows[a][x] = [(y, p), ...]` with increasing `y`.
    pub fn from_sparse(n_states: usize, rows: Vec<Vec<Vec<(usize, f64)>>>) -> Self {
        let n_actions = rows.len();
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        for per_action in rows {
            for mut row in per_action {
                row.sort_by_key(|&(y, _)| y);
                for (y, p) in row {
                    if p > 0.0 {
                        cols.push(y);
                        probs.push(p);
                    }
                }
                offsets.push(cols.len());
            }
        }
        SparseKernel {
            n_states,
            n_actions,
            offsets,
            cols,
            probs,
        }
    }

    pub fn row(&self, a: usize, x: usize) -> Row<'_> {
        let i = a * self.n_states + x;
        let (s, e) = (self.offsets[i], self.offsets[i + 1]);
        Row {
            cols: &self.cols[s..e],
            probs: &self.probs[s..e],
        }
    }

    pub fn dense_row(&self, a: usize, x: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        for (y, p) in self.row(a, x).iter() {
            out[y] = p;
        }
        out
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// Validated finite controlled Markov model.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledModel {
    states: Vec<StateRecord>,
    actions: Vec<String>,
    kernel: SparseKernel,
    /// cost[x * n_actions + a]
    cost: Vec<f64>,
    mu: Option<Vec<f64>>,
    center: usize,
    c_bar: f64,
    c_lower: f64,
}

fn row_sum(row: &[f64]) -> f64 {
    row.iter().sum()
}

impl ControlledModel {
    /// Validates raw parts and assembles a model. Rows are never renormalized.
    pub fn new(
        states: Vec<StateRecord>,
        actions: Vec<String>,
        kernel: Vec<Vec<Vec<f64>>>,
        cost: Vec<Vec<f64>>,
        mu: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::Validation("model has no states".into()));
        }
        if actions.is_empty() {
            return Err(Error::Validation("model has no actions".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &states {
            if !seen.insert(s.label.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate state label {:?}",
                    s.label
                )));
            }
            if !s.r.is_finite() || s.r < 0.0 {
                return Err(Error::Validation(format!(
                    "state {:?} has invalid radial coordinate {}",
                    s.label, s.r
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for a in &actions {
            if !seen.insert(a.as_str()) {
                return Err(Error::Validation(format!("duplicate action label {a:?}")));
            }
        }
        let centers: Vec<usize> = (0..n).filter(|&x| states[x].r == 0.0).collect();
        let center = match centers.as_slice() {
            [c] => *c,
            [] => return Err(Error::Validation("no center state (r = 0)".into())),
            _ => {
                return Err(Error::Validation(format!(
                    "{} states have r = 0; exactly one center is required",
                    centers.len()
                )))
            }
        };
        if kernel.len() != actions.len() {
            return Err(Error::Validation(format!(
                "kernel has {} action blocks, expected {}",
                kernel.len(),
                actions.len()
            )));
        }
        for (a, rows) in kernel.iter().enumerate() {
            if rows.len() != n {
                return Err(Error::Validation(format!(
                    "kernel block for action {:?} has {} rows, expected {n}",
                    actions[a],
                    rows.len()
                )));
            }
            for (x, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Validation(format!(
                        "row ({}, {}) has {} entries, expected {n}",
                        actions[a],
                        states[x].label,
                        row.len()
                    )));
                }
                for (y, &p) in row.iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::BadProbability {
                            action: actions[a].clone(),
                            state: states[x].label.clone(),
                            target: states[y].label.clone(),
                            value: p,
                        });
                    }
                }
                let sum = row_sum(row);
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::RowSum {
                        action: actions[a].clone(),
                        state: states[x].label.clone(),
                        sum,
                        deviation: sum - 1.0,
                    });
                }
            }
        }
        if cost.len() != n {
            return Err(Error::Validation(format!(
                "cost has {} rows, expected {n}",
                cost.len()
            )));
        }
        let mut flat = Vec::with_capacity(n * actions.len());
        for (x, per_state) in cost.iter().enumerate() {
            if per_state.len() != actions.len() {
                return Err(Error::Validation(format!(
                    "cost for state {:?} has {} entries, expected {}",
                    states[x].label,
                    per_state.len(),
                    actions.len()
                )));
            }
            for &c in per_state {
                if !c.is_finite() {
                    return Err(Error::Validation(format!(
                        "cost for state {:?} is not finite",
                        states[x].label
                    )));
                }
                flat.push(c);
            }
        }
        if let Some(mu) = &mu {
            validate_distribution(mu, n, "mu")?;
        }
        let c_bar = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let c_lower = flat.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(ControlledModel {
            kernel: SparseKernel::from_dense(n, &kernel),
            states,
            actions,
            cost: flat,
            mu,
            center,
            c_bar,
            c_lower,
        })
    }

    /// Converts a parsed file into a validated model.
    pub fn from_file(file: ModelFile) -> Result<Self> {
        let mut blocks = Vec::with_capacity(file.actions.len());
        let mut kernel = file.kernel;
        for a in &file.actions {
            match kernel.shift_remove(a) {
                Some(rows) => blocks.push(rows),
                None => {
                    return Err(Error::Validation(format!(
                        "kernel has no block for action {a:?}"
                    )))
                }
            }
        }
        if let Some((extra, _)) = kernel.first() {
            return Err(Error::Validation(format!(
                "kernel block {extra:?} names an undeclared action"
            )));
        }
        ControlledModel::new(file.states, file.actions, blocks, file.cost, file.mu)
    }

    /// Serializable form with dense rows. Rows are echoed exactly.
    pub fn to_file(&self) -> ModelFile {
        let n = self.num_states();
        let mut kernel = IndexMap::new();
        for (a, label) in self.actions.iter().enumerate() {
            let rows = (0..n).map(|x| self.kernel.dense_row(a, x)).collect();
            kernel.insert(label.clone(), rows);
        }
        let cost = (0..n)
            .map(|x| (0..self.num_actions()).map(|a| self.cost(x, a)).collect())
            .collect();
        ModelFile {
            states: self.states.clone(),
            actions: self.actions.clone(),
            kernel,
            cost,
            mu: self.mu.clone(),
            truncation: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> &[StateRecord] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn label(&self, x: usize) -> &str {
        &self.states[x].label
    }

    pub fn radius_of(&self, x: usize) -> f64 {
        self.states[x].r
    }

    pub fn max_radius(&self) -> f64 {
        self.states.iter().map(|s| s.r).fold(0.0, f64::max)
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s.label == label)
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == label)
    }

    /// Index of the unique state with `r = 0`.
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn cost(&self, x: usize, a: usize) -> f64 {
        self.cost[x * self.actions.len() + a]
    }

    pub fn row(&self, a: usize, x: usize) -> Row<'_> {
        self.kernel.row(a, x)
    }

    pub fn kernel(&self) -> &SparseKernel {
        &self.kernel
    }

    pub fn prob(&self, a: usize, x: usize, y: usize) -> f64 {
        self.kernel.row(a, x).get(y)
    }

    pub fn c_bar(&self) -> f64 {
        self.c_bar
    }

    pub fn c_lower(&self) -> f64 {
        self.c_lower
    }

    /// Restart measure from the file, if any.
    pub fn mu(&self) -> Option<&[f64]> {
        self.mu.as_deref()
    }

    /// Same model with every cost shifted by `kappa`.
    pub fn with_cost_shift(&self, kappa: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.cost {
            *c += kappa;
        }
        out.c_bar += kappa;
        out.c_lower += kappa;
        out
    }

    /// Same model with the restart measure replaced.
    pub fn with_mu(&self, mu: Vec<f64>) -> Result<Self> {
        validate_distribution(&mu, self.num_states(), "mu")?;
        let mut out = self.clone();
        out.mu = Some(mu);
        Ok(out)
    }
}

pub(crate) fn validate_distribution(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Validation(format!(
            "{what} has {} entries, expected {n}",
            v.len()
        )));
    }
    if v.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Validation(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::Validation(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

/// Parses and validates a model from a byte stream in the JSON model format.
pub fn load_model<R: Read>(source: R) -> Result<ControlledModel> {
    let file: ModelFile = serde_json::from_reader(source)?;
    ControlledModel::from_file(file)
}

pub fn load_model_str(s: &str) -> Result<ControlledModel> {
    load_model(s.as_bytes())
}

/// Row-sum deviation beyond tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSumError {
    pub action: String,
    pub state: String,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub c_bar: f64,
    pub c_lower: f64,
    pub is_constant_cost: bool,
    pub row_sum_errors: Vec<RowSumError>,
    pub strong_feller_note: String,
}

/// Summarizes cost bounds and re-checks stochasticity of every row.
pub fn validate(model: &ControlledModel) -> ValidationReport {
    let mut row_sum_errors = Vec::new();
    for a in 0..model.num_actions() {
        for x in 0..model.num_states() {
            let s: f64 = model.row(a, x).probs.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                row_sum_errors.push(RowSumError {
                    action: model.actions[a].clone(),
                    state: model.label(x).to_string(),
                    deviation: s - 1.0,
                });
            }
        }
    }
    let is_constant_cost = model.c_bar - model.c_lower == 0.0;
    let mut note = String::from(
        "finite state and action sets: the kernel is continuous in variation norm trivially",
    );
    if is_constant_cost {
        note.push_str("; warning: constant cost, every strategy is optimal");
    }
    ValidationReport {
        c_bar: model.c_bar,
        c_lower: model.c_lower,
        is_constant_cost,
        row_sum_errors,
        strong_feller_note: note,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STATE: &str = r#"{
        "states": [{"label": "a", "r": 0}, {"label": "b", "r": 1}],
        "actions": ["go"],
        "kernel": {"go": [[0.5, 0.5], [0.5, 0.5]]},
        "cost": [[0.25], [-1.5]]
    }"#;

    #[test]
    fn loads_two_state_model() {
        let m = load_model_str(TWO_STATE).unwrap();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.num_actions(), 1);
        assert_eq!(m.c_bar(), 0.25);
        assert_eq!(m.c_lower(), -1.5);
        assert_eq!(m.center(), 0);
        assert!(m.mu().is_none());
        let r = validate(&m);
        assert!(r.row_sum_errors.is_empty());
        assert!(!r.is_constant_cost);
    }

    #[test]
    fn rejects_short_row_and_names_it() {
        let bad = TWO_STATE.replace("[0.5, 0.5], [0.5, 0.5]", "[0.5, 0.5], [0.5, 0.4]");
        match load_model_str(&bad) {
            Err(Error::RowSum { action, state, .. }) => {
                assert_eq!(action, "go");
                assert_eq!(state, "b");
            }
            other => panic!("expected row-sum error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_probability() {
        let bad = TWO_STATE.replace("[0.5, 0.5], [0.5, 0.5]", "[1.5, -0.5], [0.5, 0.5]");
        assert!(matches!(
            load_model_str(&bad),
            Err(Error::BadProbability { .. })
        ));
    }

    #[test]
    fn rejects_missing_center() {
        let bad = TWO_STATE.replace("\"r\": 0}", "\"r\": 2}");
        let err = load_model_str(&bad).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("center"));
    }

    #[test]
    fn rejects_two_centers() {
        let bad = TWO_STATE.replace("\"r\": 1}", "\"r\": 0}");
        assert!(load_model_str(&bad).is_err());
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(
            load_model_str("{\"states\": ["),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn constant_cost_is_flagged_not_rejected() {
        let src = TWO_STATE.replace("[[0.25], [-1.5]]", "[[0.7], [0.7]]");
        let m = load_model_str(&src).unwrap();
        let r = validate(&m);
        assert!(r.is_constant_cost);
        assert_eq!(r.c_bar, 0.7);
        assert!(r.strong_feller_note.contains("constant cost"));
    }

    #[test]
    fn roundtrip_is_exact() {
        let m = load_model_str(TWO_STATE).unwrap();
        let back = load_model_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn kernel_rows_are_sparse_and_ordered() {
        let k = SparseKernel::from_dense(
            3,
            &[vec![
                vec![0.0, 0.3, 0.7],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ]],
        );
        let r = k.row(0, 0);
        assert_eq!(r.cols, &[1, 2]);
        assert_eq!(r.get(2), 0.7);
        assert_eq!(r.get(0), 0.0);
        assert_eq!(k.dense_row(0, 1), vec![1.0, 0.0, 0.0]);
    }
}
