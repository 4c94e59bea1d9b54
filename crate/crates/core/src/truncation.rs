//! Ball truncations of a controlled model.
//!
//! On the ball `B_n` the kernel is kept and mass leaving the ball restarts
//! from `mu`. On the shell `B_{n+1} \ B_n` the row is blended toward `mu` and
//! the cost toward the minimal cost, linearly in the distance to `B_n`.
//! Every state beyond the shell restarts from `mu` immediately, so those
//! states are merged into one exterior state.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{MarkovModel, Mode};
use crate::model::{
    validate_distribution, ControlledModel, ModelFile, Row, SparseKernel, StateRecord,
    TruncationAnnotation,
};

/// Label given to the merged exterior state.
pub const EXTERIOR_LABEL: &str = "__exterior__";

/// Ball radii as a function of the ball index `n >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum RadiusRule {
    /// `radius(n) = scale * n`
    Linear { scale: f64 },
    /// `radius(n) = radii[n - 1]`
    Table { radii: Vec<f64> },
}

impl Default for RadiusRule {
    fn default() -> Self {
        RadiusRule::Linear { scale: 1.0 }
    }
}

impl RadiusRule {
    pub fn radius(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::Scheme("ball index starts at 1".into()));
        }
        match self {
            RadiusRule::Linear { scale } => Ok(scale * n as f64),
            RadiusRule::Table { radii } => radii
                .get(n - 1)
                .copied()
                .ok_or_else(|| Error::Scheme(format!("radius table has no entry for n = {n}"))),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            RadiusRule::Linear { scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::Scheme(format!(
                        "radius scale {scale} must be positive"
                    )));
                }
            }
            RadiusRule::Table { radii } => {
                if radii.is_empty() {
                    return Err(Error::Scheme("empty radius table".into()));
                }
                if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(Error::Scheme("radii must be positive and finite".into()));
                }
                if radii.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Scheme("radii must be nondecreasing".into()));
                }
            }
        }
        Ok(())
    }
}

/// Radii and restart measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationScheme {
    pub radii: RadiusRule,
    pub mu: Vec<f64>,
    pub mu_support_radius: f64,
}

impl TruncationScheme {
    /// Uses `mu` if given, else the model's own `mu`, else the point mass at
    /// the center.
    pub fn new(model: &ControlledModel, radii: RadiusRule, mu: Option<Vec<f64>>) -> Result<Self> {
        radii.check()?;
        let mu = match mu.or_else(|| model.mu().map(<[f64]>::to_vec)) {
            Some(mu) => mu,
            None => {
                let mut d = vec![0.0; model.num_states()];
                d[model.center()] = 1.0;
                d
            }
        };
        validate_distribution(&mu, model.num_states(), "mu")?;
        let mu_support_radius = mu
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(x, _)| model.radius_of(x))
            .fold(0.0, f64::max);
        let r1 = radii.radius(1)?;
        if mu_support_radius > r1 {
            return Err(Error::Scheme(format!(
                "mu has mass at radius {mu_support_radius}, outside the first ball (radius {r1})"
            )));
        }
        Ok(TruncationScheme {
            radii,
            mu,
            mu_support_radius,
        })
    }

    pub fn default_for(model: &ControlledModel) -> Result<Self> {
        Self::new(model, RadiusRule::default(), None)
    }

    pub fn radius(&self, n: usize) -> Result<f64> {
        self.radii.radius(n)
    }
}

/// Radial proxy for the distance from `x` to `B_n`.
pub fn distance_to_ball(
    model: &ControlledModel,
    scheme: &TruncationScheme,
    x: usize,
    n: usize,
) -> Result<f64> {
    Ok((model.radius_of(x) - scheme.radius(n)?).max(0.0))
}

/// Truncated model on `B_{n+1}` plus one exterior state.
#[derive(Debug, Clone)]
pub struct TruncatedModel {
    n: usize,
    radius: f64,
    parent: Arc<ControlledModel>,
    /// Parent indices of the interior states, in parent order.
    interior: Vec<usize>,
    /// Parent index -> local index; merged states map to the exterior.
    local_of: Vec<usize>,
    labels: Vec<String>,
    kernel: SparseKernel,
    cost: Vec<f64>,
    in_ball: Vec<bool>,
    mu_local: Vec<f64>,
    c_lower: f64,
}

/// Builds the truncated kernel and cost for ball index `n`.
pub fn build_truncated(
    model: &Arc<ControlledModel>,
    scheme: &TruncationScheme,
    n: usize,
) -> Result<TruncatedModel> {
    let radius = scheme.radius(n)?;
    let r1 = scheme.radius(1)?;
    if scheme.mu_support_radius > r1 {
        return Err(Error::Scheme("mu has mass outside the first ball".into()));
    }
    validate_distribution(&scheme.mu, model.num_states(), "mu")?;
    let parent_n = model.num_states();
    let n_actions = model.num_actions();
    let in_parent_ball: Vec<bool> = (0..parent_n)
        .map(|x| model.radius_of(x) <= radius)
        .collect();
    if !in_parent_ball.iter().any(|&b| b) {
        return Err(Error::Scheme(format!(
            "ball {n} (radius {radius}) is empty"
        )));
    }
    let interior: Vec<usize> = (0..parent_n)
        .filter(|&x| model.radius_of(x) <= radius + 1.0)
        .collect();
    let exterior = interior.len();
    let mut local_of = vec![exterior; parent_n];
    for (i, &x) in interior.iter().enumerate() {
        local_of[x] = i;
    }
    let size = exterior + 1;
    let mut mu_local = vec![0.0; size];
    for (x, &p) in scheme.mu.iter().enumerate() {
        if p > 0.0 {
            mu_local[local_of[x]] += p;
        }
    }
    let mu_row: Vec<(usize, f64)> = mu_local
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (i, p))
        .collect();
    let c_lower = model.c_lower();

    let mut rows = vec![Vec::with_capacity(size); n_actions];
    let mut cost = vec![0.0; size * n_actions];
    for (i, &x) in interior.iter().enumerate() {
        let d = (model.radius_of(x) - radius).max(0.0);
        let keep = (1.0 - d).max(0.0);
        let blend = d.min(1.0);
        for a in 0..n_actions {
            let prow = model.row(a, x);
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(prow.len() + mu_row.len());
            let mut leak = 0.0;
            for (y, p) in prow.iter() {
                if in_parent_ball[y] {
                    if keep > 0.0 {
                        entries.push((local_of[y], if d == 0.0 { p } else { keep * p }));
                    }
                } else {
                    leak += p;
                }
            }
            let restart = if d >= 1.0 {
                1.0
            } else {
                leak + blend * (1.0 - leak)
            };
            if restart > 0.0 {
                for &(y, m) in &mu_row {
                    entries.push((y, m * restart));
                }
            }
            rows[a].push(merge_entries(entries));
            cost[i * n_actions + a] = if d == 0.0 {
                model.cost(x, a)
            } else {
                keep * model.cost(x, a) + blend * c_lower
            };
        }
    }
    for a in 0..n_actions {
        rows[a].push(mu_row.clone());
        cost[exterior * n_actions + a] = c_lower;
    }
    let mut labels: Vec<String> = interior
        .iter()
        .map(|&x| model.label(x).to_string())
        .collect();
    labels.push(EXTERIOR_LABEL.to_string());
    let mut in_ball: Vec<bool> = interior.iter().map(|&x| in_parent_ball[x]).collect();
    in_ball.push(false);

    Ok(TruncatedModel {
        n,
        radius,
        parent: Arc::clone(model),
        interior,
        local_of,
        labels,
        kernel: SparseKernel::from_sparse(size, rows),
        cost,
        in_ball,
        mu_local,
        c_lower,
    })
}

fn merge_entries(mut entries: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    // stable sort keeps the kernel term ahead of the restart term
    entries.sort_by_key(|&(y, _)| y);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (y, p) in entries {
        match out.last_mut() {
            Some(last) if last.0 == y => last.1 += p,
            _ => out.push((y, p)),
        }
    }
    out
}

impl TruncatedModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn parent(&self) -> &Arc<ControlledModel> {
        &self.parent
    }

    /// Local index of the exterior state (always the last one).
    pub fn exterior(&self) -> usize {
        self.interior.len()
    }

    /// Parent indices of the interior states.
    pub fn interior_states(&self) -> &[usize] {
        &self.interior
    }

    /// Local index of a parent state (merged states give the exterior).
    pub fn local_index(&self, parent_state: usize) -> usize {
        self.local_of[parent_state]
    }

    /// Parent index of a local state, `None` for the exterior.
    pub fn parent_index(&self, local: usize) -> Option<usize> {
        self.interior.get(local).copied()
    }

    /// Local states lying in `B_n` (distance zero).
    pub fn in_ball(&self, local: usize) -> bool {
        self.in_ball[local]
    }

    pub fn mu_local(&self) -> &[f64] {
        &self.mu_local
    }

    /// Dense row over local states.
    pub fn dense_row(&self, a: usize, x: usize) -> Vec<f64> {
        self.kernel.dense_row(a, x)
    }

    /// Lifts a local vector to the parent state space.
    pub fn lift(&self, local: &[f64]) -> Vec<f64> {
        self.local_of.iter().map(|&i| local[i]).collect()
    }

    /// Total-variation distance between the truncated row of a parent
    /// interior state and its original row.
    pub fn kernel_tv(&self, a: usize, parent_state: usize) -> f64 {
        let i = self.local_of[parent_state];
        let parent_n = self.parent.num_states();
        let mut pulled = vec![0.0; parent_n];
        let mut exterior_mass = 0.0;
        for (y, p) in self.kernel.row(a, i).iter() {
            match self.parent_index(y) {
                Some(py) => pulled[py] += p,
                None => exterior_mass += p,
            }
        }
        let orig = self.parent.kernel().dense_row(a, parent_state);
        let diff: f64 = pulled.iter().zip(&orig).map(|(p, q)| (p - q).abs()).sum();
        0.5 * (diff + exterior_mass)
    }

    /// Model-file form with a truncation annotation.
    pub fn to_file(&self) -> ModelFile {
        let size = self.num_states();
        let n_actions = self.num_actions();
        let mut states: Vec<StateRecord> = self
            .interior
            .iter()
            .map(|&x| self.parent.states()[x].clone())
            .collect();
        let ext_r = self
            .local_of
            .iter()
            .enumerate()
            .filter(|(_, &i)| i == self.exterior())
            .map(|(x, _)| self.parent.radius_of(x))
            .fold(self.radius + 1.0, f64::max);
        states.push(StateRecord {
            label: EXTERIOR_LABEL.into(),
            r: ext_r,
        });
        let mut kernel = indexmap::IndexMap::new();
        for (a, label) in self.parent.actions().iter().enumerate() {
            kernel.insert(
                label.clone(),
                (0..size).map(|x| self.kernel.dense_row(a, x)).collect(),
            );
        }
        ModelFile {
            states,
            actions: self.parent.actions().to_vec(),
            kernel,
            cost: (0..size)
                .map(|x| (0..n_actions).map(|a| self.cost(x, a)).collect())
                .collect(),
            mu: Some(self.mu_local.clone()),
            truncation: Some(TruncationAnnotation {
                n: self.n,
                radius: self.radius,
                exterior_label: EXTERIOR_LABEL.into(),
            }),
        }
    }
}

impl MarkovModel for TruncatedModel {
    fn num_states(&self) -> usize {
        self.interior.len() + 1
    }

    fn num_actions(&self) -> usize {
        self.parent.num_actions()
    }

    fn cost(&self, x: usize, a: usize) -> f64 {
        self.cost[x * self.parent.num_actions() + a]
    }

    fn row(&self, a: usize, x: usize) -> Row<'_> {
        self.kernel.row(a, x)
    }

    fn label(&self, x: usize) -> &str {
        &self.labels[x]
    }

    fn is_interior(&self, x: usize) -> bool {
        x != self.exterior()
    }

    fn cost_bounds(&self) -> (f64, f64) {
        let hi = self.cost.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (self.c_lower, hi)
    }

    /// Accessibility through the subtransition kernels of the parent on `B_n`.
    fn accessibility_precheck(&self, mode: Mode) -> bool {
        let ball = crate::checks::ball_mask(&self.parent, self.radius);
        crate::checks::all_pairs_reachable(self.parent.as_ref(), &ball, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateRecord;

    fn line_model() -> Arc<ControlledModel> {
        // s1 (r=0) -> s2 (r=1.0), s2 -> {s1: .7, s3: .3}, s3 (r=4.5) -> s4, s4 (r=7) -> s1
        let states = vec![
            StateRecord {
                label: "s1".into(),
                r: 0.0,
            },
            StateRecord {
                label: "s2".into(),
                r: 1.0,
            },
            StateRecord {
                label: "s3".into(),
                r: 4.5,
            },
            StateRecord {
                label: "s4".into(),
                r: 7.0,
            },
        ];
        let rows = vec![vec![
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.7, 0.0, 0.3, 0.0],
            vec![0.0, 0.7, 0.0, 0.3],
            vec![1.0, 0.0, 0.0, 0.0],
        ]];
        let cost = vec![vec![1.0], vec![2.0], vec![3.0], vec![-1.0]];
        Arc::new(ControlledModel::new(states, vec!["a".into()], rows, cost, None).unwrap())
    }

    #[test]
    fn distance_uses_radial_proxy() {
        let m = line_model();
        let s = TruncationScheme::default_for(&m).unwrap();
        assert_eq!(distance_to_ball(&m, &s, 0, 1).unwrap(), 0.0);
        assert_eq!(distance_to_ball(&m, &s, 2, 4).unwrap(), 0.5);
        assert_eq!(distance_to_ball(&m, &s, 3, 4).unwrap(), 3.0);
    }

    #[test]
    fn shell_row_blends_toward_mu() {
        let m = line_model();
        let s = TruncationScheme::default_for(&m).unwrap();
        let t = build_truncated(&m, &s, 4).unwrap();
        // s3 has distance 0.5; 0.7 of its mass stays in B_4 on s2
        let i = t.local_index(2);
        let row = t.dense_row(0, i);
        assert!((row[t.local_index(1)] - 0.35).abs() < 1e-15);
        assert!((row[t.local_index(0)] - 0.65).abs() < 1e-15);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // cost interpolates halfway to the minimal cost
        assert_eq!(t.cost(i, 0), 0.5 * 3.0 - 0.5);
    }

    #[test]
    fn far_states_merge_into_exterior() {
        let m = line_model();
        let s = TruncationScheme::default_for(&m).unwrap();
        let t = build_truncated(&m, &s, 4).unwrap();
        assert_eq!(t.interior_states(), &[0, 1, 2]);
        assert_eq!(t.local_index(3), t.exterior());
        let ext = t.dense_row(0, t.exterior());
        assert_eq!(ext, t.mu_local());
        assert_eq!(t.cost(t.exterior(), 0), -1.0);
    }

    #[test]
    fn interior_row_without_leak_is_unchanged() {
        let m = line_model();
        let s = TruncationScheme::default_for(&m).unwrap();
        let t = build_truncated(&m, &s, 1).unwrap();
        // s1 -> s2 stays inside B_1
        assert_eq!(t.dense_row(0, 0)[1], 1.0);
        assert_eq!(t.cost(0, 0), 1.0);
        assert_eq!(t.kernel_tv(0, 0), 0.0);
        // s2 leaks 0.3 to s3, which restarts at the center
        let row = t.dense_row(0, 1);
        assert_eq!(row[0], 0.7 + 0.3);
    }

    #[test]
    fn mu_outside_first_ball_is_rejected() {
        let m = line_model();
        let err = TruncationScheme::new(&m, RadiusRule::default(), Some(vec![0.0, 0.0, 1.0, 0.0]));
        assert!(err.is_err());
    }

    #[test]
    fn radius_table_must_be_nondecreasing() {
        let m = line_model();
        let rule = RadiusRule::Table {
            radii: vec![2.0, 1.0],
        };
        assert!(TruncationScheme::new(&m, rule, None).is_err());
        let rule = RadiusRule::Table {
            radii: vec![1.0, 3.0],
        };
        let s = TruncationScheme::new(&m, rule, None).unwrap();
        assert_eq!(s.radius(2).unwrap(), 3.0);
        assert!(s.radius(3).is_err());
    }

    #[test]
    fn truncated_file_loads_as_model() {
        let m = line_model();
        let s = TruncationScheme::default_for(&m).unwrap();
        let t = build_truncated(&m, &s, 4).unwrap();
        let json = serde_json::to_string(&t.to_file()).unwrap();
        let back = crate::model::load_model_str(&json).unwrap();
        assert_eq!(back.num_states(), 4);
        assert_eq!(back.label(3), EXTERIOR_LABEL);
    }
}
