//! Nonlinear eigenproblem `T v = e^lambda v` for the sup/inf Bellman operator
//! `T f(x) = best_a e^{c(x,a)} sum_y P^a(x,y) f(y)`.
//!
//! The solver runs a damped power iteration on `w = ln v`. Each step replaces
//! `v` by `T v + delta e^{lambda_hat} v` (with `lambda_hat` the current bracket
//! midpoint), which leaves eigenvectors fixed but breaks the periodicity of
//! cyclic kernels. Convergence is measured by the span of `ln(Tv/v)`, whose
//! min and max form the Collatz–Wielandt bracket on `lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{FixedPolicy, MarkovModel, Mode};

/// `ln v` below this means `v` underflows in double precision.
pub const LOG_FLOOR: f64 = -708.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub mode: Mode,
    /// Damping weight relative to the current growth estimate; must be positive.
    pub damping: f64,
    pub tol_span: f64,
    pub max_iters: usize,
    /// Keep the bracket of every iteration in [`EigenSolution::trace`].
    #[serde(default)]
    pub record_trace: bool,
    /// Run the accessibility precheck used for the positivity certificate.
    #[serde(default = "yes")]
    pub certify: bool,
}

fn yes() -> bool {
    true
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            mode: Mode::Max,
            damping: 1.0,
            tol_span: 1e-10,
            max_iters: 100_000,
            record_trace: false,
            certify: true,
        }
    }
}

impl SolverOptions {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol_span = tol;
        self
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_damping(mut self, delta: f64) -> Self {
        self.damping = delta;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.damping.is_finite() && self.damping > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "damping must be positive, got {}",
                self.damping
            )));
        }
        if !(self.tol_span.is_finite() && self.tol_span > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol_span must be positive, got {}",
                self.tol_span
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSolution {
    pub mode: Mode,
    pub lambda: f64,
    pub cw_lower: f64,
    pub cw_upper: f64,
    pub residual_sup: f64,
    pub iterations: usize,
    /// Log-eigenfunction in state order, max over interior states is 0.
    pub w: Vec<f64>,
    pub positivity_certified: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<(f64, f64)>,
}

impl EigenSolution {
    pub fn bracket_width(&self) -> f64 {
        self.cw_upper - self.cw_lower
    }

    /// `v = e^w`.
    pub fn eigenvector(&self) -> Vec<f64> {
        self.w.iter().map(|w| w.exp()).collect()
    }
}

#[inline]
fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Row-compressed copy of a model with log-probabilities, for the log-space
/// Bellman step.
pub(crate) struct LogOperator {
    n: usize,
    n_actions: usize,
    costs: Vec<f64>,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    logp: Vec<f64>,
}

impl LogOperator {
    pub(crate) fn new<M: MarkovModel>(model: &M) -> Self {
        let n = model.num_states();
        let n_actions = model.num_actions();
        let mut costs = Vec::with_capacity(n * n_actions);
        let mut offsets = Vec::with_capacity(n * n_actions + 1);
        let mut cols = Vec::new();
        let mut logp = Vec::new();
        offsets.push(0);
        for x in 0..n {
            for a in 0..n_actions {
                costs.push(model.cost(x, a));
                for (y, p) in model.row(a, x).iter() {
                    cols.push(y);
                    logp.push(p.ln());
                }
                offsets.push(cols.len());
            }
        }
        LogOperator {
            n,
            n_actions,
            costs,
            offsets,
            cols,
            logp,
        }
    }

    /// `ln sum_y P(x,y|a) e^{w(y)}` for the entry `x * n_actions + a`.
    #[inline]
    fn row_lse(&self, k: usize, w: &[f64]) -> f64 {
        let (s, e) = (self.offsets[k], self.offsets[k + 1]);
        if e - s == 1 {
            return self.logp[s] + w[self.cols[s]];
        }
        let mut m = f64::NEG_INFINITY;
        for i in s..e {
            m = m.max(self.logp[i] + w[self.cols[i]]);
        }
        let mut acc = 0.0;
        for i in s..e {
            acc += (self.logp[i] + w[self.cols[i]] - m).exp();
        }
        m + acc.ln()
    }

    /// Log of the action value `c(x,a) + ln sum_y P e^w`.
    #[inline]
    pub(crate) fn action_value(&self, x: usize, a: usize, w: &[f64]) -> f64 {
        let k = x * self.n_actions + a;
        self.costs[k] + self.row_lse(k, w)
    }

    /// `out[x] = ln (T e^w)(x)`; ties go to the lowest action index.
    pub(crate) fn apply(&self, w: &[f64], mode: Mode, out: &mut [f64]) {
        for (x, o) in out.iter_mut().enumerate().take(self.n) {
            let mut best = self.action_value(x, 0, w);
            for a in 1..self.n_actions {
                let v = self.action_value(x, a, w);
                if mode.better(v, best) {
                    best = v;
                }
            }
            *o = best;
        }
    }

    /// Best action per state for the log-eigenfunction `w`.
    pub(crate) fn selector(&self, w: &[f64], mode: Mode) -> Vec<usize> {
        (0..self.n)
            .map(|x| {
                let mut best = self.action_value(x, 0, w);
                let mut arg = 0;
                for a in 1..self.n_actions {
                    let v = self.action_value(x, a, w);
                    if mode.better(v, best) {
                        best = v;
                        arg = a;
                    }
                }
                arg
            })
            .collect()
    }
}

/// Linear-space copy of a model, used while `v = e^w` stays well inside the
/// double range. Much cheaper per step than the log-space operator.
struct LinearOperator {
    n: usize,
    n_actions: usize,
    ecost: Vec<f64>,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
}

/// Entries of `v` below this hand over to the log-space loop.
const LINEAR_FLOOR: f64 = 1e-200;

impl LinearOperator {
    fn new<M: MarkovModel>(model: &M) -> Option<Self> {
        let (lo, hi) = model.cost_bounds();
        if lo < -300.0 || hi > 300.0 {
            return None;
        }
        let n = model.num_states();
        let n_actions = model.num_actions();
        let mut ecost = Vec::with_capacity(n * n_actions);
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        for x in 0..n {
            for a in 0..n_actions {
                ecost.push(model.cost(x, a).exp());
                let row = model.row(a, x);
                cols.extend_from_slice(row.cols);
                probs.extend_from_slice(row.probs);
                offsets.push(cols.len());
            }
        }
        Some(LinearOperator {
            n,
            n_actions,
            ecost,
            offsets,
            cols,
            probs,
        })
    }

    #[inline]
    fn row_dot(&self, k: usize, v: &[f64]) -> f64 {
        let (s, e) = (self.offsets[k], self.offsets[k + 1]);
        let mut acc = 0.0;
        for (p, &y) in self.probs[s..e].iter().zip(&self.cols[s..e]) {
            acc += p * v[y];
        }
        self.ecost[k] * acc
    }

    fn apply(&self, v: &[f64], mode: Mode, out: &mut [f64]) {
        if self.n_actions == 1 {
            for (k, o) in out.iter_mut().enumerate() {
                *o = self.row_dot(k, v);
            }
            return;
        }
        for (x, o) in out.iter_mut().enumerate().take(self.n) {
            let base = x * self.n_actions;
            let mut best = self.row_dot(base, v);
            for a in 1..self.n_actions {
                let val = self.row_dot(base + a, v);
                if mode.better(val, best) {
                    best = val;
                }
            }
            *o = best;
        }
    }

    /// Same damped iteration as the log loop, run until the bracket closes,
    /// the budget runs out or `v` gets too small. Returns `ln v` and the
    /// number of updates made.
    fn iterate(&self, opts: &SolverOptions) -> (Vec<f64>, usize) {
        let mut v = vec![1.0; self.n];
        let mut t = vec![0.0; self.n];
        let mut iterations = 0;
        while iterations < opts.max_iters {
            self.apply(&v, opts.mode, &mut t);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (tx, vx) in t.iter().zip(&v) {
                let r = tx / vx;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            if !(lo > 0.0 && hi.is_finite()) || hi.ln() - lo.ln() <= opts.tol_span {
                break;
            }
            let shift = opts.damping * (lo * hi).sqrt();
            let mut top = 0.0f64;
            for (vx, tx) in v.iter_mut().zip(&t) {
                *vx = tx + shift * *vx;
                top = top.max(*vx);
            }
            let mut floor = f64::INFINITY;
            for vx in &mut v {
                *vx /= top;
                floor = floor.min(*vx);
            }
            iterations += 1;
            if floor < LINEAR_FLOOR {
                break;
            }
        }
        (v.iter().map(|x| x.ln()).collect(), iterations)
    }
}

fn bracket(g: &[f64], w: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (gx, wx) in g.iter().zip(w) {
        let r = gx - wx;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

/// Applies the Bellman operator to a strictly positive vector.
pub fn apply_bellman<M: MarkovModel>(model: &M, f: &[f64], mode: Mode) -> Result<Vec<f64>> {
    check_positive(model, f)?;
    let out = (0..model.num_states())
        .map(|x| {
            let mut best = f64::NAN;
            for a in 0..model.num_actions() {
                let s: f64 = model.row(a, x).iter().map(|(y, p)| p * f[y]).sum();
                let v = model.cost(x, a).exp() * s;
                if a == 0 || mode.better(v, best) {
                    best = v;
                }
            }
            best
        })
        .collect();
    Ok(out)
}

fn check_positive<M: MarkovModel>(model: &M, v: &[f64]) -> Result<()> {
    if v.len() != model.num_states() {
        return Err(Error::InvalidArgument(format!(
            "vector has {} entries, model has {} states",
            v.len(),
            model.num_states()
        )));
    }
    if let Some(x) = v.iter().position(|&f| !(f > 0.0 && f.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "entry {} at state {:?} is not strictly positive and finite",
            v[x],
            model.label(x)
        )));
    }
    Ok(())
}

/// Collatz–Wielandt bracket `[min_x ln(Tv/v), max_x ln(Tv/v)]`.
pub fn collatz_wielandt<M: MarkovModel>(model: &M, v: &[f64], mode: Mode) -> Result<(f64, f64)> {
    check_positive(model, v)?;
    let w: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let op = LogOperator::new(model);
    let mut g = vec![0.0; w.len()];
    op.apply(&w, mode, &mut g);
    Ok(bracket(&g, &w))
}

/// Solves `T v = e^lambda v` by damped power iteration from `v = 1`.
pub fn solve_eigen<M: MarkovModel>(model: &M, opts: &SolverOptions) -> Result<EigenSolution> {
    opts.check()?;
    let n = model.num_states();
    if n == 0 || model.num_actions() == 0 {
        return Err(Error::InvalidArgument("empty model".into()));
    }
    let op = LogOperator::new(model);
    let ln_delta = opts.damping.ln();
    let (mut w, mut iterations) = match LinearOperator::new(model) {
        Some(lin) if !opts.record_trace => lin.iterate(opts),
        _ => (vec![0.0; n], 0),
    };
    let mut g = vec![0.0; n];
    let mut trace = Vec::new();
    let (lo, hi) = loop {
        op.apply(&w, opts.mode, &mut g);
        let (lo, hi) = bracket(&g, &w);
        if opts.record_trace {
            trace.push((lo, hi));
        }
        if hi - lo <= opts.tol_span {
            break (lo, hi);
        }
        if iterations == opts.max_iters || !(hi - lo).is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                cw_lower: lo,
                cw_upper: hi,
            });
        }
        let shift = ln_delta + 0.5 * (lo + hi);
        let mut top = f64::NEG_INFINITY;
        for (wx, gx) in w.iter_mut().zip(&g) {
            *wx = ln_add_exp(*gx, shift + *wx);
            top = top.max(*wx);
        }
        let mut floor = (f64::INFINITY, 0);
        for (x, wx) in w.iter_mut().enumerate() {
            *wx -= top;
            if *wx < floor.0 {
                floor = (*wx, x);
            }
        }
        iterations += 1;
        if floor.0 < LOG_FLOOR {
            return Err(Error::Collapse {
                state: model.label(floor.1).to_string(),
                iterations,
            });
        }
    };
    // [c_lower, c_bar] also encloses lambda; clamping absorbs row-sum rounding
    let (c_lo, c_hi) = model.cost_bounds();
    let (lo, hi) = (lo.clamp(c_lo, c_hi), hi.clamp(c_lo, c_hi));
    let lambda = 0.5 * (lo + hi);
    let residual_sup = g
        .iter()
        .zip(&w)
        .map(|(gx, wx)| (gx - lambda - wx).abs())
        .fold(0.0, f64::max);
    let top = (0..n)
        .filter(|&x| model.is_interior(x))
        .map(|x| w[x])
        .fold(f64::NEG_INFINITY, f64::max);
    for wx in &mut w {
        *wx -= top;
    }
    let positive = w.iter().all(|&x| x > LOG_FLOOR);
    let positivity_certified =
        positive && (!opts.certify || model.accessibility_precheck(opts.mode));
    Ok(EigenSolution {
        mode: opts.mode,
        lambda,
        cw_lower: lo,
        cw_upper: hi,
        residual_sup,
        iterations,
        w,
        positivity_certified: positivity_certified && opts.certify,
        trace,
    })
}

/// Bellman selector of a log-eigenfunction (ties to the lowest action index).
pub fn bellman_selector<M: MarkovModel>(model: &M, w: &[f64], mode: Mode) -> Vec<usize> {
    LogOperator::new(model).selector(w, mode)
}

/// Growth rate of the linear operator `f -> e^{c(x,u(x))} sum_y P(x,y|u(x)) f(y)`
/// for a fixed stationary selector `u`.
pub fn policy_eigen<M: MarkovModel>(
    model: &M,
    policy: &[usize],
    opts: &SolverOptions,
) -> Result<f64> {
    let view = FixedPolicy::new(model, policy)?;
    let opts = SolverOptions {
        mode: Mode::Max,
        certify: false,
        record_trace: false,
        ..opts.clone()
    };
    Ok(solve_eigen(&view, &opts)?.lambda)
}

/// `(1/m) ln max_x (T^m 1)(x)`, iterated in log space.
pub fn finite_horizon_oracle<M: MarkovModel>(model: &M, m: usize, mode: Mode) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let n = model.num_states();
    let mut u = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..m {
        for (x, slot) in next.iter_mut().enumerate() {
            let mut best = f64::NAN;
            for a in 0..model.num_actions() {
                let terms: Vec<f64> = model.row(a, x).iter().map(|(y, p)| p.ln() + u[y]).collect();
                let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = terms.iter().map(|t| (t - top).exp()).sum();
                let v = model.cost(x, a) + top + s.ln();
                if a == 0 || mode.better(v, best) {
                    best = v;
                }
            }
            *slot = best;
        }
        std::mem::swap(&mut u, &mut next);
    }
    Ok(u.iter().copied().fold(f64::NEG_INFINITY, f64::max) / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ControlledModel, StateRecord};

    fn model(rows: Vec<Vec<Vec<f64>>>, cost: Vec<Vec<f64>>) -> ControlledModel {
        let n = cost.len();
        let states = (0..n)
            .map(|i| StateRecord {
                label: format!("s{}", i + 1),
                r: i as f64,
            })
            .collect();
        let actions = (0..rows.len()).map(|a| format!("a{a}")).collect();
        ControlledModel::new(states, actions, rows, cost, None).unwrap()
    }

    #[test]
    fn single_state_self_loop() {
        let m = model(vec![vec![vec![1.0]]], vec![vec![0.3]]);
        let s = solve_eigen(&m, &SolverOptions::default()).unwrap();
        assert_eq!(s.lambda, 0.3);
        assert_eq!(s.w, vec![0.0]);
        assert_eq!(s.residual_sup, 0.0);
        assert_eq!(s.iterations, 0);
        assert!(s.positivity_certified);
    }

    #[test]
    fn apply_on_constant_cost_scales_by_exp() {
        let m = model(
            vec![vec![vec![0.2, 0.8], vec![0.6, 0.4]]],
            vec![vec![0.4], vec![0.4]],
        );
        let g = apply_bellman(&m, &[1.0, 1.0], Mode::Max).unwrap();
        for v in g {
            assert!((v - 0.4f64.exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn apply_picks_sup_or_inf_over_actions() {
        let row = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let m = model(vec![row.clone(), row], vec![vec![0.0, 2f64.ln()]; 2]);
        let hi = apply_bellman(&m, &[1.0, 1.0], Mode::Max).unwrap();
        let lo = apply_bellman(&m, &[1.0, 1.0], Mode::Min).unwrap();
        for x in 0..2 {
            assert!((hi[x] - 2.0).abs() < 1e-15);
            assert_eq!(lo[x], 1.0);
        }
    }

    #[test]
    fn apply_rejects_nonpositive_vector() {
        let m = model(vec![vec![vec![1.0]]], vec![vec![0.0]]);
        assert!(apply_bellman(&m, &[0.0], Mode::Max).is_err());
        assert!(collatz_wielandt(&m, &[-1.0], Mode::Max).is_err());
    }

    #[test]
    fn two_state_uncontrolled_root() {
        // diag(1, 2) * [[.5,.5],[.5,.5]] has Perron root 1.5
        let m = model(
            vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
            vec![vec![0.0], vec![2f64.ln()]],
        );
        for mode in [Mode::Max, Mode::Min] {
            let s = solve_eigen(&m, &SolverOptions::default().with_mode(mode)).unwrap();
            assert!((s.lambda - 1.5f64.ln()).abs() < 1e-10, "{}", s.lambda);
            assert!(s.bracket_width() <= 1e-10);
        }
    }

    #[test]
    fn bad_options_are_rejected() {
        let m = model(vec![vec![vec![1.0]]], vec![vec![0.0]]);
        assert!(solve_eigen(&m, &SolverOptions::default().with_damping(0.0)).is_err());
        assert!(solve_eigen(&m, &SolverOptions::default().with_tol(-1.0)).is_err());
    }

    #[test]
    fn reports_non_convergence_with_bracket() {
        let m = model(
            vec![vec![
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0],
            ]],
            vec![vec![0.0], vec![1.0], vec![3.0]],
        );
        let err = solve_eigen(&m, &SolverOptions::default().with_max_iters(3)).unwrap_err();
        match err {
            Error::NonConvergence {
                iterations,
                cw_lower,
                cw_upper,
            } => {
                assert_eq!(iterations, 3);
                assert!(cw_lower < 4.0 / 3.0 && 4.0 / 3.0 < cw_upper);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn reducible_model_does_not_certify() {
        // s2 is absorbing with a lower growth rate than the s1 loop
        let m = model(
            vec![vec![vec![0.5, 0.5], vec![0.0, 1.0]]],
            vec![vec![1.0], vec![0.0]],
        );
        let res = solve_eigen(&m, &SolverOptions::default().with_max_iters(5_000));
        match res {
            Ok(s) => assert!(!s.positivity_certified),
            Err(e) => assert!(e.is_solver(), "{e}"),
        }
    }

    #[test]
    fn oracle_matches_single_state() {
        let m = model(vec![vec![vec![1.0]]], vec![vec![-0.7]]);
        assert!((finite_horizon_oracle(&m, 17, Mode::Max).unwrap() + 0.7).abs() < 1e-15);
        assert!(finite_horizon_oracle(&m, 0, Mode::Max).is_err());
    }

    #[test]
    fn fixed_policy_of_single_action_model_is_the_model() {
        let m = model(
            vec![vec![vec![0.3, 0.7], vec![0.9, 0.1]]],
            vec![vec![0.2], vec![-0.4]],
        );
        let opts = SolverOptions::default();
        let lam = solve_eigen(&m, &opts).unwrap().lambda;
        assert!((policy_eigen(&m, &[0, 0], &opts).unwrap() - lam).abs() < 1e-12);
        assert!(policy_eigen(&m, &[0, 1], &opts).is_err());
    }
}
