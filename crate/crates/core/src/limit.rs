//! Sweeps over growing truncations: growth-rate series, convergence of the
//! normalized eigenfunctions, residuals against the untruncated equation and
//! the compactness / non-degeneracy checks that make the limit meaningful.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::ball_mask;
use crate::eigen::{solve_eigen, SolverOptions};
use crate::error::{Error, Result};
use crate::markov::{MarkovModel, Mode};
use crate::model::ControlledModel;
use crate::truncation::{build_truncated, TruncationScheme};

/// `sup_x |w(x) - (ln best_a [e^{c(x,a)} sum_y P(x,y|a) e^{w(y)}] - lambda)|`
/// over all states.
pub fn full_residual<M: MarkovModel>(model: &M, w: &[f64], lambda: f64, mode: Mode) -> Result<f64> {
    full_residual_on(model, w, lambda, mode, 0..model.num_states())
}

/// Same as [`full_residual`], restricted to the given states.
pub fn full_residual_on<M: MarkovModel>(
    model: &M,
    w: &[f64],
    lambda: f64,
    mode: Mode,
    states: impl IntoIterator<Item = usize>,
) -> Result<f64> {
    if w.len() != model.num_states() {
        return Err(Error::InvalidArgument(format!(
            "w has {} entries, model has {} states",
            w.len(),
            model.num_states()
        )));
    }
    let mut worst: f64 = 0.0;
    for x in states {
        let mut best = f64::NAN;
        for a in 0..model.num_actions() {
            let row = model.row(a, x);
            let top = row
                .iter()
                .map(|(y, p)| p.ln() + w[y])
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|(y, p)| (p.ln() + w[y] - top).exp()).sum();
            let v = model.cost(x, a) + top + s.ln();
            if a == 0 || mode.better(v, best) {
                best = v;
            }
        }
        worst = worst.max((w[x] - (best - lambda)).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub solver: SolverOptions,
    /// The tail window holds `max(tail_min, ceil(tail_fraction * len))` balls.
    pub tail_fraction: f64,
    pub tail_min: usize,
    /// The degeneracy flag needs the final floor of `e^{w_n}` on `B_n` below this.
    pub degeneracy_threshold: f64,
    /// Tail spread of `lambda_n` under which the series counts as settled.
    pub settle_tol: f64,
    /// Level-set slack for the compactness check; default rule when `None`.
    pub epsilon: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            solver: SolverOptions::default(),
            tail_fraction: 0.2,
            tail_min: 3,
            degeneracy_threshold: 0.25,
            settle_tol: 1e-6,
            epsilon: None,
        }
    }
}

impl SweepOptions {
    pub fn tail_window(&self, len: usize) -> usize {
        let frac = (self.tail_fraction * len as f64).ceil() as usize;
        self.tail_min.max(frac).min(len)
    }
}

/// Solution on one ball, with `w` lifted to the parent states (merged
/// exterior states carry the exterior value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSolution {
    pub n: usize,
    pub radius: f64,
    pub lambda: f64,
    pub cw_lower: f64,
    pub cw_upper: f64,
    pub residual_sup: f64,
    pub iterations: usize,
    pub positivity_certified: bool,
    /// Parent indices of the states of `B_{n+1}`.
    pub interior: Vec<usize>,
    pub w: Vec<f64>,
    pub w_exterior: f64,
}

/// Compactness check of the level set `{x : c_hat(x) >= lambda - eps}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A3Verdict {
    pub epsilon: f64,
    pub level_set: Vec<String>,
    pub level_set_max_radius: f64,
    pub model_max_radius: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A4Witness {
    pub x: String,
    pub m: usize,
    pub n_start: usize,
    /// Open-loop action labels (max mode only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A4Verdict {
    pub epsilon: f64,
    pub certified: bool,
    pub witness: Option<A4Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub mode: Mode,
    pub n_values: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub cw_widths: Vec<f64>,
    pub lambda_limsup: f64,
    pub tail_window: usize,
    pub lambda_tail_spread: f64,
    pub lambda_settled: bool,
    /// Sup distance between consecutive normalized `e^{w_n}` on shared
    /// interior states; `None` for the first ball.
    pub sup_diffs: Vec<Option<f64>>,
    /// Residual of the untruncated equation on the interior states.
    pub full_residuals: Vec<f64>,
    /// Minimum of `e^{w_n}` over `B_n`.
    pub a4_floor: Vec<f64>,
    pub a3: A3Verdict,
    pub degeneracy_flag: bool,
    pub solutions: Vec<BallSolution>,
}

impl LimitReport {
    /// Flat CSV, one row per ball.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,lambda,cw_width,residual,sup_diff,a4_floor\n");
        for i in 0..self.n_values.len() {
            let diff = self.sup_diffs[i]
                .map(|d| format!("{d:e}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:e},{:e},{},{}\n",
                self.n_values[i],
                self.lambdas[i],
                self.cw_widths[i],
                self.full_residuals[i],
                diff,
                self.a4_floor[i]
            ));
        }
        out
    }
}

fn solve_ball(
    model: &Arc<ControlledModel>,
    scheme: &TruncationScheme,
    n: usize,
    solver: &SolverOptions,
) -> Result<(BallSolution, f64, f64)> {
    let annotate = |e: Error| Error::AtBall {
        n,
        source: Box::new(e),
    };
    let t = build_truncated(model, scheme, n).map_err(annotate)?;
    let s = solve_eigen(&t, solver).map_err(annotate)?;
    let w = t.lift(&s.w);
    let interior = t.interior_states().to_vec();
    let full = full_residual_on(
        model.as_ref(),
        &w,
        s.lambda,
        solver.mode,
        interior.iter().copied(),
    )?;
    let floor = (0..t.exterior())
        .filter(|&i| t.in_ball(i))
        .map(|i| s.w[i].exp())
        .fold(f64::INFINITY, f64::min);
    Ok((
        BallSolution {
            n,
            radius: t.radius(),
            lambda: s.lambda,
            cw_lower: s.cw_lower,
            cw_upper: s.cw_upper,
            residual_sup: s.residual_sup,
            iterations: s.iterations,
            positivity_certified: s.positivity_certified,
            interior,
            w_exterior: s.w[t.exterior()],
            w,
        },
        full,
        floor,
    ))
}

/// Solves every truncation `n_from..=n_to` and assembles the limit report.
/// Balls are solved in parallel; the report depends only on the inputs.
pub fn solve_sequence(
    model: &Arc<ControlledModel>,
    scheme: &TruncationScheme,
    n_from: usize,
    n_to: usize,
    opts: &SweepOptions,
) -> Result<LimitReport> {
    if n_from == 0 || n_to < n_from {
        return Err(Error::InvalidArgument(format!(
            "sweep range {n_from}..={n_to} is empty or starts below 1"
        )));
    }
    let results: Vec<Result<(BallSolution, f64, f64)>> = (n_from..=n_to)
        .into_par_iter()
        .map(|n| solve_ball(model, scheme, n, &opts.solver))
        .collect();
    let mut solutions = Vec::with_capacity(results.len());
    let mut full_residuals = Vec::with_capacity(results.len());
    let mut a4_floor = Vec::with_capacity(results.len());
    for r in results {
        let (s, full, floor) = r?;
        solutions.push(s);
        full_residuals.push(full);
        a4_floor.push(floor);
    }
    let len = solutions.len();
    let lambdas: Vec<f64> = solutions.iter().map(|s| s.lambda).collect();
    let tail_window = opts.tail_window(len);
    let tail = &lambdas[len - tail_window..];
    let lambda_limsup = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lambda_tail_spread = lambda_limsup - tail.iter().copied().fold(f64::INFINITY, f64::min);

    let mut sup_diffs = vec![None];
    for pair in solutions.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let d = prev
            .interior
            .iter()
            .map(|&x| (prev.w[x].exp() - next.w[x].exp()).abs())
            .fold(0.0, f64::max);
        sup_diffs.push(Some(d));
    }

    let floors_tail = &a4_floor[len - tail_window..];
    let decaying = floors_tail.len() >= 2 && floors_tail.windows(2).all(|w| w[1] < w[0]);
    let degeneracy_flag = decaying && a4_floor[len - 1] < opts.degeneracy_threshold;

    let epsilon = opts
        .epsilon
        .unwrap_or_else(|| default_epsilon(model, lambda_limsup, opts.solver.mode));
    let a3 = check_a3(model, lambda_limsup, epsilon, opts.solver.mode)?;

    Ok(LimitReport {
        mode: opts.solver.mode,
        n_values: solutions.iter().map(|s| s.n).collect(),
        cw_widths: solutions.iter().map(|s| s.cw_upper - s.cw_lower).collect(),
        lambdas,
        lambda_limsup,
        tail_window,
        lambda_tail_spread,
        lambda_settled: lambda_tail_spread <= opts.settle_tol,
        sup_diffs,
        full_residuals,
        a4_floor,
        a3,
        degeneracy_flag,
        solutions,
    })
}

/// Best cost per state: `max_a c` in max mode, `min_a c` in min mode.
pub fn best_cost(model: &ControlledModel, x: usize, mode: Mode) -> f64 {
    let it = (0..model.num_actions()).map(|a| model.cost(x, a));
    match mode {
        Mode::Max => it.fold(f64::NEG_INFINITY, f64::max),
        Mode::Min => it.fold(f64::INFINITY, f64::min),
    }
}

/// Half the gap between `lambda` and the best cost on the outer fifth of the
/// states (by radius) when that gap is positive, otherwise `1e-3`.
pub fn default_epsilon(model: &ControlledModel, lambda: f64, mode: Mode) -> f64 {
    let mut by_radius: Vec<usize> = (0..model.num_states()).collect();
    by_radius.sort_by(|&a, &b| model.radius_of(a).total_cmp(&model.radius_of(b)));
    let outer = (model.num_states() as f64 * 0.2).ceil().max(1.0) as usize;
    let tail_max = by_radius[model.num_states() - outer..]
        .iter()
        .map(|&x| best_cost(model, x, mode))
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = lambda - tail_max;
    if gap > 0.0 {
        0.5 * gap
    } else {
        1e-3
    }
}

/// Level set of the best cost at `lambda - epsilon`; certified when it stays
/// strictly inside the modeled radius.
pub fn check_a3(
    model: &ControlledModel,
    lambda: f64,
    epsilon: f64,
    mode: Mode,
) -> Result<A3Verdict> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let members: Vec<usize> = (0..model.num_states())
        .filter(|&x| best_cost(model, x, mode) >= lambda - epsilon)
        .collect();
    let level_set_max_radius = members
        .iter()
        .map(|&x| model.radius_of(x))
        .fold(0.0, f64::max);
    let model_max_radius = model.max_radius();
    Ok(A3Verdict {
        epsilon,
        level_set: members
            .iter()
            .map(|&x| model.label(x).to_string())
            .collect(),
        level_set_max_radius,
        model_max_radius,
        certified: level_set_max_radius < model_max_radius,
    })
}

/// One step of the subtransition support: successors of `from` under
/// action `a` that lie in `ball`.
fn step_exists(model: &ControlledModel, ball: &[bool], from: &[bool], a: usize) -> Vec<bool> {
    let mut out = vec![false; model.num_states()];
    for x in (0..model.num_states()).filter(|&x| from[x]) {
        for (y, _) in model.row(a, x).iter() {
            if ball[y] {
                out[y] = true;
            }
        }
    }
    out
}

/// States (anywhere) from which every action has a successor in `prev`.
fn step_forall(model: &ControlledModel, prev: &[bool]) -> Vec<bool> {
    (0..model.num_states())
        .map(|x| (0..model.num_actions()).all(|a| model.row(a, x).iter().any(|(y, _)| prev[y])))
        .collect()
}

/// Searches `x`, `m <= max_steps` (and, in max mode, an open-loop action
/// sequence) such that the `m`-step subtransition probability of entering
/// `{y : e^{w_n(y)} > epsilon}` is positive for every swept ball.
pub fn check_a4(
    model: &ControlledModel,
    report: &LimitReport,
    epsilon: f64,
    max_steps: usize,
) -> Result<A4Verdict> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let Some(first) = report.solutions.first() else {
        return Err(Error::InvalidArgument("empty sweep".into()));
    };
    let n_states = model.num_states();
    let log_eps = epsilon.ln();
    // per ball: (B_n mask, O_n(eps) ∩ B_n mask)
    let balls: Vec<(Vec<bool>, Vec<bool>)> = report
        .solutions
        .iter()
        .map(|s| {
            let ball = ball_mask(model, s.radius);
            let good = (0..n_states).map(|y| ball[y] && s.w[y] > log_eps).collect();
            (ball, good)
        })
        .collect();
    let found = |x: usize, m: usize, actions: Vec<String>| A4Verdict {
        epsilon,
        certified: true,
        witness: Some(A4Witness {
            x: model.label(x).to_string(),
            m,
            n_start: first.n,
            actions,
        }),
    };
    match report.mode {
        Mode::Max => {
            let na = model.num_actions();
            for m in 1..=max_steps {
                let count = na.checked_pow(m as u32).filter(|&c| c <= 4096);
                let Some(count) = count else { break };
                for x in 0..n_states {
                    for code in 0..count {
                        let seq: Vec<usize> =
                            (0..m).map(|i| (code / na.pow(i as u32)) % na).collect();
                        let ok = balls.iter().all(|(ball, good)| {
                            let mut set = vec![false; n_states];
                            set[x] = true;
                            for &a in &seq {
                                set = step_exists(model, ball, &set, a);
                            }
                            (0..n_states).any(|y| set[y] && good[y])
                        });
                        if ok {
                            let labels = seq.iter().map(|&a| model.actions()[a].clone()).collect();
                            return Ok(found(x, m, labels));
                        }
                    }
                }
            }
        }
        Mode::Min => {
            // sets[b] holds, for ball b, the states forced into O_n in t steps
            let mut sets: Vec<Vec<bool>> = balls.iter().map(|(_, good)| good.clone()).collect();
            for m in 1..=max_steps {
                let raw: Vec<Vec<bool>> =
                    sets.iter().map(|prev| step_forall(model, prev)).collect();
                if let Some(x) = (0..n_states).find(|&x| raw.iter().all(|s| s[x])) {
                    return Ok(found(x, m, Vec::new()));
                }
                sets = raw
                    .into_iter()
                    .zip(&balls)
                    .map(|(s, (ball, _))| s.iter().zip(ball).map(|(&a, &b)| a && b).collect())
                    .collect();
            }
        }
    }
    Ok(A4Verdict {
        epsilon,
        certified: false,
        witness: None,
    })
}
