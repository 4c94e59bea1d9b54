//! Monte-Carlo estimation of the multiplicative functional under a stationary
//! selector, and the tail-exit diagnostic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::ball_mask;
use crate::error::{Error, Result};
use crate::model::ControlledModel;

/// Generator used for every path; recorded in outputs.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.3), stream = path index";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationEstimate {
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
    pub start: String,
    /// `(1/m) ln` of the empirical mean of `exp(sum of costs)`.
    pub estimate: f64,
    /// Delta-method standard error on the same scale as `estimate`.
    pub std_error_log: f64,
    pub reference_radius: Option<f64>,
    /// Fraction of paths outside the reference ball at time `m`.
    pub exit_fraction: f64,
    pub rng: String,
}

/// Stationary selector checked against the model.
fn check_inputs(model: &ControlledModel, selector: &[usize], x0: usize) -> Result<()> {
    if selector.len() != model.num_states() {
        return Err(Error::InvalidArgument(format!(
            "selector has {} entries, model has {} states",
            selector.len(),
            model.num_states()
        )));
    }
    if let Some((x, &a)) = selector
        .iter()
        .enumerate()
        .find(|(_, &a)| a >= model.num_actions())
    {
        return Err(Error::InvalidArgument(format!(
            "selector picks action {a} at state {x}"
        )));
    }
    if x0 >= model.num_states() {
        return Err(Error::InvalidArgument(format!(
            "start state index {x0} out of range"
        )));
    }
    Ok(())
}

/// Cumulative rows of the controlled chain.
struct Sampler {
    cols: Vec<Vec<usize>>,
    cdf: Vec<Vec<f64>>,
    cost: Vec<f64>,
}

impl Sampler {
    fn new(model: &ControlledModel, selector: &[usize]) -> Self {
        let mut cols = Vec::with_capacity(model.num_states());
        let mut cdf = Vec::with_capacity(model.num_states());
        for (x, &a) in selector.iter().enumerate() {
            let row = model.row(a, x);
            let mut acc = 0.0;
            let mut c = Vec::with_capacity(row.len());
            let mut ys = Vec::with_capacity(row.len());
            for (y, p) in row.iter() {
                acc += p;
                c.push(acc);
                ys.push(y);
            }
            cols.push(ys);
            cdf.push(c);
        }
        let cost = selector
            .iter()
            .enumerate()
            .map(|(x, &a)| model.cost(x, a))
            .collect();
        Sampler { cols, cdf, cost }
    }

    fn step(&self, x: usize, rng: &mut ChaCha8Rng) -> usize {
        let cols = &self.cols[x];
        if cols.len() == 1 {
            return cols[0];
        }
        let cdf = &self.cdf[x];
        let u = rng.gen::<f64>() * cdf[cdf.len() - 1];
        let i = cdf.partition_point(|&c| c <= u).min(cols.len() - 1);
        cols[i]
    }
}

/// Runs every path up to the last horizon and returns, per path and horizon,
/// the cost sum so far and the state reached.
fn run_paths(
    model: &ControlledModel,
    selector: &[usize],
    x0: usize,
    horizons: &[usize],
    paths: usize,
    seed: u64,
) -> Vec<Vec<(f64, usize)>> {
    let sampler = Sampler::new(model, selector);
    let last = *horizons.last().expect("nonempty horizons");
    (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut out = Vec::with_capacity(horizons.len());
            let mut next = 0;
            let mut x = x0;
            let mut sum = 0.0;
            for t in 1..=last {
                sum += sampler.cost[x];
                x = sampler.step(x, &mut rng);
                if horizons[next] == t {
                    out.push((sum, x));
                    next += 1;
                }
            }
            out
        })
        .collect()
}

/// `ln sum exp(s)` over the given sums, in order.
fn log_sum_exp(sums: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = sums.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + sums.map(|s| (s - top).exp()).sum::<f64>().ln()
}

/// Simulates `paths` independent paths of length `m` from `x0` under the
/// stationary `selector` on the untruncated kernel.
pub fn simulate(
    model: &ControlledModel,
    selector: &[usize],
    x0: usize,
    m: usize,
    paths: usize,
    seed: u64,
    reference_radius: Option<f64>,
) -> Result<SimulationEstimate> {
    check_inputs(model, selector, x0)?;
    if m == 0 || paths == 0 {
        return Err(Error::InvalidArgument(
            "horizon and path count must be at least 1".into(),
        ));
    }
    let runs = run_paths(model, selector, x0, &[m], paths, seed);
    let sums: Vec<f64> = runs.iter().map(|r| r[0].0).collect();
    let lse = log_sum_exp(sums.iter().copied());
    let estimate = (lse - (paths as f64).ln()) / m as f64;

    // relative spread of exp(S_i) around its mean
    let top = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = sums.iter().map(|s| (s - top).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / paths as f64;
    let std_error_log = if paths > 1 {
        let var = scaled.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
        var.sqrt() / (mean * (paths as f64).sqrt()) / m as f64
    } else {
        0.0
    };

    let exit_fraction = match reference_radius {
        Some(r) => {
            let ball = ball_mask(model, r);
            runs.iter().filter(|run| !ball[run[0].1]).count() as f64 / paths as f64
        }
        None => 0.0,
    };
    Ok(SimulationEstimate {
        horizon: m,
        paths,
        seed,
        start: model.label(x0).to_string(),
        estimate,
        std_error_log,
        reference_radius,
        exit_fraction,
        rng: RNG_NAME.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExassRow {
    pub horizon: usize,
    /// Full growth estimate at this horizon.
    pub estimate: f64,
    /// `(1/m) ln` of full over restricted multiplicative mean; `None` when
    /// no path ends in the reference ball.
    pub log_ratio: Option<f64>,
    pub exit_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Decreasing,
    Flat,
    Increasing,
    Undefined,
}

/// Heuristic only: finite horizons cannot establish the tail condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExassReport {
    pub heuristic: bool,
    pub note: String,
    pub start: String,
    pub reference_radius: f64,
    pub paths: usize,
    pub seed: u64,
    pub rows: Vec<ExassRow>,
    pub trend: Trend,
    /// Set when some horizon had every path outside the reference ball.
    pub failure: Option<String>,
    pub rng: String,
}

impl ExassReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("horizon,estimate,log_ratio,exit_fraction\n");
        for r in &self.rows {
            let ratio = r.log_ratio.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.horizon, r.estimate, ratio, r.exit_fraction
            ));
        }
        out
    }
}

const TREND_TOL: f64 = 1e-12;

/// Per horizon, compares the multiplicative mean over all paths with the one
/// over paths that end inside the reference ball.
pub fn exass_diagnostic(
    model: &ControlledModel,
    selector: &[usize],
    x0: usize,
    reference_radius: f64,
    horizons: &[usize],
    paths: usize,
    seed: u64,
) -> Result<ExassReport> {
    check_inputs(model, selector, x0)?;
    if horizons.is_empty() || horizons[0] == 0 || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "horizons must be positive and strictly increasing".into(),
        ));
    }
    if paths == 0 {
        return Err(Error::InvalidArgument(
            "path count must be at least 1".into(),
        ));
    }
    let ball = ball_mask(model, reference_radius);
    let runs = run_paths(model, selector, x0, horizons, paths, seed);
    let mut rows = Vec::with_capacity(horizons.len());
    let mut failure = None;
    for (h, &m) in horizons.iter().enumerate() {
        let full = log_sum_exp(runs.iter().map(|r| r[h].0));
        let inside = log_sum_exp(runs.iter().filter(|r| ball[r[h].1]).map(|r| r[h].0));
        let exits = runs.iter().filter(|r| !ball[r[h].1]).count();
        let log_ratio = if inside.is_finite() {
            Some((full - inside) / m as f64)
        } else {
            failure.get_or_insert_with(|| {
                format!("every path ends outside the reference ball at horizon {m}")
            });
            None
        };
        rows.push(ExassRow {
            horizon: m,
            estimate: (full - (paths as f64).ln()) / m as f64,
            log_ratio,
            exit_fraction: exits as f64 / paths as f64,
        });
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.log_ratio).collect();
    let trend = match (ratios.first(), ratios.last()) {
        (Some(&a), Some(&b)) if failure.is_none() && ratios.len() >= 2 => {
            if (b - a).abs() <= TREND_TOL {
                Trend::Flat
            } else if b < a {
                Trend::Decreasing
            } else {
                Trend::Increasing
            }
        }
        _ => Trend::Undefined,
    };
    Ok(ExassReport {
        heuristic: true,
        note: "simulation heuristic; a vanishing log-ratio is evidence, not proof, that exits are negligible"
            .into(),
        start: model.label(x0).to_string(),
        reference_radius,
        paths,
        seed,
        rows,
        trend,
        failure,
        rng: RNG_NAME.to_string(),
    })
}
