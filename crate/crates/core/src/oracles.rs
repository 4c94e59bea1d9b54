//! Ground-truth generators: the deterministic harmonic cycle with its closed
//! forms, an independent Perron-root computation by matrix squaring, seeded
//! random models and a few small regression models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::MarkovModel;
use crate::model::{ControlledModel, StateRecord};

/// Deterministic shift `j -> j+1` on `{1, ..., n+1}` closed into a cycle,
/// with cost `c(j) = c_bar - 1/j` and restart at state 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpec {
    pub n: usize,
    pub c_bar: f64,
}

impl HarmonicSpec {
    pub fn new(n: usize, c_bar: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "harmonic example needs n >= 1".into(),
            ));
        }
        Ok(HarmonicSpec { n, c_bar })
    }
}

/// `H_m = 1 + 1/2 + ... + 1/m`.
pub fn harmonic_number(m: usize) -> f64 {
    (1..=m).map(|j| 1.0 / j as f64).sum()
}

fn point_mass(n: usize, at: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    d[at] = 1.0;
    d
}

fn chain_states(len: usize) -> Vec<StateRecord> {
    (1..=len)
        .map(|j| StateRecord {
            label: j.to_string(),
            r: (j - 1) as f64,
        })
        .collect()
}

/// The cycle `1 -> 2 -> ... -> n+1 -> 1`.
pub fn harmonic_model(spec: HarmonicSpec) -> ControlledModel {
    let len = spec.n + 1;
    let rows = (0..len).map(|x| point_mass(len, (x + 1) % len)).collect();
    let cost = (1..=len)
        .map(|j| vec![spec.c_bar - 1.0 / j as f64])
        .collect();
    ControlledModel::new(
        chain_states(len),
        vec!["shift".into()],
        vec![rows],
        cost,
        Some(point_mass(len, 0)),
    )
    .expect("harmonic model is valid by construction")
}

/// Open shift chain `1 -> 2 -> ... -> len` (the last state is absorbing),
/// for truncation sweeps: ball `n` contains `{1, ..., n+1}` and the shift out
/// of it restarts at state 1, reproducing [`harmonic_model`] on that ball.
pub fn harmonic_chain(len: usize, c_bar: f64) -> ControlledModel {
    let rows = (0..len)
        .map(|x| point_mass(len, (x + 1).min(len - 1)))
        .collect();
    let cost = (1..=len).map(|j| vec![c_bar - 1.0 / j as f64]).collect();
    ControlledModel::new(
        chain_states(len),
        vec!["shift".into()],
        vec![rows],
        cost,
        Some(point_mass(len, 0)),
    )
    .expect("harmonic chain is valid by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicClosedForm {
    pub lambda: f64,
    /// 1-based state where the log-eigenfunction peaks.
    pub k: usize,
    /// Log-eigenfunction at state 1, normalized so its maximum is 0.
    pub w1: f64,
}

/// Closed forms for the harmonic cycle. `w1` solves the cyclic recursion
/// `w(i) = c(i) - lambda + w(i+1)`, `w(n+2) = w(1)`, with `w(k) = 0`.
pub fn harmonic_closed_form(spec: HarmonicSpec) -> HarmonicClosedForm {
    let len = spec.n + 1;
    let h = harmonic_number(len);
    let lambda = spec.c_bar - h / len as f64;
    let k = (len as f64 / h).floor() as usize + 1;
    let tail: f64 = (k..=len).map(|j| 1.0 / j as f64).sum();
    let w1 = tail - (len + 1 - k) as f64 * h / len as f64;
    HarmonicClosedForm { lambda, k, w1 }
}

/// Whole normalized profile of the harmonic cycle, by direct recursion.
pub fn harmonic_profile(spec: HarmonicSpec) -> Vec<f64> {
    let len = spec.n + 1;
    let lambda = harmonic_closed_form(spec).lambda;
    let c = |j: usize| spec.c_bar - 1.0 / j as f64;
    // w(1) = 0 provisionally, then w(i+1) = w(i) - (c(i) - lambda)
    let mut w = vec![0.0; len];
    for i in 1..len {
        w[i] = w[i - 1] - (c(i) - lambda);
    }
    let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    w.iter().map(|v| v - top).collect()
}

/// Log spectral radius with a Collatz–Wielandt certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerronRoot {
    pub log_root: f64,
    pub cw_lower: f64,
    pub cw_upper: f64,
}

/// `ln` of the spectral radius of `M(x,y) = e^{c(x)} P(x,y)` for a
/// single-action model, by repeated normalized squaring of `M`.
pub fn perron_root_oracle<M: MarkovModel>(model: &M) -> Result<f64> {
    Ok(perron_root_certified(model)?.log_root)
}

pub fn perron_root_certified<M: MarkovModel>(model: &M) -> Result<PerronRoot> {
    if model.num_actions() != 1 {
        return Err(Error::InvalidArgument(
            "perron oracle needs a single action (apply a policy first)".into(),
        ));
    }
    let n = model.num_states();
    let mut m = vec![vec![0.0; n]; n];
    for (x, row) in m.iter_mut().enumerate() {
        let scale = model.cost(x, 0).exp();
        for (y, p) in model.row(0, x).iter() {
            row[y] = scale * p;
        }
    }
    let mut a = m.clone();
    let s0 = max_entry(&a);
    scale_in_place(&mut a, s0);
    let mut estimate = s0.ln();
    let mut weight = 1.0;
    for _ in 0..64 {
        let sq = matmul(&a, &a);
        let s = max_entry(&sq);
        if s == 0.0 {
            return Err(Error::InvalidArgument(
                "matrix is nilpotent; the spectral radius is zero".into(),
            ));
        }
        weight *= 0.5;
        let step = weight * s.ln();
        a = sq;
        scale_in_place(&mut a, s);
        estimate += step;
        if step.abs() < 1e-18 {
            break;
        }
    }
    // certificate from the dominant direction of the high power
    let v: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in 0..n {
        if v[x] > 0.0 {
            let mv: f64 = (0..n).map(|y| m[x][y] * v[y]).sum();
            let r = (mv / v[x]).ln();
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if v.contains(&0.0) {
        return Err(Error::InvalidArgument(
            "reducible matrix: the dominant eigenvector vanishes on part of the support".into(),
        ));
    }
    Ok(PerronRoot {
        log_root: estimate,
        cw_lower: lo,
        cw_upper: hi,
    })
}

fn max_entry(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().copied().fold(0.0, f64::max)
}

fn scale_in_place(a: &mut [Vec<f64>], s: f64) {
    for row in a {
        for v in row {
            *v /= s;
        }
    }
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Shape of a seeded random model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomModelSpec {
    pub states: usize,
    pub actions: usize,
    /// Probability that an off-diagonal kernel entry is positive.
    pub density: f64,
    /// Costs are drawn uniformly from `[-cost_scale, cost_scale]`.
    pub cost_scale: f64,
    /// Radii of non-center states are drawn uniformly from `(0, max_radius]`.
    pub max_radius: f64,
}

impl RandomModelSpec {
    pub fn dense(states: usize, actions: usize) -> Self {
        RandomModelSpec {
            states,
            actions,
            density: 1.0,
            cost_scale: 1.0,
            max_radius: states as f64,
        }
    }
}

/// Seeded random model; state 0 is the center. Rows always keep the
/// diagonal entry, so every row is nonempty.
pub fn random_model(seed: u64, spec: RandomModelSpec) -> ControlledModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.states;
    let states = (0..n)
        .map(|x| StateRecord {
            label: format!("s{x}"),
            r: if x == 0 {
                0.0
            } else {
                rng.gen_range(0.0..spec.max_radius) + f64::EPSILON
            },
        })
        .collect();
    let rows = (0..spec.actions)
        .map(|_| {
            (0..n)
                .map(|x| {
                    let raw: Vec<f64> = (0..n)
                        .map(|y| {
                            if y == x || rng.gen_bool(spec.density.clamp(0.0, 1.0)) {
                                rng.gen_range(0.05..1.0)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let total: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / total).collect()
                })
                .collect()
        })
        .collect();
    let cost = (0..n)
        .map(|_| {
            (0..spec.actions)
                .map(|_| rng.gen_range(-spec.cost_scale..spec.cost_scale))
                .collect()
        })
        .collect();
    let actions = (0..spec.actions).map(|a| format!("a{a}")).collect();
    ControlledModel::new(states, actions, rows, cost, None).expect("random model is valid")
}

/// Two states, one action, `P = [[.5,.5],[.5,.5]]`, `c = (0, ln 2)`; the
/// growth rate is `ln 1.5`.
pub fn two_state_model() -> ControlledModel {
    ControlledModel::new(
        vec![
            StateRecord {
                label: "1".into(),
                r: 0.0,
            },
            StateRecord {
                label: "2".into(),
                r: 1.0,
            },
        ],
        vec!["go".into()],
        vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
        vec![vec![0.0], vec![2f64.ln()]],
        None,
    )
    .expect("valid")
}

/// Reflecting walk on a line of `len` states with costs peaked at the center.
pub fn peaked_line_model(len: usize) -> ControlledModel {
    let rows = (0..len)
        .map(|x| {
            let mut row = vec![0.0; len];
            let left = x.saturating_sub(1);
            let right = (x + 1).min(len - 1);
            row[left] += 0.5;
            row[right] += 0.5;
            row
        })
        .collect();
    let cost = (0..len).map(|x| vec![1.0 - 0.5 * x as f64]).collect();
    ControlledModel::new(
        chain_states(len),
        vec!["walk".into()],
        vec![rows],
        cost,
        None,
    )
    .expect("valid")
}

/// Two-action model whose rows all share one support, so the kernel
/// dominance constant is finite; costs decrease with the radius.
pub fn dominance_model(len: usize) -> ControlledModel {
    let geometric: Vec<f64> = (0..len).map(|y| 0.5f64.powi(y as i32)).collect();
    let row_for = |x: usize, tilt: f64| -> Vec<f64> {
        let raw: Vec<f64> = (0..len)
            .map(|y| {
                let near = if y + 1 == x || y == x + 1 { 1.0 } else { 0.0 };
                geometric[y] * (1.0 + tilt * near)
            })
            .collect();
        let t: f64 = raw.iter().sum();
        raw.iter().map(|v| v / t).collect()
    };
    let stay = (0..len).map(|x| row_for(x, 1.0)).collect();
    let jump = (0..len).map(|x| row_for(x, 3.0)).collect();
    let cost = (0..len)
        .map(|x| {
            let base = 0.5 - 0.2 * x as f64;
            vec![base, base + 0.1 * ((x % 3) as f64 - 1.0)]
        })
        .collect();
    ControlledModel::new(
        chain_states(len),
        vec!["stay".into(), "jump".into()],
        vec![stay, jump],
        cost,
        Some(point_mass(len, 0)),
    )
    .expect("valid")
}

/// Three states drifting outward to an absorbing high-cost state.
pub fn drift_model() -> ControlledModel {
    ControlledModel::new(
        chain_states(3),
        vec!["go".into()],
        vec![vec![
            vec![0.5, 0.5, 0.0],
            vec![0.3, 0.3, 0.4],
            vec![0.0, 0.0, 1.0],
        ]],
        vec![vec![0.0], vec![0.0], vec![0.5]],
        None,
    )
    .expect("valid")
}
