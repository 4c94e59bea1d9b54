//! Structural assumption checkers: accessibility inside a ball through the
//! subtransition kernels, and the kernel dominance constant.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{MarkovModel, Mode};
use crate::model::ControlledModel;

/// Outcome of an accessibility query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reachability {
    pub reachable: bool,
    /// Number of steps of the witness (smallest such step count).
    pub steps: Option<usize>,
}

impl Reachability {
    fn from_steps(steps: Option<usize>) -> Self {
        Reachability {
            reachable: steps.is_some(),
            steps,
        }
    }
}

/// Membership mask of the ball `{x : r(x) <= radius}`.
pub fn ball_mask(model: &ControlledModel, radius: f64) -> Vec<bool> {
    (0..model.num_states())
        .map(|x| model.radius_of(x) <= radius)
        .collect()
}

/// Smallest `m >= 1` such that some action sequence moves `source` into
/// `target` in exactly `m` steps while every visited state stays in `allowed`.
pub(crate) fn exists_reach<M: MarkovModel>(
    model: &M,
    allowed: &[bool],
    source: usize,
    target: &[bool],
) -> Option<usize> {
    let n = model.num_states();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    let expand = |x: usize, d: usize, dist: &mut Vec<usize>, queue: &mut VecDeque<usize>| {
        for a in 0..model.num_actions() {
            for (y, _) in model.row(a, x).iter() {
                if allowed[y] && dist[y] == usize::MAX {
                    dist[y] = d + 1;
                    queue.push_back(y);
                }
            }
        }
    };
    expand(source, 0, &mut dist, &mut queue);
    while let Some(y) = queue.pop_front() {
        if target[y] {
            return Some(dist[y]);
        }
        let d = dist[y];
        expand(y, d, &mut dist, &mut queue);
    }
    None
}

/// One step of alternating reachability: states of `allowed` from which
/// every action has a positive-probability successor in `prev`.
fn forall_pre<M: MarkovModel>(model: &M, allowed: &[bool], prev: &[bool]) -> Vec<bool> {
    (0..model.num_states())
        .map(|x| {
            allowed[x]
                && (0..model.num_actions()).all(|a| model.row(a, x).iter().any(|(y, _)| prev[y]))
        })
        .collect()
}

/// Sequence `X_0 = target ∩ allowed`, `X_t = forall_pre(X_{t-1})`, run until
/// it becomes periodic. Returns, for every state, the first `t >= 1` with the
/// state in `X_t`.
pub(crate) fn forall_first_hits<M: MarkovModel>(
    model: &M,
    allowed: &[bool],
    target: &[bool],
) -> Vec<Option<usize>> {
    let n = model.num_states();
    let mut first = vec![None; n];
    let mut current: Vec<bool> = (0..n).map(|x| target[x] && allowed[x]).collect();
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    seen.insert(current.clone());
    let mut t = 0;
    loop {
        t += 1;
        current = forall_pre(model, allowed, &current);
        for x in 0..n {
            if current[x] && first[x].is_none() {
                first[x] = Some(t);
            }
        }
        if !current.iter().any(|&b| b) || !seen.insert(current.clone()) {
            return first;
        }
    }
}

fn check_source(model: &ControlledModel, mask: &[bool], source: usize) -> Result<()> {
    if source >= model.num_states() {
        return Err(Error::InvalidArgument(format!(
            "state index {source} out of range"
        )));
    }
    if !mask[source] {
        return Err(Error::InvalidArgument(format!(
            "source state {:?} lies outside the ball",
            model.label(source)
        )));
    }
    Ok(())
}

fn target_mask(model: &ControlledModel, target_set: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; model.num_states()];
    for &y in target_set {
        if y >= model.num_states() {
            return Err(Error::InvalidArgument(format!(
                "target index {y} out of range"
            )));
        }
        mask[y] = true;
    }
    Ok(mask)
}

/// Whether some action sequence enters `target_set` from `source` without
/// leaving the ball of the given radius.
pub fn check_accessibility_max(
    model: &ControlledModel,
    radius: f64,
    source: usize,
    target_set: &[usize],
) -> Result<Reachability> {
    let ball = ball_mask(model, radius);
    check_source(model, &ball, source)?;
    let target = target_mask(model, target_set)?;
    Ok(Reachability::from_steps(exists_reach(
        model, &ball, source, &target,
    )))
}

/// Whether every strategy enters `target_set` from `source` with positive
/// probability at some fixed step, without leaving the ball.
pub fn check_accessibility_min(
    model: &ControlledModel,
    radius: f64,
    source: usize,
    target_set: &[usize],
) -> Result<Reachability> {
    let ball = ball_mask(model, radius);
    check_source(model, &ball, source)?;
    let target = target_mask(model, target_set)?;
    let hits = forall_first_hits(model, &ball, &target);
    Ok(Reachability::from_steps(hits[source]))
}

/// States reachable from `source` in one or more steps inside `allowed`.
fn reachable_set<M: MarkovModel>(model: &M, allowed: &[bool], source: usize) -> Vec<bool> {
    let mut seen = vec![false; model.num_states()];
    let mut stack = vec![source];
    while let Some(x) = stack.pop() {
        for a in 0..model.num_actions() {
            for (y, _) in model.row(a, x).iter() {
                if allowed[y] && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    seen
}

/// Every allowed state reaches every allowed singleton.
pub fn all_pairs_reachable<M: MarkovModel>(model: &M, allowed: &[bool], mode: Mode) -> bool {
    let n = model.num_states();
    let members: Vec<usize> = (0..n).filter(|&x| allowed[x]).collect();
    match mode {
        Mode::Max => members.iter().all(|&x| {
            let seen = reachable_set(model, allowed, x);
            members.iter().all(|&y| seen[y])
        }),
        Mode::Min => {
            let mut target = vec![false; n];
            members.iter().all(|&y| {
                target[y] = true;
                let hits = forall_first_hits(model, allowed, &target);
                target[y] = false;
                members.iter().all(|&x| hits[x].is_some())
            })
        }
    }
}

/// Dominance constant of the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DominanceBound {
    /// Smallest valid constant `L`.
    Bounded { l: f64 },
    /// Some ratio is infinite; the witness names the offending entry.
    Unbounded { witness: String },
}

impl DominanceBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            DominanceBound::Bounded { l } => Some(*l),
            DominanceBound::Unbounded { .. } => None,
        }
    }
}

/// Smallest `L` with `P^a(x,B) <= L P^a(x',B)` for all events and
/// `mu(B) <= L min_a P^a(b,B)`, using `0/0 = 0`. Maxima over singletons
/// suffice because every event is a finite union of atoms.
pub fn check_dominance_bound(model: &ControlledModel, mu: &[f64]) -> Result<DominanceBound> {
    crate::model::validate_distribution(mu, model.num_states(), "mu")?;
    let n = model.num_states();
    let mut l: f64 = 0.0;
    for a in 0..model.num_actions() {
        for y in 0..n {
            let mut hi: f64 = 0.0;
            let mut lo = f64::INFINITY;
            let mut lo_state = 0;
            let mut hi_state = 0;
            for x in 0..n {
                let p = model.prob(a, x, y);
                if p > hi {
                    hi = p;
                    hi_state = x;
                }
                if p < lo {
                    lo = p;
                    lo_state = x;
                }
            }
            if hi == 0.0 {
                continue;
            }
            if lo == 0.0 {
                return Ok(DominanceBound::Unbounded {
                    witness: format!(
                        "P^{}({}, {{{}}}) > 0 but P^{}({}, {{{}}}) = 0",
                        model.actions()[a],
                        model.label(hi_state),
                        model.label(y),
                        model.actions()[a],
                        model.label(lo_state),
                        model.label(y)
                    ),
                });
            }
            l = l.max(hi / lo);
        }
    }
    let b = model.center();
    for (y, &m) in mu.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let floor = (0..model.num_actions())
            .map(|a| model.prob(a, b, y))
            .fold(f64::INFINITY, f64::min);
        if floor == 0.0 {
            return Ok(DominanceBound::Unbounded {
                witness: format!(
                    "mu({{{}}}) > 0 but some action gives P(center, {{{}}}) = 0",
                    model.label(y),
                    model.label(y)
                ),
            });
        }
        l = l.max(m / floor);
    }
    Ok(DominanceBound::Bounded { l })
}
