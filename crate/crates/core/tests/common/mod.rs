//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use riskctl_core::checks::ball_mask;
use riskctl_core::oracles::{random_model, RandomModelSpec};
use riskctl_core::{policy_eigen, ControlledModel, Mode, SolverOptions};

/// Every stationary selector, in lexicographic order.
pub fn all_policies(states: usize, actions: usize) -> Vec<Vec<usize>> {
    let total = actions.pow(states as u32);
    (0..total)
        .map(|mut code| {
            (0..states)
                .map(|_| {
                    let a = code % actions;
                    code /= actions;
                    a
                })
                .collect()
        })
        .collect()
}

/// Best stationary value by enumeration: max in max mode, min in min mode.
pub fn best_policy_value(model: &ControlledModel, mode: Mode) -> f64 {
    let opts = SolverOptions::default();
    let values = all_policies(model.num_states(), model.num_actions())
        .into_iter()
        .map(|p| policy_eigen(model, &p, &opts).expect("policy solve"));
    match mode {
        Mode::Max => values.fold(f64::NEG_INFINITY, f64::max),
        Mode::Min => values.fold(f64::INFINITY, f64::min),
    }
}

/// Shortest `m >= 1` such that some action sequence has a path from
/// `source` into `target` staying in the ball, by depth-first search over
/// explicit paths up to `max_len` steps.
pub fn exists_by_paths(
    model: &ControlledModel,
    ball: &[bool],
    source: usize,
    target: &[bool],
    max_len: usize,
) -> Option<usize> {
    (1..=max_len).find(|&m| exists_path_of_len(model, ball, source, target, m))
}

fn exists_path_of_len(
    model: &ControlledModel,
    ball: &[bool],
    x: usize,
    target: &[bool],
    m: usize,
) -> bool {
    (0..model.num_actions()).any(|a| {
        model.row(a, x).iter().any(|(y, _)| {
            ball[y]
                && if m == 1 {
                    target[y]
                } else {
                    exists_path_of_len(model, ball, y, target, m - 1)
                }
        })
    })
}

/// Shortest `m >= 1` such that every history-dependent strategy enters
/// `target` at step `m` with positive probability inside the ball, by game
/// tree recursion over histories (memoized on `(state, steps left)`, which
/// is exact because the subgames below distinct histories are independent).
pub fn forall_by_game_tree(
    model: &ControlledModel,
    ball: &[bool],
    source: usize,
    target: &[bool],
    max_len: usize,
) -> Option<usize> {
    let n = model.num_states();
    let mut memo = vec![vec![None; max_len + 1]; n];
    (1..=max_len).find(|&m| forced(model, ball, source, target, m, &mut memo))
}

fn forced(
    model: &ControlledModel,
    ball: &[bool],
    x: usize,
    target: &[bool],
    m: usize,
    memo: &mut Vec<Vec<Option<bool>>>,
) -> bool {
    if let Some(v) = memo[x][m] {
        return v;
    }
    let mut all = true;
    for a in 0..model.num_actions() {
        let succ: Vec<usize> = model
            .row(a, x)
            .iter()
            .map(|(y, _)| y)
            .filter(|&y| ball[y])
            .collect();
        let hit = succ.into_iter().any(|y| {
            if m == 1 {
                target[y]
            } else {
                forced(model, ball, y, target, m - 1, memo)
            }
        });
        if !hit {
            all = false;
            break;
        }
    }
    memo[x][m] = Some(all);
    all
}

/// `sup` over events `B` of the kernel ratio and the `mu` ratio, by
/// enumerating all `2^n - 1` nonempty events. `None` means unbounded.
pub fn dominance_by_events(model: &ControlledModel, mu: &[f64]) -> Option<f64> {
    let n = model.num_states();
    let b = model.center();
    let mut l: f64 = 0.0;
    for mask in 1u32..(1 << n) {
        let in_event = |y: usize| mask & (1 << y) != 0;
        let mass = |a: usize, x: usize| -> f64 {
            (0..n)
                .filter(|&y| in_event(y))
                .map(|y| model.prob(a, x, y))
                .sum()
        };
        for a in 0..model.num_actions() {
            for x in 0..n {
                let num = mass(a, x);
                if num == 0.0 {
                    continue;
                }
                for x2 in 0..n {
                    let den = mass(a, x2);
                    if den == 0.0 {
                        return None;
                    }
                    l = l.max(num / den);
                }
            }
        }
        let mu_b: f64 = (0..n).filter(|&y| in_event(y)).map(|y| mu[y]).sum();
        if mu_b > 0.0 {
            let den = (0..model.num_actions())
                .map(|a| mass(a, b))
                .fold(f64::INFINITY, f64::min);
            if den == 0.0 {
                return None;
            }
            l = l.max(mu_b / den);
        }
    }
    Some(l)
}

/// Seeded random model with the given shape and density.
pub fn seeded(seed: u64, states: usize, actions: usize, density: f64) -> ControlledModel {
    random_model(
        seed,
        RandomModelSpec {
            density,
            ..RandomModelSpec::dense(states, actions)
        },
    )
}

/// Distinct radii of the model, ascending.
pub fn radii(model: &ControlledModel) -> Vec<f64> {
    let mut r: Vec<f64> = (0..model.num_states())
        .map(|x| model.radius_of(x))
        .collect();
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

pub fn mask_of(model: &ControlledModel, radius: f64) -> Vec<bool> {
    ball_mask(model, radius)
}
