use std::sync::Arc;

use riskctl_core::limit::check_a4;
use riskctl_core::model::load_model_str;
use riskctl_core::oracles::harmonic_profile;
use riskctl_core::policy::DEFAULT_MAX_RESIDUAL;
use riskctl_core::sim::ExassReport;
use riskctl_core::{
    build_truncated, exass_diagnostic, extract_policy, harmonic_closed_form, harmonic_model,
    simulate as run_simulation, solve_eigen, solve_sequence, validate as validate_model,
    ControlledModel, HarmonicSpec, MarkovModel, Mode, RadiusRule, SolverOptions, SweepOptions,
    TruncationScheme,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::Outputs;
use crate::CliError;

const A4_MAX_STEPS: usize = 4;

fn load(cfg: &RunConfig) -> Result<Arc<ControlledModel>, CliError> {
    let path = RunConfig::require(&cfg.model, "model")?;
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut model = load_model_str(&text)?;
    if let Some(mu) = &cfg.mu {
        model = model.with_mu(mu.clone())?;
    }
    Ok(Arc::new(model))
}

fn mode(cfg: &RunConfig) -> Mode {
    cfg.mode.unwrap_or_default()
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    let mut o = SolverOptions::default().with_mode(mode(cfg));
    if let Some(d) = cfg.delta {
        o = o.with_damping(d);
    }
    if let Some(t) = cfg.tol {
        o = o.with_tol(t);
    }
    if let Some(k) = cfg.max_iters {
        o = o.with_max_iters(k);
    }
    o
}

fn scheme(model: &ControlledModel, cfg: &RunConfig) -> Result<TruncationScheme, CliError> {
    let rule = RadiusRule::Linear {
        scale: cfg.radius_scale.unwrap_or(1.0),
    };
    Ok(TruncationScheme::new(model, rule, None)?)
}

fn state(model: &ControlledModel, label: Option<&str>) -> Result<usize, CliError> {
    match label {
        None => Ok(model.center()),
        Some(l) => model
            .state_index(l)
            .ok_or_else(|| CliError::Config(format!("unknown state {l:?}"))),
    }
}

/// Explicit `--policy` labels, or the Bellman selector of the solved model.
fn policy(model: &ControlledModel, cfg: &RunConfig) -> Result<(Vec<usize>, Option<f64>), CliError> {
    if let Some(labels) = &cfg.policy {
        if labels.len() != model.num_states() {
            return Err(CliError::Config(format!(
                "policy has {} entries, model has {} states",
                labels.len(),
                model.num_states()
            )));
        }
        let sel = labels
            .iter()
            .map(|l| {
                model
                    .action_index(l)
                    .ok_or_else(|| CliError::Config(format!("unknown action {l:?}")))
            })
            .collect::<Result<_, _>>()?;
        return Ok((sel, None));
    }
    let s = solve_eigen(model, &solver_options(cfg))?;
    let p = extract_policy(model, &s.w, s.lambda, s.mode, DEFAULT_MAX_RESIDUAL)?;
    Ok((p.selector, Some(s.lambda)))
}

fn report_written(paths: Vec<std::path::PathBuf>) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load(cfg)?;
    let report = validate_model(&model);
    let mut out = Outputs::new(cfg.out.as_deref());
    out.json("validation.json", "validate", &report)?;
    println!(
        "valid: {} states, {} actions, c_lower = {}, c_bar = {}{}",
        model.num_states(),
        model.num_actions(),
        report.c_lower,
        report.c_bar,
        if report.is_constant_cost {
            " (constant cost)"
        } else {
            ""
        }
    );
    report_written(out.write()?);
    Ok(())
}

#[derive(Serialize)]
struct SolveOutput {
    mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    lambda: f64,
    cw_lower: f64,
    cw_upper: f64,
    residual_sup: f64,
    iterations: usize,
    positivity_certified: bool,
    states: Vec<String>,
    w: Vec<f64>,
}

#[derive(Serialize)]
struct PolicyOutput {
    mode: Mode,
    lambda_claimed: f64,
    residual: f64,
    states: Vec<String>,
    actions: Vec<String>,
}

fn solve_on<M: MarkovModel>(
    model: &M,
    n: Option<usize>,
    actions: &[String],
    cfg: &RunConfig,
) -> Result<(), CliError> {
    let s = solve_eigen(model, &solver_options(cfg))?;
    let p = extract_policy(model, &s.w, s.lambda, s.mode, DEFAULT_MAX_RESIDUAL)?;
    let states: Vec<String> = (0..model.num_states())
        .map(|x| model.label(x).to_string())
        .collect();
    let labelled = p.labelled(actions);
    let mut csv = String::from("state,w,action\n");
    for x in 0..states.len() {
        csv.push_str(&format!("{},{},{}\n", states[x], s.w[x], labelled[x]));
    }
    let mut out = Outputs::new(cfg.out.as_deref());
    out.json(
        "solution.json",
        "solve",
        &SolveOutput {
            mode: s.mode,
            n,
            lambda: s.lambda,
            cw_lower: s.cw_lower,
            cw_upper: s.cw_upper,
            residual_sup: s.residual_sup,
            iterations: s.iterations,
            positivity_certified: s.positivity_certified,
            states: states.clone(),
            w: s.w.clone(),
        },
    )?;
    out.json(
        "policy.json",
        "solve",
        &PolicyOutput {
            mode: p.mode,
            lambda_claimed: p.lambda_claimed,
            residual: p.residual,
            states,
            actions: labelled,
        },
    )?;
    out.raw("solution.csv", csv);
    println!(
        "lambda = {:.10} in [{:.10}, {:.10}], {} iterations{}",
        s.lambda,
        s.cw_lower,
        s.cw_upper,
        s.iterations,
        if s.positivity_certified {
            ""
        } else {
            ", positivity not certified"
        }
    );
    report_written(out.write()?);
    Ok(())
}

pub fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load(cfg)?;
    match cfg.n {
        Some(n) => {
            let t = build_truncated(&model, &scheme(&model, cfg)?, n)?;
            solve_on(&t, Some(n), model.actions(), cfg)
        }
        None => solve_on(model.as_ref(), None, model.actions(), cfg),
    }
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    states: Vec<String>,
    #[serde(flatten)]
    report: &'a riskctl_core::LimitReport,
    a4: riskctl_core::limit::A4Verdict,
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load(cfg)?;
    let n_from = RunConfig::require(&cfg.n_from, "n-from")?;
    let n_to = RunConfig::require(&cfg.n_to, "n-to")?;
    let opts = SweepOptions {
        solver: solver_options(cfg),
        epsilon: cfg.epsilon,
        ..SweepOptions::default()
    };
    let report = solve_sequence(&model, &scheme(&model, cfg)?, n_from, n_to, &opts)?;
    let a4 = check_a4(&model, &report, report.a3.epsilon, A4_MAX_STEPS)?;
    let mut out = Outputs::new(cfg.out.as_deref());
    out.json(
        "sweep.json",
        "sweep",
        &SweepOutput {
            states: model.states().iter().map(|s| s.label.clone()).collect(),
            report: &report,
            a4,
        },
    )?;
    out.raw("sweep.csv", report.to_csv());
    println!(
        "{} balls, lambda_limsup = {:.10}, settled {}, degeneracy_flag {}",
        report.n_values.len(),
        report.lambda_limsup,
        report.lambda_settled,
        report.degeneracy_flag
    );
    report_written(out.write()?);
    Ok(())
}

#[derive(Serialize)]
struct SimulateOutput {
    #[serde(flatten)]
    estimate: riskctl_core::SimulationEstimate,
    policy: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_solved: Option<f64>,
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load(cfg)?;
    let x0 = state(&model, cfg.x0.as_deref())?;
    let m = RunConfig::require(&cfg.m, "m")?;
    let paths = RunConfig::require(&cfg.paths, "paths")?;
    let seed = cfg.seed.unwrap_or(0);
    let (selector, lambda_solved) = policy(&model, cfg)?;
    let e = run_simulation(&model, &selector, x0, m, paths, seed, cfg.reference_radius)?;
    let csv = format!(
        "horizon,paths,seed,start,estimate,std_error_log,exit_fraction\n{},{},{},{},{},{},{}\n",
        e.horizon, e.paths, e.seed, e.start, e.estimate, e.std_error_log, e.exit_fraction
    );
    println!(
        "estimate = {:.10} +- {:.3e} (m = {m}, N = {paths})",
        e.estimate, e.std_error_log
    );
    let mut out = Outputs::new(cfg.out.as_deref());
    out.json(
        "simulation.json",
        "simulate",
        &SimulateOutput {
            estimate: e,
            policy: selector
                .iter()
                .map(|&a| model.actions()[a].clone())
                .collect(),
            lambda_solved,
        },
    )?;
    out.raw("simulation.csv", csv);
    report_written(out.write()?);
    Ok(())
}

#[derive(Serialize)]
struct HarmonicOutput {
    n: usize,
    c_bar: f64,
    lambda: f64,
    k: usize,
    w1: f64,
    w: Vec<f64>,
}

pub fn example_harmonic(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = HarmonicSpec::new(cfg.n.unwrap_or(4), cfg.c_bar.unwrap_or(1.0))?;
    let model = harmonic_model(spec);
    let cf = harmonic_closed_form(spec);
    let mut out = Outputs::new(cfg.out.as_deref());
    out.raw("harmonic_model.json", format!("{}\n", model.to_json()?));
    out.json(
        "closed_form.json",
        "example-harmonic",
        &HarmonicOutput {
            n: spec.n,
            c_bar: spec.c_bar,
            lambda: cf.lambda,
            k: cf.k,
            w1: cf.w1,
            w: harmonic_profile(spec),
        },
    )?;
    println!(
        "n = {}: lambda = {:.10}, k = {}, w(1) = {:.10}",
        spec.n, cf.lambda, cf.k, cf.w1
    );
    report_written(out.write()?);
    Ok(())
}

pub fn diagnose_exass(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load(cfg)?;
    let x0 = state(&model, cfg.x0.as_deref())?;
    let radius = RunConfig::require(&cfg.reference_radius, "reference-radius")?;
    let horizons = RunConfig::require(&cfg.horizons, "horizons")?;
    let paths = RunConfig::require(&cfg.paths, "paths")?;
    let (selector, _) = policy(&model, cfg)?;
    let r: ExassReport = exass_diagnostic(
        &model,
        &selector,
        x0,
        radius,
        &horizons,
        paths,
        cfg.seed.unwrap_or(0),
    )?;
    let mut out = Outputs::new(cfg.out.as_deref());
    out.json("exass.json", "diagnose-exass", &r)?;
    out.raw("exass.csv", r.to_csv());
    println!("heuristic exit diagnostic: trend {:?}", r.trend);
    report_written(out.write()?);
    match r.failure {
        Some(msg) => Err(CliError::Diagnostic(msg)),
        None => Ok(()),
    }
}
