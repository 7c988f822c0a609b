//! One function per subcommand. Each writes its outputs and returns a one-line
//! summary; checks that fail after the outputs are written return an error.

use mixchart::moments::c2_series_oracle;
use mixchart::oracle::{c2_path_samples, simulate_chart};
use mixchart::{build_model, c2, c2_mixture, grid_search, McEstimate};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutputDir;

#[derive(Serialize)]
struct MomentsRow {
    h: f64,
    j: f64,
    s: f64,
    integral: f64,
    per_unit_time: f64,
    oracle_integral: f64,
    oracle_truncation_error: f64,
    oracle_quadrature_error: f64,
    rel_diff: f64,
}

pub fn moments(cfg: &RunConfig, out: &mut OutputDir) -> Result<String, CliError> {
    let input = cfg.interval()?;
    let n = &cfg.numerics;
    let closed = c2(&input)?;
    let k_max = n.k_max.expect("resolved config has k_max");
    let oracle = c2_series_oracle(&input, k_max, n.n_quad, n.tolerance)?;
    let rel_diff = (closed.integral - oracle.integral).abs() / oracle.integral.abs().max(f64::MIN_POSITIVE);
    let row = MomentsRow {
        h: input.h,
        j: input.j,
        s: input.s,
        integral: closed.integral,
        per_unit_time: closed.per_unit_time,
        oracle_integral: oracle.integral,
        oracle_truncation_error: oracle.truncation_error,
        oracle_quadrature_error: oracle.quadrature_error,
        rel_diff,
    };
    out.table("moments", std::slice::from_ref(&row))?;
    if rel_diff > n.tolerance {
        return Err(CliError::Tolerance(format!(
            "closed form {} and series {} differ by {rel_diff:e} (tolerance {:e})",
            closed.integral, oracle.integral, n.tolerance
        )));
    }
    Ok(format!(
        "C2 = {} (per unit time {}), series agrees to {rel_diff:.1e}",
        closed.integral, closed.per_unit_time
    ))
}

#[derive(Serialize)]
struct SimulateRow {
    h: f64,
    j: f64,
    s: f64,
    mean: f64,
    std_error: f64,
    n_paths: usize,
    seed: u64,
    closed_form: f64,
    z_score: f64,
}

#[derive(Serialize)]
struct PathRow {
    path: usize,
    value: f64,
}

pub fn simulate(cfg: &RunConfig, out: &mut OutputDir, per_path: bool) -> Result<String, CliError> {
    let spec = cfg.mixture()?;
    let input = cfg.interval()?;
    let n = &cfg.numerics;
    if n.n_paths < 2 {
        return Err(CliError::Config("numerics.n_paths must be at least 2".into()));
    }
    let samples = c2_path_samples(input.j, input.h, input.s, &spec, n.n_paths, n.seed)?;
    let est = McEstimate::from_samples(&samples, n.seed);
    let closed = c2_mixture(&input)?.integral;
    let z = est.z_score(closed);
    let row = SimulateRow {
        h: input.h,
        j: input.j,
        s: input.s,
        mean: est.mean,
        std_error: est.std_error,
        n_paths: est.n_paths,
        seed: est.seed,
        closed_form: closed,
        z_score: z,
    };
    out.table("simulate", std::slice::from_ref(&row))?;
    if per_path {
        let rows: Vec<PathRow> = samples.iter().enumerate().map(|(path, &value)| PathRow { path, value }).collect();
        out.csv("paths.csv", &rows)?;
    }
    if z.abs() > n.z_limit {
        return Err(CliError::Tolerance(format!(
            "simulated mean {} ± {} is {z:.2} standard errors from {closed}",
            est.mean, est.std_error
        )));
    }
    Ok(format!("C2 ≈ {} ± {} (closed form {closed}, z = {z:.2})", est.mean, est.std_error))
}

#[derive(Serialize)]
struct StateRow {
    state: usize,
    level: usize,
    distance: f64,
    alarm: bool,
    probability: f64,
    cost: f64,
}

#[derive(Serialize)]
struct ChartSummary {
    h: f64,
    k: f64,
    expected_cost: f64,
    iterations: usize,
    residual: f64,
    grid_spacing: f64,
    v_max: f64,
    n_states: usize,
    alarm_probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<McEstimate>,
}

pub fn chart(cfg: &RunConfig, out: &mut OutputDir, with_simulation: bool) -> Result<String, CliError> {
    let spec = cfg.mixture()?;
    let costs = cfg.costs()?;
    let params = cfg.chart()?;
    let (spacing, v_max) = cfg.grid()?;
    let model = build_model(params, &cfg.process, &spec, &costs, spacing, v_max)?;
    let rows: Vec<StateRow> = model
        .states()
        .map(|st| {
            let i = st.index();
            StateRow {
                state: i,
                level: st.level,
                distance: model.grid.value(st.level),
                alarm: st.alarm,
                probability: model.stationary[i],
                cost: model.cost_vector[i],
            }
        })
        .collect();
    out.table("stationary", &rows)?;
    let expected_cost = model.expected_cost();
    let simulation = if with_simulation {
        let n = &cfg.numerics;
        Some(simulate_chart(params, &cfg.process, &spec, &costs, n.n_intervals, n.seed)?)
    } else {
        None
    };
    let summary = ChartSummary {
        h: params.h,
        k: params.k,
        expected_cost,
        iterations: model.iterations,
        residual: model.residual,
        grid_spacing: spacing,
        v_max,
        n_states: model.n_states(),
        alarm_probability: rows.iter().filter(|r| r.alarm).map(|r| r.probability).sum(),
        simulation,
    };
    out.json("summary.json", &summary)?;
    let mut line = format!("E(C) = {expected_cost} at h = {}, k = {}", params.h, params.k);
    if let Some(sim) = simulation {
        let z = sim.z_score(expected_cost);
        line.push_str(&format!("; simulation {} ± {} (z = {z:.2})", sim.mean, sim.std_error));
        if z.abs() > cfg.numerics.z_limit {
            return Err(CliError::Tolerance(line));
        }
    }
    Ok(line)
}

#[derive(Serialize)]
struct SurfaceRow<'a> {
    h: f64,
    k: f64,
    cost: Option<f64>,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct OptimumSummary {
    h: f64,
    k: f64,
    best_cost: f64,
    n_points: usize,
    n_failed: usize,
}

pub fn optimize(cfg: &RunConfig, out: &mut OutputDir) -> Result<String, CliError> {
    let spec = cfg.mixture()?;
    let costs = cfg.costs()?;
    let space = cfg.search()?;
    let (spacing, v_max) = cfg.grid()?;
    let opt = grid_search(&space, &cfg.process, &spec, &costs, spacing, v_max)?;
    let rows: Vec<SurfaceRow> = opt
        .cost_surface
        .iter()
        .map(|p| SurfaceRow {
            h: p.h,
            k: p.k,
            cost: p.cost,
            error: p.error.as_deref(),
        })
        .collect();
    out.table("surface", &rows)?;
    let summary = OptimumSummary {
        h: opt.best_params.h,
        k: opt.best_params.k,
        best_cost: opt.best_cost,
        n_points: rows.len(),
        n_failed: rows.iter().filter(|r| r.cost.is_none()).count(),
    };
    out.json("optimum.json", &summary)?;
    Ok(format!(
        "minimum E(C) = {} at h = {}, k = {} ({} of {} points evaluated)",
        opt.best_cost,
        opt.best_params.h,
        opt.best_params.k,
        summary.n_points - summary.n_failed,
        summary.n_points
    ))
}
