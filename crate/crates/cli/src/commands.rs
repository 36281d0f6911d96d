//! Subcommand implementations: each one loads and realizes the scenario,
//! runs the corresponding analysis, and emits its artifact files into the
//! output directory.

use crate::artifacts::{
    fmt_float, fmt_opt, fmt_tau, matrix_to_rows, write_csv, write_json, DecoherenceArtifact,
    IsolationArtifact, OptimizeArtifact, StateSpaceArtifact, SweepArtifact, SweepRowArtifact,
    TauArtifact, VerifyArtifact, SCHEMA_VERSION,
};
use crate::error::{CliError, CliResult};
use crate::scenario::{load_scenario, Instance, Scenario};
use crate::verify;
use qmemtime_core::decoherence::{
    approx_decoherence_time, decoherence_time, epsilon_sweep, CrossingOptions,
};
use qmemtime_core::isolation::{isolation_basis, isolation_from_rows, isolation_rank};
use qmemtime_core::moments::{deviation_spec, deviation_trajectory, DeviationSpec};
use qmemtime_core::optimizer::{gain_scale_from_objective, CouplingProblem};
use qmemtime_core::oqho::compose;
use qmemtime_core::RealMatrix;
use std::path::Path;

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_GRID_POINTS: usize = 2000;
pub const DEFAULT_EPS_GRID: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Realize,
    Isolate,
    Simulate,
    Decohere,
    Sweep,
    Optimize,
    Verify,
}

/// Flag overrides; each falls back to the scenario's analysis section and
/// then to the documented default.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub epsilon: Option<f64>,
    pub t_max: Option<f64>,
    pub grid: Option<usize>,
    pub allow_unphysical_p: bool,
}

pub fn run(cmd: Command, scenario_path: &Path, out_dir: &Path, opts: &RunOptions) -> CliResult<()> {
    let scenario = load_scenario(scenario_path)?;
    let instance = scenario.instantiate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    match cmd {
        Command::Realize => realize_cmd(&instance, out_dir),
        Command::Isolate => isolate_cmd(&scenario, &instance, out_dir),
        Command::Simulate => simulate_cmd(&scenario, &instance, out_dir, opts),
        Command::Decohere => decohere_cmd(&scenario, &instance, out_dir, opts),
        Command::Sweep => sweep_cmd(&scenario, &instance, out_dir, opts),
        Command::Optimize => optimize_cmd(&scenario, &instance, out_dir, opts),
        Command::Verify => verify_cmd(&scenario, &instance, out_dir, opts),
    }
}

/// Deviation rows: the override when given, otherwise rows constructed
/// from the coupling kernel at the requested order.
fn deviation_rows(scenario: &Scenario, instance: &Instance) -> CliResult<RealMatrix> {
    match &scenario.f_override {
        Some(f) => Ok(f.clone()),
        None => Ok(isolation_basis(&instance.ss, scenario.isolation_order)?
            .f()
            .clone()),
    }
}

fn build_deviation_spec(
    scenario: &Scenario,
    instance: &Instance,
    opts: &RunOptions,
) -> CliResult<DeviationSpec> {
    let f = deviation_rows(scenario, instance)?;
    Ok(deviation_spec(
        &f,
        &instance.p,
        &instance.ccr,
        opts.allow_unphysical_p,
    )?)
}

fn resolve_epsilon(scenario: &Scenario, opts: &RunOptions) -> f64 {
    opts.epsilon
        .or(scenario.analysis.epsilon)
        .unwrap_or(DEFAULT_EPSILON)
}

/// Search horizon and number of grid steps. The default horizon is ten
/// times the short-horizon crossing estimate when it applies, otherwise
/// ten characteristic drift times.
fn resolve_horizon(
    scenario: &Scenario,
    instance: &Instance,
    spec: &DeviationSpec,
    epsilon: f64,
    opts: &RunOptions,
) -> (f64, usize) {
    let t_max = opts.t_max.or(scenario.analysis.t_max).unwrap_or_else(|| {
        let g = spec.f() * instance.ss.a0();
        match approx_decoherence_time(spec, &g, epsilon) {
            Ok(tau_hat) => 10.0 * tau_hat,
            Err(_) => {
                let a_norm = instance.ss.a().norm();
                if a_norm > 0.0 {
                    10.0 / a_norm
                } else {
                    1.0
                }
            }
        }
    });
    let grid = opts
        .grid
        .or(scenario.analysis.grid_points)
        .unwrap_or(DEFAULT_GRID_POINTS);
    (t_max, grid.max(2))
}

fn realize_cmd(instance: &Instance, out_dir: &Path) -> CliResult<()> {
    let ss = &instance.ss;
    let artifact = StateSpaceArtifact {
        schema_version: SCHEMA_VERSION.into(),
        n: ss.n(),
        nu: instance.ccr.nu(),
        m: instance.ccr.m(),
        a: matrix_to_rows(ss.a()),
        a0: matrix_to_rows(ss.a0()),
        atilde: matrix_to_rows(ss.atilde()),
        b: matrix_to_rows(ss.b()),
        c: matrix_to_rows(ss.c()),
        mho_re: matrix_to_rows(ss.mho().re()),
        mho_im: matrix_to_rows(ss.mho().im()),
        theta: matrix_to_rows(instance.ccr.theta()),
        j_field: matrix_to_rows(instance.ccr.j_field()),
    };
    write_json(&out_dir.join("state_space.json"), &artifact)
}

fn isolate_cmd(scenario: &Scenario, instance: &Instance, out_dir: &Path) -> CliResult<()> {
    let ss = &instance.ss;
    let dec = match &scenario.f_override {
        Some(f) => isolation_from_rows(ss, f.clone(), None)?,
        None => isolation_basis(ss, scenario.isolation_order)?,
    };
    let d = isolation_rank(instance.params.coupling(), ss.n())?;
    let artifact = IsolationArtifact {
        schema_version: SCHEMA_VERSION.into(),
        s: dec.order(),
        d,
        f: matrix_to_rows(dec.f()),
        t: matrix_to_rows(dec.t()),
        a11: matrix_to_rows(dec.a11()),
        a12: matrix_to_rows(dec.a12()),
        a21: matrix_to_rows(dec.a21()),
        a22: matrix_to_rows(dec.a22()),
        b: matrix_to_rows(dec.b()),
        g: matrix_to_rows(dec.g()),
        residual_fb: (dec.f() * ss.b()).norm(),
        residual_drift: (dec.f() * ss.a() - dec.g()).norm(),
    };
    write_json(&out_dir.join("isolation.json"), &artifact)
}

fn simulate_cmd(
    scenario: &Scenario,
    instance: &Instance,
    out_dir: &Path,
    opts: &RunOptions,
) -> CliResult<()> {
    let spec = build_deviation_spec(scenario, instance, opts)?;
    let epsilon = resolve_epsilon(scenario, opts);
    let (t_max, grid) = resolve_horizon(scenario, instance, &spec, epsilon, opts);
    let t_grid: Vec<f64> = (0..=grid)
        .map(|i| {
            if i == grid {
                t_max
            } else {
                i as f64 * t_max / grid as f64
            }
        })
        .collect();
    let traj = deviation_trajectory(&instance.ss, &spec, &t_grid)?;
    let rows: Vec<Vec<String>> = (0..t_grid.len())
        .map(|i| {
            vec![
                fmt_float(traj.t_grid[i]),
                fmt_float(traj.delta[i]),
                fmt_float(traj.state_term[i]),
                fmt_float(traj.noise_term(i)),
            ]
        })
        .collect();
    write_csv(
        &out_dir.join("delta_trajectory.csv"),
        &["t", "delta", "state_term", "noise_term"],
        &rows,
    )
}

fn crossing_options(t_max: f64, grid: usize) -> CrossingOptions {
    CrossingOptions {
        t_max: Some(t_max),
        grid_step: Some(t_max / grid as f64),
        bisect_tol: None,
    }
}

fn decohere_cmd(
    scenario: &Scenario,
    instance: &Instance,
    out_dir: &Path,
    opts: &RunOptions,
) -> CliResult<()> {
    let spec = build_deviation_spec(scenario, instance, opts)?;
    let epsilon = resolve_epsilon(scenario, opts);
    let (t_max, grid) = resolve_horizon(scenario, instance, &spec, epsilon, opts);
    let report = decoherence_time(
        &instance.ss,
        &spec,
        epsilon,
        &crossing_options(t_max, grid),
    )?;
    let artifact = DecoherenceArtifact {
        schema_version: SCHEMA_VERSION.into(),
        epsilon: report.epsilon,
        tau: TauArtifact::from(&report.tau),
        tau_hat: report.tau_hat,
        ratio: report.ratio,
        threshold: report.threshold,
        crossing_bracket: report.crossing_bracket,
        near_tangency: report.near_tangency,
    };
    write_json(&out_dir.join("decoherence_report.json"), &artifact)?;
    let row = vec![
        fmt_float(report.epsilon),
        fmt_tau(&report.tau),
        fmt_opt(report.tau_hat),
        fmt_opt(report.ratio),
        fmt_float(report.threshold),
        if report.near_tangency { "1" } else { "0" }.to_string(),
    ];
    write_csv(
        &out_dir.join("decoherence_report.csv"),
        &["epsilon", "tau", "tau_hat", "ratio", "threshold", "near_tangency"],
        &[row],
    )
}

fn sweep_cmd(
    scenario: &Scenario,
    instance: &Instance,
    out_dir: &Path,
    opts: &RunOptions,
) -> CliResult<()> {
    let spec = build_deviation_spec(scenario, instance, opts)?;
    let eps_grid: Vec<f64> = scenario
        .analysis
        .eps_grid
        .clone()
        .unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec());
    // The horizon must cover the largest level; resolve it there.
    let eps_max = eps_grid.iter().cloned().fold(f64::MIN, f64::max);
    let (t_max, grid) = resolve_horizon(scenario, instance, &spec, eps_max, opts);
    let sweep = epsilon_sweep(
        &instance.ss,
        &spec,
        &eps_grid,
        &crossing_options(t_max, grid),
    )?;
    let rows: Vec<Vec<String>> = sweep
        .reports
        .iter()
        .map(|r| {
            vec![
                fmt_float(r.epsilon),
                fmt_tau(&r.tau),
                fmt_opt(r.tau_hat),
                fmt_opt(r.ratio),
                fmt_opt(sweep.fitted_slope),
            ]
        })
        .collect();
    write_csv(
        &out_dir.join("sweep.csv"),
        &["epsilon", "tau", "tau_hat", "ratio", "fitted_slope"],
        &rows,
    )?;
    let artifact = SweepArtifact {
        schema_version: SCHEMA_VERSION.into(),
        rows: sweep
            .reports
            .iter()
            .map(|r| SweepRowArtifact {
                epsilon: r.epsilon,
                tau: TauArtifact::from(&r.tau),
                tau_hat: r.tau_hat,
                ratio: r.ratio,
            })
            .collect(),
        fitted_slope: sweep.fitted_slope,
    };
    write_json(&out_dir.join("sweep.json"), &artifact)
}

fn optimize_cmd(
    scenario: &Scenario,
    instance: &Instance,
    out_dir: &Path,
    opts: &RunOptions,
) -> CliResult<()> {
    let Some(composite) = &instance.composite else {
        return Err(CliError::Unsupported {
            message: "coupling optimization requires an interconnection scenario".into(),
        });
    };
    let spec = build_deviation_spec(scenario, instance, opts)?;
    let f = spec.f().clone();
    let problem = CouplingProblem::new(
        &f,
        instance.ccr.theta(),
        &instance.p,
        &composite.r_star,
        composite.n1,
    )?;
    let result = problem.optimal_coupling()?;
    let n1 = composite.n1;
    let n2 = instance.ss.n() - n1;
    let (f_before, _) = problem.objective_and_gradient(&RealMatrix::zeros(n1, n2))?;

    // Gains and crossing estimates through the realization route, at the
    // zero-coupling baseline and at the retuned block.
    let epsilon = resolve_epsilon(scenario, opts);
    let baseline = compose(&composite.spec.with_r12(RealMatrix::zeros(n1, n2))?)?;
    let retuned = compose(&composite.spec.with_r12(result.r12_opt.clone())?)?;
    let g_before = &f * baseline.ss.a0();
    let g_after = &f * retuned.ss.a0();
    let tau_hat_of = |g: &RealMatrix| approx_decoherence_time(&spec, g, epsilon).ok();
    let artifact = OptimizeArtifact {
        schema_version: SCHEMA_VERSION.into(),
        r12_opt: matrix_to_rows(&result.r12_opt),
        residual: result.residual,
        k_norm: problem.k().norm(),
        grad_norm: result.grad_norm,
        g_matrix_rank: result.g_matrix_rank,
        nullity: result.nullity,
        f_before,
        f_after: result.f_value,
        gain_before: gain_scale_from_objective(f_before),
        gain_after: gain_scale_from_objective(result.f_value),
        epsilon,
        tau_hat_before: tau_hat_of(&g_before),
        tau_hat_after: tau_hat_of(&g_after),
    };
    write_json(&out_dir.join("r12_opt.json"), &artifact)
}

fn verify_cmd(
    scenario: &Scenario,
    instance: &Instance,
    out_dir: &Path,
    opts: &RunOptions,
) -> CliResult<()> {
    let checks = verify::run_suite(scenario, instance, opts)?;
    let passed = checks.iter().filter(|c| c.status == "pass").count();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| c.status == "fail")
        .map(|c| c.name.clone())
        .collect();
    let skipped = checks.iter().filter(|c| c.status == "skip").count();
    let artifact = VerifyArtifact {
        schema_version: SCHEMA_VERSION.into(),
        mode: scenario.mode.as_str().into(),
        seed: scenario.seed,
        checks,
        passed,
        failed: failed.len(),
        skipped,
    };
    write_json(&out_dir.join("verify_report.json"), &artifact)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed { failed })
    }
}
