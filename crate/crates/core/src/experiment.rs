//! Orchestration of the five experiments behind the command-line tool.
//!
//! Each experiment writes its CSV artifacts, a JSON report and a manifest
//! with checksums into the output directory. Key names of the reports are
//! listed in `docs/schema.md`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};

use crate::analysis::{analyze, fit_rate, QuenchReport, RateLaw};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::integrator::{integrate, Component, Integration, Outcome, QuenchTime};
use crate::io::{self, Manifest, OutputDir};
use crate::model::SystemParams;
use crate::shooting::{run_shooting, ShootingConfig};
use crate::stationary::{classify_parameter_point, map_region, solve_stationary_newton, PointClass};
use crate::time::Time;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Stationary,
    Region,
    Rates,
    Shoot,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Stationary => "stationary",
            Command::Region => "region",
            Command::Rates => "rates",
            Command::Shoot => "shoot",
        }
    }

    fn manifest_name(self) -> &'static str {
        // `rates` usually shares its directory with a `simulate` run
        match self {
            Command::Rates => "manifest_rates.json",
            _ => "manifest.json",
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_UNRESOLVED: i32 = 3;

/// Exit status for an error that aborted a run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. }
        | Error::Expression { .. }
        | Error::InvalidGrid(_)
        | Error::InvalidKernel(_)
        | Error::ExteriorMassNegative { .. }
        | Error::InvalidParams(_)
        | Error::DimensionMismatch { .. }
        | Error::Io { .. } => EXIT_CONFIG,
        Error::Unresolved { .. } => EXIT_UNRESOLVED,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub exit_code: i32,
    pub report: Map<String, Value>,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Runs `command` and writes its artifacts into `cfg.output_dir`.
pub fn run_experiment(cfg: &RunConfig, command: Command, seed: Option<u64>) -> Result<RunSummary> {
    let start = Instant::now();
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let mut report = Map::new();
    report.insert("command".into(), json!(command.name()));
    let exit_code = match command {
        Command::Simulate => simulate(cfg, &mut out, &mut report)?,
        Command::Stationary => stationary(cfg, &mut out, &mut report)?,
        Command::Region => region(cfg, &mut out, &mut report)?,
        Command::Rates => rates(cfg, &mut out, &mut report)?,
        Command::Shoot => shoot(cfg, &mut out, &mut report)?,
    };
    let report_name = if command == Command::Rates { "rates.json" } else { "report.json" };
    io::write_json(&out.file(report_name), &report)?;
    let manifest = Manifest {
        command: command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        exit_code,
        config: cfg.emit(),
        files: Vec::new(),
    };
    let manifest_path = out.finish(manifest, command.manifest_name())?;
    Ok(RunSummary {
        exit_code,
        report,
        files: out.written().to_vec(),
        manifest: manifest_path,
    })
}

fn put(report: &mut Map<String, Value>, key: &str, value: impl Into<Value>) {
    report.insert(key.to_string(), value.into());
}

/// JSON number, or `null` for non-finite values.
fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn put_params(report: &mut Map<String, Value>, cfg: &RunConfig) {
    let SystemParams { lambda, mu, p, q } = cfg.params;
    put(report, "lambda", num(lambda));
    put(report, "mu", num(mu));
    put(report, "p", num(p));
    put(report, "q", num(q));
    put(report, "n", cfg.n_half);
    put(report, "a", num(cfg.domain.0));
    put(report, "b", num(cfg.domain.1));
}

fn law_str(law: &RateLaw) -> String {
    match law {
        RateLaw::Power { power } => format!("power:{power}"),
        RateLaw::PowerLog { power, log_power } => format!("power_log:{power}:{log_power}"),
        RateLaw::Bounded => "bounded".into(),
    }
}

/// Flattens a [`QuenchReport`] and the solver statistics into `report`.
pub fn flatten_quench_report(report: &mut Map<String, Value>, r: &QuenchReport, run: &Integration) {
    put(report, "outcome", r.outcome.label());
    let (uq, vq, residual) = match r.outcome {
        Outcome::Quenched {
            u_quenched,
            v_quenched,
            ..
        } => (Some(u_quenched), Some(v_quenched), None),
        Outcome::Steady { residual } => (None, None, Some(residual)),
        Outcome::TimedOut => (None, None, None),
    };
    put(report, "u_quenched", json!(uq));
    put(report, "v_quenched", json!(vq));
    put(report, "steady_residual", opt_num(residual));
    put(report, "t_final", num(run.final_state.t));
    put(report, "T_est", opt_num(r.t_est));
    put(report, "T_correction", opt_num(r.t_correction));
    put(
        report,
        "T_degenerate",
        json!(r.outcome.quench_time().map(|t| t.degenerate)),
    );
    put(report, "regime_predicted", r.regime_predicted.as_str());
    put(report, "regime_observed", r.regime_observed.as_str());
    for (name, rate) in [("u", &r.rate_u), ("v", &r.rate_v)] {
        let fit = rate.fit.as_ref();
        put(report, &format!("alpha_{name}"), opt_num(fit.map(|f| f.exponent)));
        put(report, &format!("alpha_{name}_theory"), opt_num(rate.law.power()));
        put(report, &format!("alpha_{name}_samples"), json!(fit.map(|f| f.samples)));
        put(report, &format!("alpha_{name}_residual"), opt_num(fit.map(|f| f.residual)));
        put(report, &format!("alpha_{name}_sensitivity_lo"), opt_num(rate.sensitivity.map(|s| s.0)));
        put(report, &format!("alpha_{name}_sensitivity_hi"), opt_num(rate.sensitivity.map(|s| s.1)));
        put(report, &format!("alpha_{name}_log"), opt_num(rate.log_fit.map(|f| f.exponent)));
        put(report, &format!("rate_law_{name}"), law_str(&rate.law));
        put(report, &format!("fit_error_{name}"), json!(rate.fit_error));
    }
    put(report, "log_correction_u", r.log_correction.0);
    put(report, "log_correction_v", r.log_correction.1);
    put(report, "quench_set", json!(r.quench_set));
    put(report, "psi_gap_initial", num(r.psi_gap_initial));
    put(report, "psi_gap_max", num(r.psi_gap_max));
    put(report, "psi_gap_bound", opt_num(r.psi_gap_bound));
    put(report, "floor_u", num(r.floor_u));
    put(report, "floor_v", num(r.floor_v));
    put(report, "structural_floor_u", num(r.structural_floor.0));
    put(report, "structural_floor_v", num(r.structural_floor.1));
    let rel = r.component_relation.as_ref();
    put(report, "relation_bounded", json!(rel.map(|c| c.bounded)));
    put(
        report,
        "relation_final_normalized",
        opt_num(rel.and_then(|c| c.normalized.last().copied())),
    );
    put(report, "relation_final_raw", opt_num(rel.and_then(|c| c.raw.last().copied())));
    put(report, "bounds_respected", r.bounds_respected);
    put(report, "steps_accepted", run.stats.accepted);
    put(report, "steps_rejected", run.stats.rejected);
    put(report, "factorizations", run.stats.factorizations);
    put(report, "samples", run.trajectory.samples.len());
}

fn simulate(cfg: &RunConfig, out: &mut OutputDir, report: &mut Map<String, Value>) -> Result<i32> {
    let grid = cfg.grid()?;
    let op = cfg.operator()?;
    let params = SystemParams::new(cfg.params.lambda, cfg.params.mu, cfg.params.p, cfg.params.q)?;
    let state0 = cfg.initial_state(&grid)?;
    let run = integrate(&state0, &op, &params, &cfg.solver)?;
    io::write_trajectory_csv(&out.file("trajectory.csv"), &run.trajectory, &grid)?;
    io::write_snapshots_csv(&out.file("snapshots.csv"), &run.trajectory, &grid)?;
    if let Some(t) = run.outcome.quench_time() {
        io::write_rates_csv(&out.file("rates.csv"), &run.trajectory, &t)?;
    }
    let analysis = analyze(&run, &grid, &params, &state0.u, &state0.v, &cfg.analysis_config());
    put_params(report, cfg);
    put(report, "fit_window_lo", num(cfg.analysis.fit_window.0));
    put(report, "fit_window_hi", num(cfg.analysis.fit_window.1));
    flatten_quench_report(report, &analysis, &run);
    Ok(EXIT_OK)
}

fn stationary(cfg: &RunConfig, out: &mut OutputDir, report: &mut Map<String, Value>) -> Result<i32> {
    let grid = cfg.grid()?;
    let op = cfg.operator()?;
    let SystemParams { lambda, mu, p, q } = cfg.params;
    let params = SystemParams::stationary(lambda, mu, p, q)?;
    put_params(report, cfg);

    let ones = vec![1.0; op.len()];
    let mut guess = (ones.clone(), ones);
    let mut evolution = None;
    if lambda > 0.0 && mu > 0.0 {
        let c = classify_parameter_point(&op, p, q, lambda, mu, &cfg.solver)?;
        put(
            report,
            "evolution_class",
            match c.class {
                PointClass::Global => "global",
                PointClass::AllQuench => "all_quench",
            },
        );
        put(report, "evolution_T_est", opt_num(c.t_est));
        if c.class == PointClass::Global {
            guess = (c.final_state.u.clone(), c.final_state.v.clone());
            evolution = Some(c.final_state);
        }
    } else {
        put(report, "evolution_class", Value::Null);
        put(report, "evolution_T_est", Value::Null);
    }

    put(report, "w_floor", num(mu.powf(1.0 / q)));
    put(report, "z_floor", num(lambda.powf(1.0 / p)));
    match solve_stationary_newton(&op, &params, &guess.0, &guess.1, &cfg.newton) {
        Ok(pair) => {
            io::write_stationary_csv(&out.file("stationary.csv"), &pair, &grid)?;
            let range = |xs: &[f64]| {
                let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            };
            let (wl, wh) = range(&pair.w);
            let (zl, zh) = range(&pair.z);
            put(report, "stationary_exists", true);
            put(report, "no_stationary_reason", Value::Null);
            put(report, "newton_iterations", pair.iterations);
            put(report, "newton_residual", num(pair.residual));
            put(report, "w_min", num(wl));
            put(report, "w_max", num(wh));
            put(report, "z_min", num(zl));
            put(report, "z_max", num(zh));
            put(report, "margin_w", num(pair.margin.0));
            put(report, "margin_z", num(pair.margin.1));
            let agreement = evolution.map(|s| {
                s.u.iter()
                    .zip(&pair.w)
                    .chain(s.v.iter().zip(&pair.z))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            });
            put(report, "evolution_agreement", opt_num(agreement));
        }
        Err(e) => {
            put(report, "stationary_exists", false);
            put(report, "no_stationary_reason", e.reason);
        }
    }
    Ok(EXIT_OK)
}

fn region(cfg: &RunConfig, out: &mut OutputDir, report: &mut Map<String, Value>) -> Result<i32> {
    let op = cfg.operator()?;
    let map = map_region(&op, cfg.params.p, cfg.params.q, &cfg.region, &cfg.solver)?;
    io::write_region_csv(&out.file("region.csv"), &map)?;
    io::write_boundary_csv(&out.file("boundary.csv"), &map)?;
    put_params(report, cfg);
    put(report, "lambda_axis", json!(map.lambdas));
    put(report, "mu_axis", json!(map.mus));
    let count = |c| map.cells.iter().filter(|x| x.class == c).count();
    use crate::stationary::CellClass;
    put(report, "cells_global", count(CellClass::Global));
    put(report, "cells_all_quench", count(CellClass::AllQuench));
    put(report, "cells_unresolved", map.unresolved());
    put(report, "staircase_violations", map.staircase_violations().len());
    put(report, "global_outside_unit_square", map.global_outside_unit_square().len());
    Ok(if map.unresolved() > 0 { EXIT_UNRESOLVED } else { EXIT_OK })
}

/// `T - t_final`: taken from a `report.json` next to the trajectory when one
/// exists, otherwise extrapolated linearly from the last two samples.
fn quench_correction(traj_path: &Path, traj: &crate::integrator::Trajectory) -> Result<(f64, &'static str)> {
    let report = traj_path.with_file_name("report.json");
    if report.exists() {
        if let Some(c) = io::read_json(&report)?.get("T_correction").and_then(Value::as_f64) {
            return Ok((c, "report"));
        }
    }
    let n = traj.samples.len();
    if n < 2 {
        return Err(Error::InsufficientWindow { found: n, required: 2 });
    }
    let (a, b) = (&traj.samples[n - 2], &traj.samples[n - 1]);
    let m0 = a.min_u.min(a.min_v);
    let m1 = b.min_u.min(b.min_v);
    let slope = (m1 - m0) / b.dt;
    if !(slope < 0.0) {
        return Err(Error::NumericalFailure(
            "trajectory minimum is not decreasing at its end".into(),
        ));
    }
    Ok((m1 / -slope, "extrapolated"))
}

fn rates(cfg: &RunConfig, out: &mut OutputDir, report: &mut Map<String, Value>) -> Result<i32> {
    let grid = cfg.grid()?;
    let traj_path = cfg
        .rates_trajectory
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("trajectory.csv"));
    let traj = io::read_trajectory_csv(&traj_path, &grid)?;
    let (correction, source) = quench_correction(&traj_path, &traj)?;
    let t_final = traj.last().map_or(Time::ZERO, |s| s.t);
    let t_est = QuenchTime {
        t_final,
        correction,
        degenerate: false,
    };
    io::write_rates_csv(&out.file("rates.csv"), &traj, &t_est)?;
    put(report, "trajectory", traj_path.display().to_string());
    put(report, "T_est", num(t_est.value()));
    put(report, "T_correction", num(correction));
    put(report, "T_source", source);
    put(report, "fit_window_lo", num(cfg.analysis.fit_window.0));
    put(report, "fit_window_hi", num(cfg.analysis.fit_window.1));
    for (name, c) in [("u", Component::U), ("v", Component::V)] {
        match fit_rate(&traj, &t_est, c, cfg.analysis.fit_window) {
            Ok(f) => {
                put(report, &format!("alpha_{name}"), num(f.exponent));
                put(report, &format!("alpha_{name}_samples"), f.samples);
                put(report, &format!("alpha_{name}_residual"), num(f.residual));
                put(report, &format!("fit_error_{name}"), Value::Null);
            }
            Err(e) => {
                put(report, &format!("alpha_{name}"), Value::Null);
                put(report, &format!("alpha_{name}_samples"), Value::Null);
                put(report, &format!("alpha_{name}_residual"), Value::Null);
                put(report, &format!("fit_error_{name}"), e.to_string());
            }
        }
    }
    Ok(EXIT_OK)
}

fn shoot(cfg: &RunConfig, out: &mut OutputDir, report: &mut Map<String, Value>) -> Result<i32> {
    let grid = cfg.grid()?;
    let op = cfg.operator()?;
    let params = SystemParams::new(cfg.params.lambda, cfg.params.mu, cfg.params.p, cfg.params.q)?;
    let base = cfg.initial_state(&grid)?;
    let sc = ShootingConfig {
        params,
        u0_base: base.u,
        v0_base: base.v,
        delta_samples: cfg.shoot.delta_samples,
        bisect_steps: cfg.shoot.bisect_steps,
    };
    let result = run_shooting(&sc, &op, &cfg.solver)?;
    io::write_shooting_csv(&out.file("shooting.csv"), result.records())?;
    put_params(report, cfg);
    put(report, "sweep_samples", result.sweep.len());
    put(report, "bisect_steps", result.bisection.len());
    put(report, "bracket_lo", num(result.bracket.0));
    put(report, "bracket_hi", num(result.bracket.1));
    put(report, "initial_bracket_lo", num(result.initial_bracket.0));
    put(report, "initial_bracket_hi", num(result.initial_bracket.1));
    let initial_width = result.initial_bracket.1 - result.initial_bracket.0;
    put(report, "bracket_width", num(result.bracket_width()));
    put(report, "bracket_width_ratio", num(result.bracket_width() / initial_width));
    put(report, "max_adjacent_jump", num(result.max_adjacent_jump()));
    put(
        report,
        "t_delta_within_bound",
        result.records().all(|r| r.t_delta <= sc.t_delta_bound(r.delta)),
    );
    put(report, "initial_decrease", result.records().all(|r| r.initial_decrease));
    Ok(EXIT_OK)
}
