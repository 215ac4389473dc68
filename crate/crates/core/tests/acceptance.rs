//! Acceptance gate. Runs every primary criterion at its stated tolerance and
//! prints one PASS/FAIL line each; exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use quenchlab::analysis::{analyze, AnalysisConfig, QuenchReport, Regime};
use quenchlab::shooting::{run_shooting, shoot_once, ShootingConfig, Side};
use quenchlab::stationary::{map_region, solve_stationary_newton, CellClass, NewtonConfig, RegionConfig, Spacing};
use quenchlab::*;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Headline {
    op: NonlocalOperator,
    run: Integration,
    report: QuenchReport,
    seconds: f64,
}

fn headline() -> Result<Headline, String> {
    let op = operator(100);
    let params = headline_params();
    let start = Instant::now();
    let state0 = State::constant(op.len(), 1.0, 1.0);
    let run = integrate(&state0, &op, &params, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let report = analyze(&run, op.grid(), &params, &state0.u, &state0.v, &AnalysisConfig::default());
    let seconds = start.elapsed().as_secs_f64();
    Ok(Headline {
        op,
        run,
        report,
        seconds,
    })
}

fn headline_time(h: &Headline) -> Verdict {
    let t = h.report.t_est.ok_or("headline run did not quench")?;
    let rel = (t - HEADLINE_T).abs() / HEADLINE_T;
    let halved = SolverConfig::default().with_tolerance_scaled(0.5);
    let params = headline_params();
    let run = integrate(&State::constant(h.op.len(), 1.0, 1.0), &h.op, &params, &halved).map_err(|e| e.to_string())?;
    let t2 = run.outcome.quench_time().ok_or("halved-tolerance run did not quench")?.value();
    let change = (t2 - t).abs() / t;
    check(
        rel <= 0.02 && h.seconds <= 120.0 && change < 0.005,
        format!(
            "T_est={t:.6} (rel {rel:.2e} vs 9.0619, need <=2e-2), runtime {:.1}s (need <=120), halving change {change:.2e} (need <5e-3)",
            h.seconds
        ),
    )
}

fn headline_rates(h: &Headline) -> Verdict {
    let (au, av) = (h.report.alpha_u, h.report.alpha_v);
    let (Some(au), Some(av)) = (au, av) else {
        return Err(format!("missing fit: u {:?}, v {:?}", h.report.rate_u.fit_error, h.report.rate_v.fit_error));
    };
    check(
        (au - 0.20).abs() <= 0.03 && (av - 0.40).abs() <= 0.03,
        format!("alpha_u={au:.5} (0.20+-0.03), alpha_v={av:.5} (0.40+-0.03)"),
    )
}

fn headline_quench_set(h: &Headline) -> Verdict {
    let set = &h.report.quench_set;
    let dx = h.op.grid().spacing();
    check(
        set.len() == 1 && set[0].abs() <= dx,
        format!("quench set {set:?}, grid cell {dx}"),
    )
}

fn headline_psi_gap(h: &Headline) -> Verdict {
    let t = h.report.t_est.ok_or("headline run did not quench")?;
    let bound = 0.0995 + 8.0 * (t + 1.0);
    let max = h.run.trajectory.psi_gap_max();
    check(max <= bound, format!("max psi_gap={max:.6} <= {bound:.4}"))
}

fn global_case() -> Verdict {
    let op = operator(100);
    let params = SystemParams::new(0.001, 0.001, 2.0, 3.0).unwrap();
    let run = integrate(&State::constant(op.len(), 1.0, 1.0), &op, &params, &SolverConfig::default())
        .map_err(|e| e.to_string())?;
    let Outcome::Steady { residual } = run.outcome else {
        return Err(format!("outcome {}", run.outcome.label()));
    };
    let ones = vec![1.0; op.len()];
    let pair = solve_stationary_newton(&op, &params, &ones, &ones, &NewtonConfig::default()).map_err(|e| e.to_string())?;
    let diff = inf_norm_diff(&pair.w, &run.final_state.u).max(inf_norm_diff(&pair.z, &run.final_state.v));
    let (wf, zf) = (0.001f64.powf(1.0 / 3.0), 0.001f64.sqrt());
    let strict = pair.w.iter().all(|&w| wf < w && w <= 1.0) && pair.z.iter().all(|&z| zf < z && z <= 1.0);
    check(
        diff <= 1e-8 && strict,
        format!("Steady (residual {residual:.1e}), Newton vs evolution {diff:.2e} (need <=1e-8), bounds strict: {strict}"),
    )
}

fn non_simultaneous(p: f64, q: f64, quencher: Component) -> Verdict {
    let op = operator(100);
    let params = SystemParams::new(0.1, 0.1, p, q).unwrap();
    let cfg = SolverConfig::default();
    let state0 = State::constant(op.len(), 1.0, 1.0);
    let run = integrate(&state0, &op, &params, &cfg).map_err(|e| e.to_string())?;
    let report = analyze(&run, op.grid(), &params, &state0.u, &state0.v, &AnalysisConfig::default());
    let Outcome::Quenched {
        u_quenched,
        v_quenched,
        ..
    } = run.outcome
    else {
        return Err(format!("outcome {}", run.outcome.label()));
    };
    let (only, floor_other, alpha) = match quencher {
        Component::U => (u_quenched && !v_quenched, report.floor_v, report.alpha_u),
        Component::V => (v_quenched && !u_quenched, report.floor_u, report.alpha_v),
    };
    let alpha = alpha.ok_or("missing rate fit")?;
    check(
        only && floor_other >= 10.0 * cfg.quench_threshold && (alpha - 1.0).abs() <= 0.05,
        format!(
            "(p,q)=({p},{q}): only {quencher:?} quenches: {only}, other floor {floor_other:.4} (need >=1e-5), exponent {alpha:.5} (1.00+-0.05)"
        ),
    )
}

fn rk4_oracle() -> Verdict {
    let params = headline_params();
    let op = operator(100);
    let cfg = SolverConfig {
        t_max: 0.5,
        ..SolverConfig::default()
    };
    let run = integrate(&State::constant(op.len(), 1.0, 1.0), &op, &params, &cfg).map_err(|e| e.to_string())?;
    if run.final_state.t != 0.5 {
        return Err(format!("run stopped at t={}", run.final_state.t));
    }
    let (mut u, mut v) = (vec![1.0; op.len()], vec![1.0; op.len()]);
    RefOperator::new(100).rk4(&params, &mut u, &mut v, 1e-5, 50_000);
    let err = inf_norm_diff(&run.final_state.u, &u).max(inf_norm_diff(&run.final_state.v, &v));
    check(err <= 1e-6, format!("inf-norm difference at t=0.5: {err:.2e} (need <=1e-6)"))
}

fn comparison() -> Verdict {
    let compared = suites::comparison_suite(100, 20, 1234)?;
    let snapshots = suites::monotone_from_ones(100)?;
    Ok(format!(
        "20 ordered pairs kept their order at {compared} common samples; monotone decrease over {snapshots} snapshots"
    ))
}

fn region_map() -> Verdict {
    let op = operator(100);
    let cfg = RegionConfig {
        lambda_range: (0.0, 0.5),
        mu_range: (0.0, 0.5),
        resolution: (8, 8),
        spacing: Spacing::Geometric,
        bisect_steps: 0,
    };
    let map = map_region(&op, 2.0, 2.0, &cfg, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let violations = map.staircase_violations().len();
    let outside = map.global_outside_unit_square().len();
    let globals = map.cells.iter().filter(|c| c.class == CellClass::Global).count();
    let unresolved = map.unresolved();
    let ones = vec![1.0; op.len()];
    let at_one = [0.001, 0.1, 0.5, 1.0].iter().all(|&mu| {
        let params = SystemParams::new(1.0, mu, 2.0, 2.0).unwrap();
        solve_stationary_newton(&op, &params, &ones, &ones, &NewtonConfig::default()).is_err()
    });
    check(
        violations == 0 && outside == 0 && unresolved == 0 && at_one,
        format!(
            "{violations} staircase violations, {globals} Global cells, {outside} outside (0,1)^2, {unresolved} unresolved, lambda=1 NoStationary: {at_one}"
        ),
    )
}

fn shooting() -> Verdict {
    let op = operator(50);
    let params = SystemParams::new(1.0, 1.0, 0.5, 0.5).unwrap();
    let cfg = ShootingConfig::constant(params, op.len(), 0.2, 0.2);
    let solver = SolverConfig::default();
    let once = |d: f64| shoot_once(&cfg, d, &op, &solver).map_err(|e| e.to_string());
    let (hi, lo, mid) = (once(0.95)?, once(0.05)?, once(0.5)?);
    let result = run_shooting(&cfg, &op, &solver).map_err(|e| e.to_string())?;
    let within = result.records().all(|r| r.t_delta <= cfg.t_delta_bound(r.delta));
    let ratio = result.bracket_width() / (result.initial_bracket.1 - result.initial_bracket.0);
    let (a, b) = result.bracket;
    let sides = result.records().find(|r| r.delta == a).map(|r| r.side) == Some(Side::Minus)
        && result.records().find(|r| r.delta == b).map(|r| r.side) == Some(Side::Plus);
    check(
        hi.regime == Regime::NonSimultaneousV
            && lo.regime == Regime::NonSimultaneousU
            && mid.regime == Regime::Simultaneous
            && within
            && ratio <= 2f64.powi(-20)
            && sides,
        format!(
            "delta=0.95 {}, 0.05 {}, 0.5 {}; T_delta within bound: {within}; bracket [{a:.10}, {b:.10}] ratio {ratio:.3e} (need <={:.3e}), sides opposite: {sides}",
            hi.regime.as_str(),
            lo.regime.as_str(),
            mid.regime.as_str(),
            2f64.powi(-20)
        ),
    )
}

fn jacobian() -> Verdict {
    let worst = suites::jacobian_check(8, 10, 2024, 1e-5)?;
    Ok(format!("10 random states, worst relative difference {worst:.2e} (need <=1e-5)"))
}

fn main() -> ExitCode {
    let head = headline();
    let on_headline = |f: fn(&Headline) -> Verdict| -> Verdict {
        match &head {
            Ok(h) => f(h),
            Err(e) => Err(e.clone()),
        }
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("headline quenching time", Box::new(|| on_headline(headline_time))),
        ("simultaneous rates", Box::new(|| on_headline(headline_rates))),
        ("quench set", Box::new(|| on_headline(headline_quench_set))),
        ("global case", Box::new(global_case)),
        ("non-simultaneous u", Box::new(|| non_simultaneous(2.0, 0.7, Component::U))),
        ("non-simultaneous v", Box::new(|| non_simultaneous(0.2, 3.0, Component::V))),
        ("psi-gap invariant", Box::new(|| on_headline(headline_psi_gap))),
        ("rk4 oracle", Box::new(rk4_oracle)),
        ("comparison suite", Box::new(comparison)),
        ("region map", Box::new(region_map)),
        ("shooting", Box::new(shooting)),
        ("jacobian check", Box::new(jacobian)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let verdict = run();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
