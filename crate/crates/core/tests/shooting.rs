mod common;

use common::*;
use quenchlab::analysis::Regime;
use quenchlab::shooting::{check_tdelta_continuity, run_shooting, ShootingConfig, Side};
use quenchlab::*;

fn config(op: &NonlocalOperator, samples: usize, bisect: usize) -> ShootingConfig {
    let params = SystemParams::new(1.0, 1.0, 0.5, 0.5).unwrap();
    ShootingConfig {
        delta_samples: samples,
        bisect_steps: bisect,
        ..ShootingConfig::constant(params, op.len(), 0.2, 0.2)
    }
}

#[test]
fn sweep_is_continuous_and_ordered() {
    let op = operator(25);
    let solver = SolverConfig::default();
    let coarse = run_shooting(&config(&op, 10, 4), &op, &solver).unwrap();
    let fine = run_shooting(&config(&op, 20, 4), &op, &solver).unwrap();
    let verdict = check_tdelta_continuity(&coarse, &fine).unwrap();
    assert!(verdict.consistent, "{verdict:?}");

    // a larger share of u in the data keeps u further from zero
    for w in fine.sweep.windows(2) {
        assert!(w[1].floor_u >= w[0].floor_u - 1e-10, "{:?} then {:?}", w[0], w[1]);
    }
    assert_eq!(fine.sweep.first().unwrap().regime, Regime::NonSimultaneousU);
    assert_eq!(fine.sweep.last().unwrap().regime, Regime::NonSimultaneousV);
}

#[test]
fn every_member_quenches_fast_and_the_bracket_straddles() {
    let op = operator(25);
    let cfg = config(&op, 12, 8);
    let result = run_shooting(&cfg, &op, &SolverConfig::default()).unwrap();
    for r in result.records() {
        assert!(r.initial_decrease, "{r:?}");
        assert!(r.t_delta <= cfg.t_delta_bound(r.delta), "{r:?}");
    }
    let (a, b) = result.bracket;
    assert!(a < b && a <= 0.5 && 0.5 <= b + 1e-9);
    let side = |d: f64| result.records().find(|r| r.delta == d).unwrap().side;
    assert_eq!(side(a), Side::Minus);
    assert_eq!(side(b), Side::Plus);
    let ratio = result.bracket_width() / (result.initial_bracket.1 - result.initial_bracket.0);
    assert!((ratio - 2f64.powi(-8)).abs() < 1e-15);
}

#[test]
fn rejects_data_that_need_not_quench() {
    let op = operator(10);
    let mut cfg = config(&op, 10, 2);
    cfg.u0_base = vec![0.9; op.len()];
    assert!(cfg.validate().is_err());
    let params = SystemParams::new(1.0, 1.0, 2.0, 0.5).unwrap();
    assert!(ShootingConfig::constant(params, op.len(), 0.2, 0.2).validate().is_err());
}
