mod common;

use common::*;
use quenchlab::analysis::{check_component_relation, detect_quench_set, fit_rate, least_squares};
use quenchlab::integrator::{Sample, Snapshot};
use quenchlab::stationary::{
    check_stationary_monotonicity, classify_parameter_point, map_region, solve_stationary_newton, CellClass,
    NewtonConfig, PointClass, RegionConfig, Spacing,
};
use quenchlab::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn operator_matches_reference_weights() {
    let op = operator(20);
    let r = RefOperator::new(20);
    for i in 0..op.len() {
        let mut dense = vec![0.0; op.len()];
        for &(j, w) in &r.rows[i] {
            dense[j] = w;
        }
        assert!(inf_norm_diff(op.row(i), &dense) < 1e-15);
        assert!((op.exterior_mass()[i] - r.b[i]).abs() < 1e-14);
    }
}

#[test]
fn exterior_mass_converges_under_refinement() {
    let err = |n: usize| {
        let op = operator(n);
        op.grid()
            .nodes()
            .iter()
            .zip(op.exterior_mass())
            .map(|(&x, &b)| (b - exact_exterior_mass(x)).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(25), err(50), err(100));
    assert!(e2 < e1 && e3 < e2, "{e1} {e2} {e3}");
}

#[test]
fn interior_exterior_mass_halves() {
    // x = 0 sees no exterior; b_i there is pure quadrature error
    let b0 = |n: usize| operator(n).exterior_mass()[n].abs();
    assert!(b0(100) <= 0.5 * b0(50) + 1e-15, "{} {}", b0(50), b0(100));
}

#[test]
fn rhs_matches_reference_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = SystemParams::new(0.3, 0.2, 1.5, 2.5).unwrap();
    let op = operator(10);
    let r = RefOperator::new(10);
    let n = op.len();
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.5)).collect();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.5)).collect();
    let (du, dv) = model::rhs(&State::new(0.0, u.clone(), v.clone()).unwrap(), &op, &params).unwrap();
    let (mut ru, mut rv) = (vec![0.0; n], vec![0.0; n]);
    r.rhs(&params, &u, &v, &mut ru, &mut rv);
    assert!(inf_norm_diff(&du, &ru) < 1e-13);
    assert!(inf_norm_diff(&dv, &rv) < 1e-13);
}

#[test]
fn jacobian_matches_finite_differences_at_random_states() {
    let worst = suites::jacobian_check(8, 10, 2024, 1e-5).unwrap();
    assert!(worst <= 1e-5);
}

#[test]
fn adaptive_run_matches_rk4_reference() {
    let params = headline_params();
    let op = operator(100);
    let state0 = State::constant(op.len(), 1.0, 1.0);
    let cfg = SolverConfig {
        t_max: 0.5,
        ..SolverConfig::default()
    };
    let run = integrate(&state0, &op, &params, &cfg).unwrap();
    assert_eq!(run.outcome, Outcome::TimedOut);
    assert_eq!(run.final_state.t, 0.5);
    let (mut u, mut v) = (vec![1.0; op.len()], vec![1.0; op.len()]);
    RefOperator::new(100).rk4(&params, &mut u, &mut v, 1e-5, 50_000);
    let err = inf_norm_diff(&run.final_state.u, &u).max(inf_norm_diff(&run.final_state.v, &v));
    assert!(err <= 1e-6, "{err:e}");
}

#[test]
fn estimate_t_against_power_law_closed_form() {
    // absorption only: u' = -λ v^{-p}; choose v so that u' matches
    // d/dt (T - t)^α at the stopping point
    let (alpha, t_true, eps): (f64, f64, f64) = (0.2, 3.0, 1e-6);
    let remaining = eps.powf(1.0 / alpha);
    let t_stop = Time::new(t_true).add(-remaining);
    let (lambda, p): (f64, f64) = (1.0, 10.0);
    let rate = alpha * remaining.powf(alpha - 1.0);
    let v = (lambda / rate).powf(1.0 / p);
    let grid = build_grid(-1.0, 1.0, 2).unwrap();
    let op = NonlocalOperator::diffusion_free(&grid);
    let params = SystemParams::new(lambda, 1e-3, p, 2.0).unwrap();
    let state = State::new(t_stop.to_f64(), vec![eps; 5], vec![v; 5]).unwrap();
    let traj = Trajectory {
        samples: vec![Sample {
            t: t_stop,
            min_u: eps,
            argmin_u: 0,
            min_v: v,
            argmin_v: 0,
            dt: 0.0,
            psi_gap: 0.0,
        }],
        snapshots: Vec::new(),
    };
    let q = estimate_t(&traj, &state, &params, &op).unwrap();
    // linear extrapolation of a concave power law lands past T by (1/α - 1)(T - t)
    let bias = (1.0 / alpha - 1.0) * remaining;
    let got = q.as_time().since(Time::new(t_true));
    assert!((got - bias).abs() <= 1e-9 * bias, "{got:e} vs {bias:e}");
    assert!(got.abs() < 5.0 * remaining);
}

#[test]
fn noisy_power_law_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t_true = 2.0;
    let mut samples = Vec::new();
    let mut prev = Time::ZERO;
    for k in 0..400 {
        let r = 10f64.powf(-0.5 - 30.0 * k as f64 / 399.0);
        let t = Time::new(t_true).add(-r);
        let m = r.powf(0.2) * (1.0 + rng.gen_range(-0.01..0.01));
        samples.push(Sample {
            t,
            min_u: m,
            argmin_u: 0,
            min_v: m,
            argmin_v: 0,
            dt: t.since(prev),
            psi_gap: 0.0,
        });
        prev = t;
    }
    let traj = Trajectory {
        samples,
        snapshots: Vec::new(),
    };
    let q = QuenchTime {
        t_final: Time::new(t_true),
        correction: 0.0,
        degenerate: false,
    };
    let fit = fit_rate(&traj, &q, Component::U, (1e-5, 1e-2)).unwrap();
    assert!((fit.exponent - 0.2).abs() < 0.01, "{}", fit.exponent);
}

#[test]
fn least_squares_on_exact_line() {
    let xs: Vec<f64> = (0..10).map(|k| k as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
    let (slope, intercept, res) = least_squares(&xs, &ys);
    assert!((slope + 0.5).abs() < 1e-14 && (intercept - 3.0).abs() < 1e-13 && res < 1e-13);
}

#[test]
fn zero_diffusion_relation_is_constant() {
    // u' = -λ v^{-p}, v' = -μ u^{-q} with p = q = 2, λ = μ = 1 and u0 = v0
    // keeps u = v, so μ u^{-1} - λ v^{-1} stays zero and the ratio stays 1
    let grid = build_grid(-1.0, 1.0, 3).unwrap();
    let op = NonlocalOperator::diffusion_free(&grid);
    let params = SystemParams::new(1.0, 1.0, 2.0, 2.0).unwrap();
    let state0 = State::constant(op.len(), 1.0, 1.0);
    let run = integrate(&state0, &op, &params, &SolverConfig::default()).unwrap();
    let t = run.outcome.quench_time().expect("absorption-only system quenches");
    // u^3 = 1 - 3t for u = v; the time error of the second-order stepper
    // scales like rtol^(2/3)
    assert!((t.value() - 1.0 / 3.0).abs() < 1e-5, "{}", t.value());
    let rel = check_component_relation(&run.trajectory, &params, 1e-6).unwrap();
    assert!(!rel.raw.is_empty());
    for r in rel.raw.iter().chain(&rel.normalized) {
        assert!((r - 1.0).abs() < 1e-6, "{r}");
    }
    assert!(rel.bounded);
}

#[test]
fn quench_set_of_a_dip_at_one() {
    let op = operator(50);
    let grid = op.grid().clone();
    let params = SystemParams::new(0.3, 0.3, 2.0, 2.0).unwrap();
    let dip: Vec<f64> = grid.nodes().iter().map(|&x| (0.5 + (x - 1.0).abs()).min(1.0)).collect();
    let state0 = State::new(0.0, dip.clone(), dip).unwrap();
    let run = integrate(&state0, &op, &params, &SolverConfig::default()).unwrap();
    assert!(run.outcome.is_quenched());
    let set = detect_quench_set(&run.trajectory, &grid, 0.05, 1e-6);
    assert_eq!(set.len(), 1, "{set:?}");
    assert!((set[0] - 1.0).abs() <= grid.spacing(), "{set:?}");
    // the final state is the last full profile
    let (_, k) = model::argmin(&run.final_state.u);
    assert!((grid.node(k) - set[0]).abs() <= grid.spacing());
}

#[test]
fn newton_agrees_with_evolution_limit() {
    let op = operator(100);
    let params = SystemParams::new(0.001, 0.001, 2.0, 3.0).unwrap();
    let c = classify_parameter_point(&op, 2.0, 3.0, 0.001, 0.001, &SolverConfig::default()).unwrap();
    assert_eq!(c.class, PointClass::Global);
    let ones = vec![1.0; op.len()];
    let pair = solve_stationary_newton(&op, &params, &ones, &ones, &NewtonConfig::default()).unwrap();
    let diff = inf_norm_diff(&pair.w, &c.final_state.u).max(inf_norm_diff(&pair.z, &c.final_state.v));
    assert!(diff <= 1e-8, "{diff:e}");
    assert!(pair.margin.0 > 0.0 && pair.margin.1 > 0.0);
    assert!(pair.w.iter().chain(&pair.z).all(|&x| x <= 1.0));
}

#[test]
fn evolution_approaches_stationary_pair_from_above() {
    let op = operator(50);
    let params = SystemParams::new(0.001, 0.001, 2.0, 3.0).unwrap();
    let ones = vec![1.0; op.len()];
    let pair = solve_stationary_newton(&op, &params, &ones, &ones, &NewtonConfig::default()).unwrap();
    let cfg = solver_with_snapshots(&[0.5, 1.0, 2.0, 4.0, 8.0, 16.0]);
    let run = integrate(&State::constant(op.len(), 1.0, 1.0), &op, &params, &cfg).unwrap();
    let mut prev: Option<&Snapshot> = None;
    for s in &run.trajectory.snapshots {
        for i in 0..op.len() {
            assert!(s.u[i] >= pair.w[i] - 1e-9 && s.v[i] >= pair.z[i] - 1e-9);
            if let Some(p) = prev {
                assert!(s.u[i] <= p.u[i] + 1e-9 && s.v[i] <= p.v[i] + 1e-9);
            }
        }
        prev = Some(s);
    }
    assert!(run.trajectory.snapshots.len() >= 5);
}

#[test]
fn stationary_pairs_are_ordered_in_the_rates() {
    let op = operator(50);
    let ones = vec![1.0; op.len()];
    let pairs: Vec<_> = [0.001, 0.002]
        .iter()
        .map(|&r| {
            let params = SystemParams::new(r, r, 2.0, 3.0).unwrap();
            let pair = solve_stationary_newton(&op, &params, &ones, &ones, &NewtonConfig::default()).unwrap();
            (params, pair)
        })
        .collect();
    let verdict = check_stationary_monotonicity(&pairs);
    assert!(verdict.holds(), "{verdict:?}");
    assert!(pairs[0].1.w.iter().zip(&pairs[1].1.w).all(|(a, b)| a >= b));
}

#[test]
fn region_cells_match_single_point_runs() {
    let op = operator(50);
    let solver = SolverConfig::default();
    let cfg = RegionConfig {
        lambda_range: (0.001, 0.1),
        mu_range: (0.001, 0.002),
        resolution: (2, 2),
        spacing: Spacing::Geometric,
        bisect_steps: 0,
    };
    let map = map_region(&op, 2.0, 2.0, &cfg, &solver).unwrap();
    assert_eq!(map.lambdas, vec![0.001, 0.1]);
    for cell in &map.cells {
        let single = classify_parameter_point(&op, 2.0, 2.0, cell.lambda, cell.mu, &solver).unwrap();
        let expected = match single.class {
            PointClass::Global => CellClass::Global,
            PointClass::AllQuench => CellClass::AllQuench,
        };
        assert_eq!(cell.class, expected, "{cell:?}");
        assert_eq!(cell.t_est, single.t_est);
    }
    assert_eq!(map.cell(0, 0).class, CellClass::Global);
    assert_eq!(map.cell(1, 0).class, CellClass::AllQuench);
}
