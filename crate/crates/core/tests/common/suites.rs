//! Checks shared by the property tests and the acceptance gate. These drive
//! the crate and return a description of the first violation.

use quenchlab::model::jacobian;
use quenchlab::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fd_jacobian, headline_params, operator, solver_with_snapshots, RefOperator};

/// Both runs of a pair land on these times.
pub const COMMON_TIMES: [f64; 8] = [0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 1.5];

/// Runs `pairs` random ordered initial-data pairs under the headline
/// parameters and checks the order at every common snapshot, to within
/// `10 rtol` of the local scale. Returns the number of compared snapshots.
pub fn comparison_suite(n_half: usize, pairs: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = operator(n_half);
    let n = op.len();
    let params = headline_params();
    let cfg = SolverConfig {
        t_max: 1.5,
        ..solver_with_snapshots(&COMMON_TIMES)
    };
    let mut compared = 0;
    for pair in 0..pairs {
        let lo_u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.4..1.0)).collect();
        let lo_v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.4..1.0)).collect();
        let hi_u: Vec<f64> = lo_u.iter().map(|x| x + rng.gen_range(0.0..0.5)).collect();
        let hi_v: Vec<f64> = lo_v.iter().map(|x| x + rng.gen_range(0.0..0.5)).collect();
        let run = |u, v| {
            let state = State::new(0.0, u, v).map_err(|e| e.to_string())?;
            integrate(&state, &op, &params, &cfg).map_err(|e| format!("pair {pair}: {e}"))
        };
        let lo = run(lo_u, lo_v)?;
        let hi = run(hi_u, hi_v)?;
        let mut common = 0;
        for a in &hi.trajectory.snapshots {
            let Some(b) = lo.trajectory.snapshots.iter().find(|b| b.t == a.t) else {
                continue;
            };
            common += 1;
            let scale = a.u.iter().chain(&a.v).fold(0.0f64, |m, x| m.max(x.abs()));
            let slack = 10.0 * cfg.rtol * scale;
            for i in 0..n {
                if a.u[i] < b.u[i] - slack || a.v[i] < b.v[i] - slack {
                    return Err(format!("pair {pair}: order lost at t={} node {i}", a.t));
                }
            }
        }
        if common < 4 {
            return Err(format!("pair {pair}: only {common} common samples"));
        }
        compared += common;
    }
    Ok(compared)
}

/// Evolves the headline system from `u = v = 1` and checks that minima,
/// maxima and every nodal value are non-increasing in time. Returns the
/// number of snapshots checked.
pub fn monotone_from_ones(n_half: usize) -> Result<usize, String> {
    let op = operator(n_half);
    let params = headline_params();
    let times: Vec<f64> = (1..=17).map(|k| 0.5 * k as f64).collect();
    let run = integrate(
        &State::constant(op.len(), 1.0, 1.0),
        &op,
        &params,
        &solver_with_snapshots(&times),
    )
    .map_err(|e| e.to_string())?;
    if !run.outcome.is_quenched() {
        return Err(format!("run ended {}", run.outcome.label()));
    }
    let slack = 1e-9;
    for w in run.trajectory.samples.windows(2) {
        if w[1].min_u > w[0].min_u * (1.0 + slack) || w[1].min_v > w[0].min_v * (1.0 + slack) {
            return Err(format!("minimum increased at t={}", w[1].t));
        }
    }
    let max = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for w in run.trajectory.snapshots.windows(2) {
        if max(&w[1].u) > max(&w[0].u) + slack || max(&w[1].v) > max(&w[0].v) + slack {
            return Err(format!("maximum increased at t={}", w[1].t));
        }
        for i in 0..op.len() {
            if w[1].u[i] > w[0].u[i] + slack || w[1].v[i] > w[0].v[i] + slack {
                return Err(format!("node {i} increased at t={}", w[1].t));
            }
        }
    }
    if run.trajectory.snapshots.len() < 16 {
        return Err(format!("only {} snapshots", run.trajectory.snapshots.len()));
    }
    Ok(run.trajectory.snapshots.len())
}

/// Compares the analytic Jacobian with central differences of the reference
/// right-hand side at `trials` random positive states. Returns the worst
/// relative discrepancy.
pub fn jacobian_check(n_half: usize, trials: usize, seed: u64, rel: f64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = operator(n_half);
    let r = RefOperator::new(n_half);
    let n = op.len();
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let params = SystemParams::new(
            rng.gen_range(0.01..1.0),
            rng.gen_range(0.01..1.0),
            rng.gen_range(0.3..3.0),
            rng.gen_range(0.3..3.0),
        )
        .unwrap();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.5)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.5)).collect();
        let state = State::new(0.0, u.clone(), v.clone()).unwrap();
        let jac = jacobian(&state, &op, &params).map_err(|e| e.to_string())?;
        let fd = fd_jacobian(&r, &params, &u, &v);
        for (c, col) in fd.iter().enumerate() {
            for (row, &f) in col.iter().enumerate() {
                let a = jac.entry(row, c);
                let scale = a.abs().max(f.abs()).max(1e-2);
                let err = (a - f).abs() / scale;
                worst = worst.max(err);
                if err > rel {
                    return Err(format!("trial {trial} entry ({row},{c}): {a} vs {f}"));
                }
            }
        }
    }
    Ok(worst)
}
