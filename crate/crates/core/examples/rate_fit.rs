//! Fits quenching exponents over several windows of the same trajectory,
//! after a round trip through trajectory.csv.

use quenchlab::analysis::{fit_rate, theoretical_rates};
use quenchlab::io::{read_trajectory_csv, write_trajectory_csv};
use quenchlab::*;

fn main() -> Result<()> {
    let grid = build_grid(-2.0, 2.0, 60)?;
    let op = build_operator(&grid, &Kernel::epanechnikov())?;
    let params = SystemParams::new(0.1, 0.001, 2.0, 3.0)?;
    let run = integrate(&State::constant(op.len(), 1.0, 1.0), &op, &params, &SolverConfig::default())?;
    let t = run.outcome.quench_time().ok_or(Error::NumericalFailure("no quenching".into()))?;

    let path = std::env::temp_dir().join("quenchlab_rate_fit.csv");
    write_trajectory_csv(&path, &run.trajectory, &grid)?;
    let traj = read_trajectory_csv(&path, &grid)?;

    let (law_u, law_v) = theoretical_rates(&params);
    println!("theory: u {:?}, v {:?}", law_u.power(), law_v.power());
    for window in [(1e-6, 1e-3), (1e-5, 1e-2), (1e-4, 1e-1)] {
        let u = fit_rate(&traj, &t, Component::U, window)?;
        let v = fit_rate(&traj, &t, Component::V, window)?;
        println!(
            "window {window:?}: alpha_u {:.4} ({} pts), alpha_v {:.4} ({} pts)",
            u.exponent, u.samples, v.exponent, v.samples
        );
    }
    Ok(())
}
