//! One component quenches while the other stays away from zero.

use quenchlab::analysis::{analyze, AnalysisConfig};
use quenchlab::*;

fn main() -> Result<()> {
    let grid = build_grid(-2.0, 2.0, 100)?;
    let op = build_operator(&grid, &Kernel::epanechnikov())?;
    for (p, q) in [(2.0, 0.7), (0.2, 3.0)] {
        let params = SystemParams::new(0.1, 0.1, p, q)?;
        let state0 = State::constant(op.len(), 1.0, 1.0);
        let run = integrate(&state0, &op, &params, &SolverConfig::default())?;
        let r = analyze(&run, &grid, &params, &state0.u, &state0.v, &AnalysisConfig::default());
        println!(
            "p={p} q={q}: {} T={:.5} floor_u={:.3e} floor_v={:.3e} alpha_u={:?} alpha_v={:?}",
            r.regime_observed.as_str(),
            r.t_est.unwrap_or(f64::NAN),
            r.floor_u,
            r.floor_v,
            r.alpha_u,
            r.alpha_v
        );
    }
    Ok(())
}
