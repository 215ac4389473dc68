//! Sweeps the data family (delta u0, (1 - delta) v0) for p = q = 0.5 and
//! brackets the switch between u-first and v-first quenching.

use quenchlab::shooting::{run_shooting, ShootingConfig};
use quenchlab::*;

fn main() -> Result<()> {
    let op = build_operator(&build_grid(-2.0, 2.0, 25)?, &Kernel::epanechnikov())?;
    let params = SystemParams::new(1.0, 1.0, 0.5, 0.5)?;
    let cfg = ShootingConfig {
        delta_samples: 15,
        bisect_steps: 12,
        ..ShootingConfig::constant(params, op.len(), 0.2, 0.2)
    };
    let result = run_shooting(&cfg, &op, &SolverConfig::default())?;
    for r in &result.sweep {
        println!(
            "delta {:.4}  {:<20} T {:.6}  floors {:.2e} {:.2e}",
            r.delta,
            r.regime.as_str(),
            r.t_delta,
            r.floor_u,
            r.floor_v
        );
    }
    println!("bracket {:?}, width {:.3e}", result.bracket, result.bracket_width());
    Ok(())
}
