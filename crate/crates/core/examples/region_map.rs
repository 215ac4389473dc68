//! Coarse map of the parameter region with global solutions for p = q = 2.

use quenchlab::stationary::{map_region, CellClass, RegionConfig, Spacing};
use quenchlab::*;

fn main() -> Result<()> {
    let op = build_operator(&build_grid(-2.0, 2.0, 40)?, &Kernel::epanechnikov())?;
    let cfg = RegionConfig {
        lambda_range: (0.001, 0.5),
        mu_range: (0.001, 0.5),
        resolution: (6, 6),
        spacing: Spacing::Geometric,
        bisect_steps: 3,
    };
    let map = map_region(&op, 2.0, 2.0, &cfg, &SolverConfig::default())?;

    // rows: mu from top to bottom, columns: lambda
    for j in (0..map.mus.len()).rev() {
        let row: String = (0..map.lambdas.len())
            .map(|i| match map.cell(i, j).class {
                CellClass::Global => 'G',
                CellClass::AllQuench => '.',
                CellClass::Unresolved => '?',
            })
            .collect();
        println!("mu={:<10.6} {row}", map.mus[j]);
    }
    for b in &map.boundary {
        println!("lambda={:.6}: mu* in [{:.6}, {:.6}]", b.lambda, b.mu_star_lo, b.mu_star_hi);
    }
    println!("staircase violations: {}", map.staircase_violations().len());
    Ok(())
}
