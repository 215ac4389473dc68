//! Small absorption rates: the evolution from u = v = 1 settles on the
//! stationary pair that Newton's method finds directly.

use quenchlab::stationary::{classify_parameter_point, solve_stationary_newton, NewtonConfig, PointClass};
use quenchlab::*;

fn main() -> Result<()> {
    let op = build_operator(&build_grid(-2.0, 2.0, 100)?, &Kernel::epanechnikov())?;
    let (lambda, mu, p, q) = (0.001, 0.001, 2.0, 3.0);
    let params = SystemParams::new(lambda, mu, p, q)?;

    let c = classify_parameter_point(&op, p, q, lambda, mu, &SolverConfig::default())?;
    assert_eq!(c.class, PointClass::Global);

    let ones = vec![1.0; op.len()];
    let pair = solve_stationary_newton(&op, &params, &ones, &ones, &NewtonConfig::default())
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    let diff = pair
        .w
        .iter()
        .zip(&c.final_state.u)
        .chain(pair.z.iter().zip(&c.final_state.v))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    println!("newton iterations   {}", pair.iterations);
    println!("residual            {:.2e}", pair.residual);
    println!("min w - mu^(1/q)    {:.4}", pair.margin.0);
    println!("min z - lambda^(1/p) {:.4}", pair.margin.1);
    println!("|newton - evolution| {diff:.2e}");
    Ok(())
}
