//! Stationary solutions and the parameter region where they exist.
//!
//! Stationary pairs solve `W w + b - w = λ z^{-p}`, `W z + b - z = μ w^{-q}`.
//! Newton iteration computes them; evolution from the constant state `1`
//! decides, for a parameter point, whether a global solution exists at all.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::integrator::{integrate, Outcome, SolverConfig};
use crate::linalg::BandMatrix;
use crate::model::{neg_pow, State, SystemParams};
use crate::operator::NonlocalOperator;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryPair {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// `min_i w_i - μ^{1/q}` and `min_i z_i - λ^{1/p}`.
    pub margin: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("no stationary solution: {reason}")]
pub struct NoStationary {
    pub reason: String,
}

fn no_stationary(reason: impl Into<String>) -> NoStationary {
    NoStationary {
        reason: reason.into(),
    }
}

/// Residual of the stationary equations, interleaved `[F_w0, F_z0, ...]`.
pub fn stationary_residual(
    op: &NonlocalOperator,
    params: &SystemParams,
    w: &[f64],
    z: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; 2 * w.len()];
    for i in 0..w.len() {
        out[2 * i] = op.average_at(i, w) - w[i] - params.lambda * neg_pow(z[i], params.p);
        out[2 * i + 1] = op.average_at(i, z) - z[i] - params.mu * neg_pow(w[i], params.q);
    }
    out
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn assemble_jacobian(op: &NonlocalOperator, params: &SystemParams, w: &[f64], z: &[f64]) -> BandMatrix {
    let n = w.len();
    let bw = op.bandwidth();
    let k = 2 * bw + 1;
    let mut jac = BandMatrix::zeros(2 * n, k, k);
    for i in 0..n {
        let row = op.row(i);
        for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
            let d = if i == j { 1.0 } else { 0.0 };
            jac.set(2 * i, 2 * j, row[j] - d);
            jac.set(2 * i + 1, 2 * j + 1, row[j] - d);
        }
        jac.set(2 * i, 2 * i + 1, params.lambda * params.p * neg_pow(z[i], params.p + 1.0));
        jac.set(2 * i + 1, 2 * i, params.mu * params.q * neg_pow(w[i], params.q + 1.0));
    }
    jac
}

/// Damped Newton iteration from `(w0, z0)`. A converged iterate is accepted
/// only if it satisfies `μ^{1/q} < w ≤ 1` and `λ^{1/p} < z ≤ 1`.
pub fn solve_stationary_newton(
    op: &NonlocalOperator,
    params: &SystemParams,
    w0: &[f64],
    z0: &[f64],
    cfg: &NewtonConfig,
) -> std::result::Result<StationaryPair, NoStationary> {
    let n = op.len();
    if w0.len() != n || z0.len() != n {
        return Err(no_stationary("initial guess has the wrong length"));
    }
    if !w0.iter().chain(z0).all(|&x| x > 0.0 && x.is_finite()) {
        return Err(no_stationary("initial guess must be positive"));
    }
    let (mut w, mut z) = (w0.to_vec(), z0.to_vec());
    let mut f = stationary_residual(op, params, &w, &z);
    let mut res = norm_inf(&f);
    let mut iterations = 0;
    while res > cfg.tol {
        if iterations == cfg.max_iter {
            return Err(no_stationary(format!(
                "no convergence in {} iterations (residual {res:.3e})",
                cfg.max_iter
            )));
        }
        iterations += 1;
        let lu = assemble_jacobian(op, params, &w, &z)
            .factor()
            .map_err(|e| no_stationary(e.to_string()))?;
        let mut step: Vec<f64> = f.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut step);
        let mut alpha = 1.0;
        loop {
            let wt: Vec<f64> = (0..n).map(|i| w[i] + alpha * step[2 * i]).collect();
            let zt: Vec<f64> = (0..n).map(|i| z[i] + alpha * step[2 * i + 1]).collect();
            if wt.iter().chain(&zt).all(|&x| x > 0.0) {
                let ft = stationary_residual(op, params, &wt, &zt);
                let rt = norm_inf(&ft);
                if rt.is_finite() && (rt <= (1.0 - 1e-4 * alpha) * res || rt <= cfg.tol) {
                    (w, z, f, res) = (wt, zt, ft, rt);
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return Err(no_stationary(format!(
                    "line search stalled at residual {res:.3e}"
                )));
            }
        }
    }
    let w_floor = params.mu.powf(1.0 / params.q);
    let z_floor = params.lambda.powf(1.0 / params.p);
    let slack = 1e-12;
    let ok = w.iter().all(|&x| x > w_floor && x <= 1.0 + slack)
        && z.iter().all(|&x| x > z_floor && x <= 1.0 + slack);
    if !ok {
        return Err(no_stationary(
            "limit violates the bounds mu^(1/q) < w <= 1, lambda^(1/p) < z <= 1",
        ));
    }
    let margin = (
        w.iter().fold(f64::INFINITY, |m, &x| m.min(x)) - w_floor,
        z.iter().fold(f64::INFINITY, |m, &x| m.min(x)) - z_floor,
    );
    Ok(StationaryPair {
        w,
        z,
        residual: res,
        iterations,
        margin,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Global,
    AllQuench,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub class: PointClass,
    pub t_est: Option<f64>,
    pub t_max_used: f64,
    /// Final state of the evolution; the stationary limit when `Global`.
    pub final_state: State,
}

/// Evolves from `u = v = 1`: a steady limit means the point is `Global`,
/// quenching means every solution quenches. A timed-out run is retried once
/// with a four times longer horizon.
pub fn classify_parameter_point(
    op: &NonlocalOperator,
    p: f64,
    q: f64,
    lambda: f64,
    mu: f64,
    solver: &SolverConfig,
) -> Result<Classification> {
    let params = SystemParams::new(lambda, mu, p, q)?;
    let state0 = State::constant(op.len(), 1.0, 1.0);
    let mut cfg = solver.clone();
    for attempt in 0..2 {
        if attempt == 1 {
            cfg.t_max *= 4.0;
        }
        let run = integrate(&state0, op, &params, &cfg)?;
        let class = match run.outcome {
            Outcome::Steady { .. } => PointClass::Global,
            Outcome::Quenched { .. } => PointClass::AllQuench,
            Outcome::TimedOut => continue,
        };
        return Ok(Classification {
            class,
            t_est: run.outcome.quench_time().map(|t| t.value()),
            t_max_used: cfg.t_max,
            final_state: run.final_state,
        });
    }
    Err(Error::Unresolved { lambda, mu })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Geometric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub lambda_range: (f64, f64),
    pub mu_range: (f64, f64),
    pub resolution: (usize, usize),
    pub spacing: Spacing,
    pub bisect_steps: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            lambda_range: (0.0, 0.5),
            mu_range: (0.0, 0.5),
            resolution: (8, 8),
            spacing: Spacing::Linear,
            bisect_steps: 6,
        }
    }
}

impl RegionConfig {
    /// Sample values over `(lo, hi]`: `hi k / n` for linear spacing, halving
    /// from `hi` for geometric spacing (where `lo` is ignored unless
    /// positive, in which case the ratio is chosen to reach it).
    pub fn axis(range: (f64, f64), n: usize, spacing: Spacing) -> Vec<f64> {
        let (lo, hi) = range;
        match spacing {
            Spacing::Linear => (1..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect(),
            Spacing::Geometric => {
                let ratio = if lo > 0.0 && n > 1 {
                    (hi / lo).powf(1.0 / (n - 1) as f64)
                } else {
                    2.0
                };
                (0..n).map(|k| hi / ratio.powi((n - 1 - k) as i32)).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_range = |r: (f64, f64)| r.0 >= 0.0 && r.1 > r.0 && r.1.is_finite();
        if !ok_range(self.lambda_range) || !ok_range(self.mu_range) {
            return Err(Error::InvalidParams("region ranges must satisfy 0 <= lo < hi".into()));
        }
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            return Err(Error::InvalidParams("region resolution must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Global,
    AllQuench,
    Unresolved,
}

impl CellClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellClass::Global => "global",
            CellClass::AllQuench => "all_quench",
            CellClass::Unresolved => "unresolved",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionCell {
    pub lambda: f64,
    pub mu: f64,
    pub class: CellClass,
    pub t_est: Option<f64>,
}

/// Bracket `[mu_star_lo, mu_star_hi]` for `μ*_λ`, the largest `μ` with a
/// global solution at this `λ`. `mu_star_hi` is infinite when the whole
/// column is global.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryEstimate {
    pub lambda: f64,
    pub mu_star_lo: f64,
    pub mu_star_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionMap {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    /// Row-major by `λ`: cell `(i, j)` is at `i * mus.len() + j`.
    pub cells: Vec<RegionCell>,
    pub boundary: Vec<BoundaryEstimate>,
}

impl RegionMap {
    pub fn cell(&self, i: usize, j: usize) -> &RegionCell {
        &self.cells[i * self.mus.len() + j]
    }

    /// Pairs of cells `(global, quenching)` with the quenching cell below and
    /// to the left of the global one.
    pub fn staircase_violations(&self) -> Vec<((usize, usize), (usize, usize))> {
        let (nl, nm) = (self.lambdas.len(), self.mus.len());
        let mut out = Vec::new();
        for i0 in 0..nl {
            for j0 in 0..nm {
                if self.cell(i0, j0).class != CellClass::Global {
                    continue;
                }
                for i in 0..=i0 {
                    for j in 0..=j0 {
                        if self.cell(i, j).class == CellClass::AllQuench {
                            out.push(((i0, j0), (i, j)));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn global_outside_unit_square(&self) -> Vec<RegionCell> {
        self.cells
            .iter()
            .filter(|c| c.class == CellClass::Global && (c.lambda >= 1.0 || c.mu >= 1.0))
            .copied()
            .collect()
    }

    pub fn unresolved(&self) -> usize {
        self.cells.iter().filter(|c| c.class == CellClass::Unresolved).count()
    }
}

fn classify_cell(
    op: &NonlocalOperator,
    p: f64,
    q: f64,
    lambda: f64,
    mu: f64,
    solver: &SolverConfig,
) -> Result<RegionCell> {
    let (class, t_est) = match classify_parameter_point(op, p, q, lambda, mu, solver) {
        Ok(c) => (
            match c.class {
                PointClass::Global => CellClass::Global,
                PointClass::AllQuench => CellClass::AllQuench,
            },
            c.t_est,
        ),
        Err(Error::Unresolved { .. }) => (CellClass::Unresolved, None),
        Err(e) => return Err(e),
    };
    Ok(RegionCell {
        lambda,
        mu,
        class,
        t_est,
    })
}

/// Classifies every grid point and brackets `μ*_λ` along each column by
/// bisection between its last global and first quenching sample.
pub fn map_region(
    op: &NonlocalOperator,
    p: f64,
    q: f64,
    cfg: &RegionConfig,
    solver: &SolverConfig,
) -> Result<RegionMap> {
    cfg.validate()?;
    let lambdas = RegionConfig::axis(cfg.lambda_range, cfg.resolution.0, cfg.spacing);
    let mus = RegionConfig::axis(cfg.mu_range, cfg.resolution.1, cfg.spacing);
    let points: Vec<(f64, f64)> = lambdas
        .iter()
        .flat_map(|&l| mus.iter().map(move |&m| (l, m)))
        .collect();
    let cells = points
        .par_iter()
        .map(|&(l, m)| classify_cell(op, p, q, l, m, solver))
        .collect::<Result<Vec<_>>>()?;

    let boundary = lambdas
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let column = &cells[i * mus.len()..(i + 1) * mus.len()];
            let last_global = column.iter().rposition(|c| c.class == CellClass::Global);
            let (mut lo, mut hi) = match last_global {
                Some(j) if j + 1 == mus.len() => {
                    return Ok(BoundaryEstimate {
                        lambda,
                        mu_star_lo: mus[j],
                        mu_star_hi: f64::INFINITY,
                    })
                }
                Some(j) => (mus[j], mus[j + 1]),
                None => (0.0, mus[0]),
            };
            if column.iter().any(|c| c.class == CellClass::Unresolved) {
                return Ok(BoundaryEstimate {
                    lambda,
                    mu_star_lo: lo,
                    mu_star_hi: hi,
                });
            }
            for _ in 0..cfg.bisect_steps {
                let mid = 0.5 * (lo + hi);
                match classify_cell(op, p, q, lambda, mid, solver)?.class {
                    CellClass::Global => lo = mid,
                    CellClass::AllQuench => hi = mid,
                    CellClass::Unresolved => break,
                }
            }
            Ok(BoundaryEstimate {
                lambda,
                mu_star_lo: lo,
                mu_star_hi: hi,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RegionMap {
        lambdas,
        mus,
        cells,
        boundary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityVerdict {
    pub comparisons: usize,
    /// `(smaller index, larger index, worst violation)`.
    pub violations: Vec<(usize, usize, f64)>,
}

impl MonotonicityVerdict {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For every pair with `λ₁ ≤ λ₂` and `μ₁ ≤ μ₂` (same `p, q`), checks
/// `w₁ ≥ w₂` and `z₁ ≥ z₂` up to `1e-10`.
pub fn check_stationary_monotonicity(pairs: &[(SystemParams, StationaryPair)]) -> MonotonicityVerdict {
    let mut comparisons = 0;
    let mut violations = Vec::new();
    for (a, (pa, sa)) in pairs.iter().enumerate() {
        for (b, (pb, sb)) in pairs.iter().enumerate() {
            if a == b || pa.p != pb.p || pa.q != pb.q {
                continue;
            }
            if !(pa.lambda <= pb.lambda && pa.mu <= pb.mu) {
                continue;
            }
            comparisons += 1;
            let worst = sa
                .w
                .iter()
                .zip(&sb.w)
                .chain(sa.z.iter().zip(&sb.z))
                .map(|(x1, x2)| x2 - x1)
                .fold(f64::NEG_INFINITY, f64::max);
            if worst > 1e-10 {
                violations.push((a, b, worst));
            }
        }
    }
    MonotonicityVerdict {
        comparisons,
        violations,
    }
}
