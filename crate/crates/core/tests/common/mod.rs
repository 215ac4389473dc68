//! Independent reference implementations shared by the integration tests.
//! Apart from `suites`, nothing here calls the crate's right-hand side or
//! integrator.

#![allow(dead_code)]

pub mod suites;

use quenchlab::{build_grid, build_operator, Kernel, NonlocalOperator, SolverConfig, SystemParams};

pub const HEADLINE_T: f64 = 9.0619;

pub fn headline_params() -> SystemParams {
    SystemParams::new(0.1, 0.001, 2.0, 3.0).unwrap()
}

pub fn operator(n_half: usize) -> NonlocalOperator {
    build_operator(&build_grid(-2.0, 2.0, n_half).unwrap(), &Kernel::epanechnikov()).unwrap()
}

pub fn epanechnikov(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.75 * (1.0 - x * x)
    } else {
        0.0
    }
}

/// Sparse rows of `W` and the exterior masses on `[-2, 2]` with `2N+1`
/// nodes, built straight from the kernel formula.
pub struct RefOperator {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub b: Vec<f64>,
}

impl RefOperator {
    pub fn new(n_half: usize) -> Self {
        let n = 2 * n_half + 1;
        let h = 4.0 / (2 * n_half) as f64;
        let x: Vec<f64> = (0..n).map(|i| -2.0 + h * i as f64).collect();
        let mut rows = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for i in 0..n {
            let row: Vec<(usize, f64)> = (0..n)
                .map(|j| (j, h * epanechnikov(x[i] - x[j])))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            b.push(1.0 - row.iter().map(|(_, w)| w).sum::<f64>());
            rows.push(row);
        }
        Self { rows, b }
    }

    pub fn rhs(&self, p: &SystemParams, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) {
        for i in 0..u.len() {
            let (mut wu, mut wv) = (self.b[i], self.b[i]);
            for &(j, w) in &self.rows[i] {
                wu += w * u[j];
                wv += w * v[j];
            }
            du[i] = wu - u[i] - p.lambda * v[i].powf(-p.p);
            dv[i] = wv - v[i] - p.mu * u[i].powf(-p.q);
        }
    }

    /// Classical fixed-step RK4 from `(u, v)` over `steps` steps of `dt`.
    pub fn rk4(&self, p: &SystemParams, u: &mut [f64], v: &mut [f64], dt: f64, steps: usize) {
        let n = u.len();
        let z = || vec![0.0; n];
        let (mut k1u, mut k1v, mut k2u, mut k2v) = (z(), z(), z(), z());
        let (mut k3u, mut k3v, mut k4u, mut k4v) = (z(), z(), z(), z());
        let (mut tu, mut tv) = (z(), z());
        for _ in 0..steps {
            self.rhs(p, u, v, &mut k1u, &mut k1v);
            for i in 0..n {
                tu[i] = u[i] + 0.5 * dt * k1u[i];
                tv[i] = v[i] + 0.5 * dt * k1v[i];
            }
            self.rhs(p, &tu, &tv, &mut k2u, &mut k2v);
            for i in 0..n {
                tu[i] = u[i] + 0.5 * dt * k2u[i];
                tv[i] = v[i] + 0.5 * dt * k2v[i];
            }
            self.rhs(p, &tu, &tv, &mut k3u, &mut k3v);
            for i in 0..n {
                tu[i] = u[i] + dt * k3u[i];
                tv[i] = v[i] + dt * k3v[i];
            }
            self.rhs(p, &tu, &tv, &mut k4u, &mut k4v);
            for i in 0..n {
                u[i] += dt / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i]);
                v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
            }
        }
    }
}

/// Central-difference Jacobian of the reference right-hand side, in the
/// block ordering `[u; v]`, column by column.
pub fn fd_jacobian(op: &RefOperator, p: &SystemParams, u: &[f64], v: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut cols = Vec::with_capacity(2 * n);
    let (mut dup, mut dvp, mut dum, mut dvm) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for c in 0..2 * n {
        let (mut up, mut vp, mut um, mut vm) = (u.to_vec(), v.to_vec(), u.to_vec(), v.to_vec());
        let (xp, xm) = if c < n {
            (&mut up[c], &mut um[c])
        } else {
            (&mut vp[c - n], &mut vm[c - n])
        };
        let step = 1e-7 * xp.abs().max(1e-3);
        *xp += step;
        *xm -= step;
        op.rhs(p, &up, &vp, &mut dup, &mut dvp);
        op.rhs(p, &um, &vm, &mut dum, &mut dvm);
        let col: Vec<f64> = dup
            .iter()
            .chain(&dvp)
            .zip(dum.iter().chain(&dvm))
            .map(|(a, b)| (a - b) / (2.0 * step))
            .collect();
        cols.push(col);
    }
    cols
}

/// Exterior mass `1 - ∫_{-2}^{2} J(x - y) dy` in closed form.
pub fn exact_exterior_mass(x: f64) -> f64 {
    // antiderivative of J on [-1, 1]
    let cdf = |s: f64| {
        let s = s.clamp(-1.0, 1.0);
        0.75 * (s - s * s * s / 3.0) + 0.5
    };
    1.0 - (cdf(x + 2.0) - cdf(x - 2.0))
}

pub fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn solver_with_snapshots(times: &[f64]) -> SolverConfig {
    SolverConfig {
        snapshot_times: times.to_vec(),
        ..SolverConfig::default()
    }
}
