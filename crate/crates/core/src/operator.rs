//! Discrete nonlocal diffusion: rectangle-rule weights `W[i][j] = h J(x_i - x_j)`
//! on the grid plus the exterior mass `b_i = 1 - sum_j W[i][j]` through which
//! the Dirichlet datum `1` outside the domain enters.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::Kernel;

/// Exterior masses below `-EXTERIOR_MASS_TOLERANCE` are rejected.
pub const EXTERIOR_MASS_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct NonlocalOperator {
    grid: Grid,
    weights: Vec<f64>,
    exterior: Vec<f64>,
    bandwidth: usize,
}

impl NonlocalOperator {
    pub fn new(grid: &Grid, kernel: &Kernel) -> Result<Self> {
        let n = grid.len();
        let h = grid.spacing();
        let x = grid.nodes();
        let mut weights = vec![0.0; n * n];
        let mut bandwidth = 0;
        for i in 0..n {
            for j in 0..n {
                let w = h * kernel.eval(x[i] - x[j]);
                if w != 0.0 {
                    bandwidth = bandwidth.max(i.abs_diff(j));
                }
                weights[i * n + j] = w;
            }
        }
        let mut exterior = Vec::with_capacity(n);
        for i in 0..n {
            let row: f64 = weights[i * n..(i + 1) * n].iter().sum();
            let b = 1.0 - row;
            if b < -EXTERIOR_MASS_TOLERANCE {
                return Err(Error::ExteriorMassNegative { node: i, value: b });
            }
            exterior.push(b);
        }
        Ok(Self {
            grid: grid.clone(),
            weights,
            exterior,
            bandwidth,
        })
    }

    /// Diffusion-free operator (`W = I`, `b = 0`), leaving only the
    /// absorption terms in the right-hand side.
    pub fn diffusion_free(grid: &Grid) -> Self {
        let n = grid.len();
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 1.0;
        }
        Self {
            grid: grid.clone(),
            weights,
            exterior: vec![0.0; n],
            bandwidth: 0,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.exterior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exterior.is_empty()
    }

    /// Largest `|i - j|` with a nonzero weight.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.weights[i * n..(i + 1) * n]
    }

    pub fn exterior_mass(&self) -> &[f64] {
        &self.exterior
    }

    /// `Σ_j W[i][j] u_j + b_i`, the nonlocal average with the exterior datum.
    #[inline]
    pub fn average_at(&self, i: usize, u: &[f64]) -> f64 {
        let n = self.len();
        let lo = i.saturating_sub(self.bandwidth);
        let hi = (i + self.bandwidth + 1).min(n);
        let row = &self.weights[i * n + lo..i * n + hi];
        let mut acc = self.exterior[i];
        for (w, uj) in row.iter().zip(&u[lo..hi]) {
            acc += w * uj;
        }
        acc
    }

    /// `out = W u + b`.
    pub fn average(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.average_at(i, u);
        }
    }
}

pub fn build_operator(grid: &Grid, kernel: &Kernel) -> Result<NonlocalOperator> {
    NonlocalOperator::new(grid, kernel)
}
