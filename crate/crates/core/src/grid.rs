//! Uniform one-dimensional grids.

use crate::error::{Error, Result};

/// `2N+1` equispaced nodes `x_{-N}, ..., x_N` covering `[a, b]` with both
/// endpoints included. Nodes are stored left to right, so storage index `k`
/// holds `x_{k-N}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    n_half: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Grid {
    /// Builds the grid with spacing `h = (b - a) / (2N)`.
    pub fn new(a: f64, b: f64, n_half: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidGrid(format!(
                "need finite a < b, got a={a}, b={b}"
            )));
        }
        if n_half == 0 {
            return Err(Error::InvalidGrid("N must be at least 1".into()));
        }
        let count = 2 * n_half + 1;
        let h = (b - a) / (2 * n_half) as f64;
        let nodes = (0..count)
            .map(|k| {
                if k == 0 {
                    a
                } else if k == count - 1 {
                    b
                } else if 2 * k == count - 1 {
                    // exact midpoint, so x_0 = 0 on symmetric domains
                    0.5 * (a + b)
                } else {
                    a + k as f64 * h
                }
            })
            .collect();
        Ok(Self {
            a,
            b,
            n_half,
            h,
            nodes,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_half(&self) -> usize {
        self.n_half
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// Storage index of the node closest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let k = ((x - self.a) / self.h).round();
        k.clamp(0.0, (self.len() - 1) as f64) as usize
    }
}

/// Convenience wrapper matching the operation name used throughout the docs.
pub fn build_grid(a: f64, b: f64, n_half: usize) -> Result<Grid> {
    Grid::new(a, b, n_half)
}
