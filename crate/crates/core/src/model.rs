//! The semidiscrete system
//!
//! ```text
//! u_i' = (W u)_i + b_i - u_i - λ v_i^{-p}
//! v_i' = (W v)_i + b_i - v_i - μ u_i^{-q}
//! ```
//!
//! together with its Jacobian, the a-priori upper bounds and the Ψ primitives
//! whose combination `μ Ψ_q[u] - λ Ψ_p[v]` stays bounded up to quenching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::NonlocalOperator;

/// Below this value `g^{-a}` is evaluated as `exp(-a ln g)`.
const LOG_SPACE_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub lambda: f64,
    pub mu: f64,
    pub p: f64,
    pub q: f64,
}

impl SystemParams {
    /// Parameters for time evolution: all four strictly positive.
    pub fn new(lambda: f64, mu: f64, p: f64, q: f64) -> Result<Self> {
        let params = Self { lambda, mu, p, q };
        params.validate()?;
        Ok(params)
    }

    /// Parameters for the stationary solver, which also accepts the
    /// absorption-free limit `λ = μ = 0`.
    pub fn stationary(lambda: f64, mu: f64, p: f64, q: f64) -> Result<Self> {
        let params = Self { lambda, mu, p, q };
        params.validate_nonnegative_rates()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_nonnegative_rates()?;
        if self.lambda == 0.0 || self.mu == 0.0 {
            return Err(Error::InvalidParams(
                "lambda and mu must be strictly positive for time evolution".into(),
            ));
        }
        Ok(())
    }

    fn validate_nonnegative_rates(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite();
        if !(ok(self.lambda) && ok(self.mu) && ok(self.p) && ok(self.q)) {
            return Err(Error::InvalidParams(format!("non-finite entry in {self:?}")));
        }
        if self.lambda < 0.0 || self.mu < 0.0 {
            return Err(Error::InvalidParams(format!(
                "lambda={} and mu={} must be nonnegative",
                self.lambda, self.mu
            )));
        }
        if self.p <= 0.0 || self.q <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "exponents p={} and q={} must be positive",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

/// Nodal values of both components at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    pub fn new(t: f64, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                got: v.len(),
            });
        }
        Ok(Self { t, u, v })
    }

    pub fn constant(len: usize, u: f64, v: f64) -> Self {
        Self {
            t: 0.0,
            u: vec![u; len],
            v: vec![v; len],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn is_positive(&self) -> bool {
        self.u.iter().chain(&self.v).all(|&x| x > 0.0 && x.is_finite())
    }

    pub fn min_u(&self) -> (f64, usize) {
        argmin(&self.u)
    }

    pub fn min_v(&self) -> (f64, usize) {
        argmin(&self.v)
    }
}

/// Minimum and its index; ties go to the smallest index.
pub fn argmin(values: &[f64]) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (k, &x) in values.iter().enumerate() {
        if x < best.0 {
            best = (x, k);
        }
    }
    best
}

/// `g^{-a}` for `g > 0`, switching to log space for tiny `g`.
#[inline]
pub fn neg_pow(g: f64, a: f64) -> f64 {
    if g < LOG_SPACE_THRESHOLD {
        (-a * g.ln()).exp()
    } else {
        g.powf(-a)
    }
}

fn check_dims(state: &State, op: &NonlocalOperator) -> Result<()> {
    for len in [state.u.len(), state.v.len()] {
        if len != op.len() {
            return Err(Error::DimensionMismatch {
                expected: op.len(),
                got: len,
            });
        }
    }
    Ok(())
}

/// Writes the right-hand side into `du`, `dv`.
pub fn rhs_into(
    u: &[f64],
    v: &[f64],
    op: &NonlocalOperator,
    params: &SystemParams,
    du: &mut [f64],
    dv: &mut [f64],
) -> Result<()> {
    for i in 0..op.len() {
        let a = op.average_at(i, u) - u[i] - params.lambda * neg_pow(v[i], params.p);
        let b = op.average_at(i, v) - v[i] - params.mu * neg_pow(u[i], params.q);
        if !a.is_finite() {
            return Err(Error::NumericalOverflow { index: i });
        }
        if !b.is_finite() {
            return Err(Error::NumericalOverflow { index: op.len() + i });
        }
        du[i] = a;
        dv[i] = b;
    }
    Ok(())
}

pub fn rhs(
    state: &State,
    op: &NonlocalOperator,
    params: &SystemParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(state, op)?;
    if !state.is_positive() {
        return Err(Error::Domain("state must be strictly positive".into()));
    }
    let n = op.len();
    let (mut du, mut dv) = (vec![0.0; n], vec![0.0; n]);
    rhs_into(&state.u, &state.v, op, params, &mut du, &mut dv)?;
    Ok((du, dv))
}

/// Jacobian of the right-hand side with respect to `(u, v)`, stored as the
/// shared diffusion block `W - I` plus the two diagonal coupling blocks
///
/// ```text
/// [ W - I              diag(λ p v^{-p-1}) ]
/// [ diag(μ q u^{-q-1})  W - I             ]
/// ```
#[derive(Clone, Debug)]
pub struct Jacobian<'a> {
    op: &'a NonlocalOperator,
    /// `∂u_i'/∂v_i`
    pub du_dv: Vec<f64>,
    /// `∂v_i'/∂u_i`
    pub dv_du: Vec<f64>,
}

impl<'a> Jacobian<'a> {
    pub fn operator(&self) -> &'a NonlocalOperator {
        self.op
    }

    /// Size of one component block.
    pub fn block_len(&self) -> usize {
        self.op.len()
    }

    /// Entry in the block ordering `[u_0..u_{n-1}, v_0..v_{n-1}]`.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let n = self.block_len();
        let (bi, i) = (row / n, row % n);
        let (bj, j) = (col / n, col % n);
        match (bi, bj) {
            (0, 0) | (1, 1) => self.op.weight(i, j) - if i == j { 1.0 } else { 0.0 },
            (0, 1) if i == j => self.du_dv[i],
            (1, 0) if i == j => self.dv_du[i],
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let m = 2 * self.block_len();
        (0..m)
            .map(|r| (0..m).map(|c| self.entry(r, c)).collect())
            .collect()
    }

    /// Product with `x = [xu; xv]`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.block_len();
        let (xu, xv) = x.split_at(n);
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            let wu: f64 = self.op.row(i).iter().zip(xu).map(|(w, y)| w * y).sum();
            let wv: f64 = self.op.row(i).iter().zip(xv).map(|(w, y)| w * y).sum();
            out[i] = wu - xu[i] + self.du_dv[i] * xv[i];
            out[n + i] = wv - xv[i] + self.dv_du[i] * xu[i];
        }
        out
    }
}

pub(crate) fn coupling(g: f64, rate: f64, a: f64) -> f64 {
    rate * a * neg_pow(g, a + 1.0)
}

pub fn jacobian<'a>(
    state: &State,
    op: &'a NonlocalOperator,
    params: &SystemParams,
) -> Result<Jacobian<'a>> {
    check_dims(state, op)?;
    if !state.is_positive() {
        return Err(Error::Domain("state must be strictly positive".into()));
    }
    let du_dv: Vec<f64> = state
        .v
        .iter()
        .map(|&v| coupling(v, params.lambda, params.p))
        .collect();
    let dv_du: Vec<f64> = state
        .u
        .iter()
        .map(|&u| coupling(u, params.mu, params.q))
        .collect();
    if let Some(k) = du_dv.iter().chain(&dv_du).position(|x| !x.is_finite()) {
        return Err(Error::NumericalOverflow { index: k });
    }
    Ok(Jacobian { op, du_dv, dv_du })
}

/// Upper bounds `M = max(1, ‖u0‖∞)`, `N = max(1, ‖v0‖∞)` valid for the whole
/// evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AprioriBounds {
    pub m_u: f64,
    pub n_v: f64,
}

pub fn apriori_bounds(u0: &[f64], v0: &[f64]) -> AprioriBounds {
    let max = |xs: &[f64]| xs.iter().copied().fold(1.0_f64, f64::max);
    AprioriBounds {
        m_u: max(u0),
        n_v: max(v0),
    }
}

/// Primitive of `g^{-a} g_t`: `g^{1-a}/(1-a)`, or `ln g` when `a = 1`.
pub fn psi(a: f64, g: f64) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::Domain(format!("psi needs g > 0, got {g}")));
    }
    Ok(psi_unchecked(a, g))
}

#[inline]
pub(crate) fn psi_unchecked(a: f64, g: f64) -> f64 {
    if a == 1.0 {
        g.ln()
    } else {
        neg_pow(g, a - 1.0) / (1.0 - a)
    }
}

/// `max_i |μ Ψ_q[u_i] - λ Ψ_p[v_i]|`.
pub fn psi_gap(state: &State, params: &SystemParams) -> Result<f64> {
    if !state.is_positive() {
        return Err(Error::Domain("psi_gap needs a positive state".into()));
    }
    Ok(psi_gap_unchecked(&state.u, &state.v, params))
}

pub(crate) fn psi_gap_unchecked(u: &[f64], v: &[f64], params: &SystemParams) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&u, &v)| (params.mu * psi_unchecked(params.q, u) - params.lambda * psi_unchecked(params.p, v)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::kernel::Kernel;
    use crate::operator::build_operator;

    fn five_node() -> NonlocalOperator {
        build_operator(&build_grid(-2.0, 2.0, 2).unwrap(), &Kernel::epanechnikov()).unwrap()
    }

    #[test]
    fn ones_state_collapses_diffusion() {
        let op = build_operator(&build_grid(-2.0, 2.0, 25).unwrap(), &Kernel::epanechnikov())
            .unwrap();
        let params = SystemParams::new(0.1, 0.001, 2.0, 3.0).unwrap();
        let (du, dv) = rhs(&State::constant(op.len(), 1.0, 1.0), &op, &params).unwrap();
        for (a, b) in du.iter().zip(&dv) {
            assert!((a + 0.1).abs() < 1e-14);
            assert!((b + 0.001).abs() < 1e-14);
        }
    }

    #[test]
    fn absorption_term_value() {
        assert!((0.1 * neg_pow(0.5, 2.0) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_row() {
        let op = five_node();
        let params = SystemParams::new(0.1, 0.1, 2.0, 3.0).unwrap();
        let s = State::new(0.0, vec![1.0, 2.0, 3.0, 2.0, 1.0], vec![1.0; 5]).unwrap();
        let (du, _) = rhs(&s, &op, &params).unwrap();
        // x = 0 is the middle node in storage order
        assert!((du[2] - (-0.6)).abs() < 1e-14, "{}", du[2]);
    }

    #[test]
    fn jacobian_at_ones() {
        let op = five_node();
        let params = SystemParams::new(0.1, 0.01, 2.0, 3.0).unwrap();
        let jac = jacobian(&State::constant(5, 1.0, 1.0), &op, &params).unwrap();
        for i in 0..5 {
            assert!((jac.entry(i, 5 + i) - 0.2).abs() < 1e-15);
            assert!((jac.entry(5 + i, i) - 0.03).abs() < 1e-15);
            assert_eq!(jac.entry(i, 5 + (i + 1) % 5), 0.0);
        }
    }

    #[test]
    fn apriori_examples() {
        assert_eq!(
            apriori_bounds(&[1.0, 1.0], &[1.0, 1.0]),
            AprioriBounds { m_u: 1.0, n_v: 1.0 }
        );
        assert_eq!(
            apriori_bounds(&[0.2, 3.0], &[0.7, 0.1]),
            AprioriBounds { m_u: 3.0, n_v: 1.0 }
        );
    }

    #[test]
    fn psi_values() {
        assert!((psi(2.0, 0.5).unwrap() + 2.0).abs() < 1e-15);
        assert_eq!(psi(1.0, 1.0).unwrap(), 0.0);
        assert!((psi(3.0, 1.0).unwrap() + 0.5).abs() < 1e-15);
        assert!(psi(2.0, 0.0).is_err());
        assert!(psi(2.0, -1.0).is_err());
    }

    #[test]
    fn psi_gap_examples() {
        let params = SystemParams::new(0.1, 0.001, 2.0, 3.0).unwrap();
        let g = psi_gap(&State::constant(3, 1.0, 1.0), &params).unwrap();
        assert!((g - 0.0995).abs() < 1e-15);
        let sym = SystemParams::new(0.3, 0.3, 1.5, 1.5).unwrap();
        let s = State::new(0.0, vec![0.2, 0.7], vec![0.2, 0.7]).unwrap();
        assert_eq!(psi_gap(&s, &sym).unwrap(), 0.0);
    }

    #[test]
    fn log_space_power_is_continuous() {
        let below = neg_pow(0.999_999e-12, 2.5);
        let above = neg_pow(1.000_001e-12, 2.5);
        assert!((below / above - (1.000_001f64 / 0.999_999).powf(2.5)).abs() < 1e-9);
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(SystemParams::new(1.0, 1.0, -1.0, 1.0).is_err());
        assert!(SystemParams::stationary(0.0, 0.0, 2.0, 3.0).is_ok());
        assert!(SystemParams::stationary(-0.1, 0.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let op = five_node();
        let params = SystemParams::new(1.0, 1.0, 400.0, 1.0).unwrap();
        let s = State::new(0.0, vec![1.0; 5], vec![1e-3; 5]).unwrap();
        assert!(matches!(
            rhs(&s, &op, &params),
            Err(Error::NumericalOverflow { .. })
        ));
    }
}
