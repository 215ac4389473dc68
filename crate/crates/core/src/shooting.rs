//! Shooting between non-simultaneous regimes for `p, q < 1`.
//!
//! Initial data `(δ u0, (1-δ) v0)` quench for every `δ ∈ (0,1)` when the
//! base profiles are small enough. Small `δ` leaves only `u` quenching, `δ`
//! near 1 only `v`; the sweep locates both sides and bisection shrinks a
//! bracket around the transition where both quench together.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{classify_floors, Regime};
use crate::error::{Error, Result};
use crate::integrator::{integrate, Component, SolverConfig};
use crate::model::{rhs, State, SystemParams};
use crate::operator::NonlocalOperator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub params: SystemParams,
    pub u0_base: Vec<f64>,
    pub v0_base: Vec<f64>,
    pub delta_samples: usize,
    pub bisect_steps: usize,
}

impl ShootingConfig {
    pub fn constant(params: SystemParams, len: usize, u0: f64, v0: f64) -> Self {
        Self {
            params,
            u0_base: vec![u0; len],
            v0_base: vec![v0; len],
            delta_samples: 33,
            bisect_steps: 20,
        }
    }

    /// Checks `p, q < 1` and `‖u0‖ ≤ min{1, (μ/2)^{1/q}}`,
    /// `‖v0‖ ≤ min{1, (λ/2)^{1/p}}`, which force quenching for every δ.
    pub fn validate(&self) -> Result<()> {
        let SystemParams { lambda, mu, p, q } = self.params;
        self.params.validate()?;
        if !(p < 1.0 && q < 1.0) {
            return Err(Error::InvalidParams("shooting needs p < 1 and q < 1".into()));
        }
        if self.u0_base.len() != self.v0_base.len() {
            return Err(Error::DimensionMismatch {
                expected: self.u0_base.len(),
                got: self.v0_base.len(),
            });
        }
        let max = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
        let (bu, bv) = (1f64.min((mu / 2.0).powf(1.0 / q)), 1f64.min((lambda / 2.0).powf(1.0 / p)));
        if max(&self.u0_base) > bu || max(&self.v0_base) > bv {
            return Err(Error::InvalidParams(format!(
                "base data must satisfy max u0 <= {bu:.6} and max v0 <= {bv:.6}"
            )));
        }
        if !(min(&self.u0_base) > 0.0 && min(&self.v0_base) > 0.0) {
            return Err(Error::InvalidParams("base data must be positive".into()));
        }
        if self.delta_samples < 2 {
            return Err(Error::InvalidParams("need at least two delta samples".into()));
        }
        Ok(())
    }

    /// `min{min δ u0, min (1-δ) v0}`, an upper bound for the quenching time.
    pub fn t_delta_bound(&self, delta: f64) -> f64 {
        let min = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
        (delta * min(&self.u0_base)).min((1.0 - delta) * min(&self.v0_base))
    }
}

/// Which component quenched first, as used by the bisection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `u` reaches the lower floor (the `A⁻` side).
    Minus,
    /// `v` reaches the lower floor (the `A⁺` side).
    Plus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShootingRecord {
    pub delta: f64,
    pub regime: Regime,
    pub side: Side,
    pub t_delta: f64,
    pub floor_u: f64,
    pub floor_v: f64,
    /// Both time derivatives are below `-1` everywhere at `t = 0`.
    pub initial_decrease: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShootingResult {
    pub sweep: Vec<ShootingRecord>,
    pub bisection: Vec<ShootingRecord>,
    pub bracket: (f64, f64),
    pub initial_bracket: (f64, f64),
}

impl ShootingResult {
    pub fn bracket_width(&self) -> f64 {
        self.bracket.1 - self.bracket.0
    }

    /// Largest `|T(δ_{k+1}) - T(δ_k)|` over adjacent sweep samples.
    pub fn max_adjacent_jump(&self) -> f64 {
        self.sweep
            .windows(2)
            .map(|w| (w[1].t_delta - w[0].t_delta).abs())
            .fold(0.0, f64::max)
    }

    pub fn records(&self) -> impl Iterator<Item = &ShootingRecord> {
        self.sweep.iter().chain(&self.bisection)
    }
}

fn side_of(regime: Regime, floor_u: f64, floor_v: f64) -> Side {
    match regime {
        Regime::NonSimultaneousU => Side::Minus,
        Regime::NonSimultaneousV => Side::Plus,
        _ if floor_u < floor_v => Side::Minus,
        _ => Side::Plus,
    }
}

/// Runs one member of the δ-family.
pub fn shoot_once(
    cfg: &ShootingConfig,
    delta: f64,
    op: &NonlocalOperator,
    solver: &SolverConfig,
) -> Result<ShootingRecord> {
    let u: Vec<f64> = cfg.u0_base.iter().map(|x| delta * x).collect();
    let v: Vec<f64> = cfg.v0_base.iter().map(|x| (1.0 - delta) * x).collect();
    let state = State::new(0.0, u, v)?;
    let (du, dv) = rhs(&state, op, &cfg.params)?;
    let initial_decrease = du.iter().chain(&dv).all(|&d| d < -1.0);
    let run = integrate(&state, op, &cfg.params, solver)?;
    let Some(t) = run.outcome.quench_time() else {
        return Err(Error::NumericalFailure(format!(
            "delta={delta}: run ended {} instead of quenching",
            run.outcome.label()
        )));
    };
    let floor_u = run.trajectory.floor(Component::U);
    let floor_v = run.trajectory.floor(Component::V);
    let regime = classify_floors(floor_u, floor_v, solver.quench_threshold);
    Ok(ShootingRecord {
        delta,
        regime,
        side: side_of(regime, floor_u, floor_v),
        t_delta: t.value(),
        floor_u,
        floor_v,
        initial_decrease,
    })
}

/// Sweeps `δ_k = k / (n + 1)` and bisects between the last `u`-only and the
/// first `v`-only sample.
pub fn run_shooting(
    cfg: &ShootingConfig,
    op: &NonlocalOperator,
    solver: &SolverConfig,
) -> Result<ShootingResult> {
    cfg.validate()?;
    if cfg.u0_base.len() != op.len() {
        return Err(Error::DimensionMismatch {
            expected: op.len(),
            got: cfg.u0_base.len(),
        });
    }
    let n = cfg.delta_samples;
    let deltas: Vec<f64> = (1..=n).map(|k| k as f64 / (n + 1) as f64).collect();
    let sweep = deltas
        .par_iter()
        .map(|&d| shoot_once(cfg, d, op, solver))
        .collect::<Result<Vec<_>>>()?;

    let minus = sweep
        .iter()
        .filter(|r| r.regime == Regime::NonSimultaneousU)
        .map(|r| r.delta)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    let plus = sweep
        .iter()
        .filter(|r| r.regime == Regime::NonSimultaneousV)
        .map(|r| r.delta)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
    let (Some(lo), Some(hi)) = (minus, plus) else {
        return Err(Error::SweepTooCoarse(format!(
            "found u-only: {}, v-only: {}; widen the delta range toward 0 and 1",
            minus.is_some(),
            plus.is_some()
        )));
    };
    if lo > hi {
        return Err(Error::SweepTooCoarse(
            "u-only samples lie above v-only samples".into(),
        ));
    }

    let (mut a, mut b) = (lo, hi);
    let mut bisection = Vec::with_capacity(cfg.bisect_steps);
    for _ in 0..cfg.bisect_steps {
        let mid = 0.5 * (a + b);
        let rec = shoot_once(cfg, mid, op, solver)?;
        match rec.side {
            Side::Minus => a = mid,
            Side::Plus => b = mid,
        }
        bisection.push(rec);
    }
    Ok(ShootingResult {
        sweep,
        bisection,
        bracket: (a, b),
        initial_bracket: (lo, hi),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContinuityVerdict {
    pub coarse_jump: f64,
    pub fine_jump: f64,
    pub coarse_spacing: f64,
    pub fine_spacing: f64,
    pub consistent: bool,
}

/// Compares the largest adjacent jump in `T_δ` between a sweep and one with
/// twice as many samples; continuity means the jump shrinks.
pub fn check_tdelta_continuity(coarse: &ShootingResult, fine: &ShootingResult) -> Result<ContinuityVerdict> {
    if coarse.sweep.len() < 10 || fine.sweep.len() < 10 {
        return Err(Error::InvalidParams(
            "continuity check needs at least 10 samples per sweep".into(),
        ));
    }
    let spacing = |r: &ShootingResult| 1.0 / (r.sweep.len() + 1) as f64;
    let (cj, fj) = (coarse.max_adjacent_jump(), fine.max_adjacent_jump());
    Ok(ContinuityVerdict {
        coarse_jump: cj,
        fine_jump: fj,
        coarse_spacing: spacing(coarse),
        fine_spacing: spacing(fine),
        consistent: fj < cj,
    })
}
