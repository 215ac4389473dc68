//! Adaptive integration of the semidiscrete system up to quenching, steady
//! state or a time limit.
//!
//! The solver is the second-order linearly implicit Rosenbrock pair of
//! Shampine and Reichelt (the `ode23s` formula) with an embedded third-order
//! error estimate. It advances the logarithms of the nodal values, which keeps
//! every accepted state strictly positive and turns relative accuracy into
//! absolute accuracy, and it steps in a rescaled time `s` with
//! `dt/ds = 1 / (1 + max_k |d ln y_k / dt|)`. Near a quenching time the
//! minima behave like powers of `T - t`, which are linear functions of `s`,
//! so the step count per decade of `T - t` stays bounded. Physical time is
//! accumulated in double-double precision.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BandLu, BandMatrix};
use crate::model::{argmin, psi_gap_unchecked, State, SystemParams};
use crate::operator::NonlocalOperator;
use crate::time::Time;

const D: f64 = 0.292_893_218_813_452_5; // 1 / (2 + sqrt 2)
const E32: f64 = 7.414_213_562_373_095; // 6 + sqrt 2
const SAFETY: f64 = 0.8;
const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.2;
const LOCALIZE_ITERS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative tolerance, applied to every nodal value.
    pub rtol: f64,
    /// Absolute tolerance on nodal values. Zero gives pure relative control,
    /// which is what the quenching component needs.
    pub atol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// `ε_q`: a component whose minimum falls to this level has quenched.
    pub quench_threshold: f64,
    /// After the first component quenches the run continues until the other
    /// one quenches too, or until the first reaches this deeper level.
    pub quench_floor: f64,
    pub steady_tol: f64,
    pub t_max: f64,
    pub record_stride: usize,
    /// Times at which full snapshots are taken; the solver lands on them.
    pub snapshot_times: Vec<f64>,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-7,
            atol: 0.0,
            dt_init: 1e-3,
            dt_min: 1e-300,
            dt_max: 10.0,
            quench_threshold: 1e-6,
            quench_floor: 1e-18,
            steady_tol: 1e-10,
            t_max: 1e4,
            record_stride: 1,
            snapshot_times: Vec::new(),
            max_steps: 2_000_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(format!("solver config: {m}")));
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return bad("rtol must lie in (0, 1)");
        }
        if !(self.atol >= 0.0 && self.atol.is_finite()) {
            return bad("atol must be nonnegative");
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max) {
            return bad("need 0 < dt_min < dt_max");
        }
        if !(self.dt_init > 0.0) {
            return bad("dt_init must be positive");
        }
        if !(self.quench_threshold > 0.0) {
            return bad("quench_threshold must be positive");
        }
        if !(self.quench_floor > 0.0 && self.quench_floor <= self.quench_threshold) {
            return bad("need 0 < quench_floor <= quench_threshold");
        }
        if !(self.steady_tol > 0.0) {
            return bad("steady_tol must be positive");
        }
        if !(self.t_max > 0.0) {
            return bad("t_max must be positive");
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        Ok(())
    }

    /// Same configuration with both tolerances scaled by `factor`.
    pub fn with_tolerance_scaled(&self, factor: f64) -> Self {
        Self {
            rtol: self.rtol * factor,
            atol: self.atol * factor,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    U,
    V,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t: Time,
    pub min_u: f64,
    pub argmin_u: usize,
    pub min_v: f64,
    pub argmin_v: usize,
    /// Time elapsed since the previous recorded sample (zero for the first).
    pub dt: f64,
    pub psi_gap: f64,
}

impl Sample {
    pub fn min(&self, c: Component) -> f64 {
        match c {
            Component::U => self.min_u,
            Component::V => self.min_v,
        }
    }

    pub fn argmin(&self, c: Component) -> usize {
        match c {
            Component::U => self.argmin_u,
            Component::V => self.argmin_v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: Time,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn floor(&self, c: Component) -> f64 {
        self.samples
            .iter()
            .map(|s| s.min(c))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn psi_gap_max(&self) -> f64 {
        self.samples.iter().map(|s| s.psi_gap).fold(0.0, f64::max)
    }

    /// Rebuilds the time stamps from the first time and the per-sample
    /// increments, as needed after a round trip through text files that only
    /// keep `f64` times.
    pub fn restamp_from_increments(&mut self) {
        let Some(first) = self.samples.first() else {
            return;
        };
        let mut t = Time::new(first.t.to_f64());
        for s in &mut self.samples {
            t = t.add(s.dt);
            s.t = t;
        }
    }
}

/// Quenching time estimate: the last sample time plus a linear
/// extrapolation of the smaller minimum to zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuenchTime {
    pub t_final: Time,
    pub correction: f64,
    /// Set when the slope was too small to extrapolate.
    pub degenerate: bool,
}

impl QuenchTime {
    pub fn value(&self) -> f64 {
        self.t_final.add(self.correction).to_f64()
    }

    pub fn as_time(&self) -> Time {
        self.t_final.add(self.correction)
    }

    /// `T - t` for an earlier sample time, at full precision.
    pub fn remaining_at(&self, t: Time) -> f64 {
        self.t_final.since(t) + self.correction
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Quenched {
        t_est: QuenchTime,
        u_quenched: bool,
        v_quenched: bool,
    },
    Steady {
        residual: f64,
    },
    TimedOut,
}

impl Outcome {
    pub fn is_quenched(&self) -> bool {
        matches!(self, Outcome::Quenched { .. })
    }

    pub fn quench_time(&self) -> Option<QuenchTime> {
        match self {
            Outcome::Quenched { t_est, .. } => Some(*t_est),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Quenched { .. } => "quenched",
            Outcome::Steady { .. } => "steady",
            Outcome::TimedOut => "timed_out",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub factorizations: usize,
}

#[derive(Clone, Debug)]
pub struct Integration {
    pub trajectory: Trajectory,
    pub outcome: Outcome,
    pub final_state: State,
    pub stats: SolverStats,
}

/// Right-hand side of the system for `Y = ln y`, interleaved as
/// `[ln u_0, ln v_0, ln u_1, ...]`.
struct LogSystem<'a> {
    op: &'a NonlocalOperator,
    params: SystemParams,
    u: Vec<f64>,
    v: Vec<f64>,
    avg_u: Vec<f64>,
    avg_v: Vec<f64>,
}

impl<'a> LogSystem<'a> {
    fn new(op: &'a NonlocalOperator, params: SystemParams) -> Self {
        let n = op.len();
        Self {
            op,
            params,
            u: vec![0.0; n],
            v: vec![0.0; n],
            avg_u: vec![0.0; n],
            avg_v: vec![0.0; n],
        }
    }

    fn nodes(&self) -> usize {
        self.op.len()
    }

    /// Writes `d ln y / dt` into `f` and returns `max |f|`, or `None` when
    /// the state left the representable positive range.
    fn rates(&mut self, y: &[f64], f: &mut [f64]) -> Option<f64> {
        let n = self.nodes();
        for i in 0..n {
            self.u[i] = y[2 * i].exp();
            self.v[i] = y[2 * i + 1].exp();
            if !(self.u[i] > 0.0 && self.v[i] > 0.0 && self.u[i].is_finite() && self.v[i].is_finite()) {
                return None;
            }
        }
        self.op.average(&self.u, &mut self.avg_u);
        self.op.average(&self.v, &mut self.avg_v);
        let SystemParams { lambda, mu, p, q } = self.params;
        let mut fmax = 0.0_f64;
        for i in 0..n {
            let (lu, lv) = (y[2 * i], y[2 * i + 1]);
            let fu = self.avg_u[i] / self.u[i] - 1.0 - lambda * (-p * lv - lu).exp();
            let fv = self.avg_v[i] / self.v[i] - 1.0 - mu * (-q * lu - lv).exp();
            if !(fu.is_finite() && fv.is_finite()) {
                return None;
            }
            f[2 * i] = fu;
            f[2 * i + 1] = fv;
            fmax = fmax.max(fu.abs()).max(fv.abs());
        }
        Some(fmax)
    }

    /// Visits the nonzero entries of row `r` of the Jacobian of `rates` at
    /// `y`, where the rates are `f`.
    fn jacobian_row(&self, y: &[f64], f: &[f64], r: usize, mut visit: impl FnMut(usize, f64)) {
        let n = self.nodes();
        let bw = self.op.bandwidth();
        let SystemParams { lambda, mu, p, q } = self.params;
        let (i, comp) = (r / 2, r % 2);
        let row = self.op.row(i);
        for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
            let w = row[j];
            if w == 0.0 && j != i {
                continue;
            }
            let col = 2 * j + comp;
            let mut val = w * (y[col] - y[r]).exp();
            if j == i {
                val -= 1.0 + f[r];
            }
            visit(col, val);
        }
        let (lu, lv) = (y[2 * i], y[2 * i + 1]);
        if comp == 0 {
            visit(2 * i + 1, lambda * p * (-p * lv - lu).exp());
        } else {
            visit(2 * i, mu * q * (-q * lu - lv).exp());
        }
    }

    /// Fills `band` with `I - c J`.
    fn fill_iteration_matrix(&self, y: &[f64], f: &[f64], c: f64, band: &mut BandMatrix) {
        band.fill_zero();
        for r in 0..y.len() {
            band.set(r, r, 1.0);
            self.jacobian_row(y, f, r, |col, val| band.add(r, col, -c * val));
        }
    }
}

fn speed(fmax: f64) -> f64 {
    1.0 / (1.0 + fmax)
}

/// `(A + a g^T)^{-1}` through Sherman-Morrison, with `A` factored as a band.
struct IterationSolver {
    lu: BandLu,
    /// `A^{-1} a`
    z: Vec<f64>,
    /// sparse `g`
    g: Vec<(usize, f64)>,
    denom: f64,
}

impl IterationSolver {
    fn solve(&self, x: &mut [f64]) {
        self.lu.solve_in_place(x);
        if self.g.is_empty() {
            return;
        }
        let gx: f64 = self.g.iter().map(|&(k, v)| v * x[k]).sum();
        let s = gx / self.denom;
        for (xk, zk) in x.iter_mut().zip(&self.z) {
            *xk -= s * zk;
        }
    }
}

struct Trial {
    y: Vec<f64>,
    f: Vec<f64>,
    theta: f64,
    dt: f64,
    err: f64,
}

enum StepFailure {
    /// Non-finite or non-positive values in a stage.
    Range,
    Singular,
}

struct Stepper<'a> {
    sys: LogSystem<'a>,
    band: BandMatrix,
    rtol: f64,
    atol: f64,
    factorizations: usize,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    ytmp: Vec<f64>,
    f1: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(op: &'a NonlocalOperator, params: SystemParams, cfg: &SolverConfig) -> Self {
        let m = 2 * op.len();
        let kl = 2 * op.bandwidth() + 1;
        Self {
            sys: LogSystem::new(op, params),
            band: BandMatrix::zeros(m, kl, kl),
            rtol: cfg.rtol,
            atol: cfg.atol,
            factorizations: 0,
            k1: vec![0.0; m],
            k2: vec![0.0; m],
            k3: vec![0.0; m],
            ytmp: vec![0.0; m],
            f1: vec![0.0; m],
            rhs: vec![0.0; m],
        }
    }

    /// One Rosenbrock step of length `h` in `s`, or of physical length `h`
    /// when `unit_speed` is set.
    fn step(
        &mut self,
        y0: &[f64],
        f0: &[f64],
        theta0: f64,
        h: f64,
        unit_speed: bool,
    ) -> std::result::Result<Trial, StepFailure> {
        let m = y0.len();
        let th = |theta: f64| if unit_speed { 1.0 } else { theta };
        let th0 = th(theta0);
        let mut band = std::mem::replace(&mut self.band, BandMatrix::zeros(0, 0, 0));
        self.sys.fill_iteration_matrix(y0, f0, h * D * th0, &mut band);
        self.factorizations += 1;
        let factored = band.clone().factor();
        self.band = band;
        let lu = factored.map_err(|_| StepFailure::Singular)?;
        let lu = if unit_speed {
            IterationSolver { lu, z: Vec::new(), g: Vec::new(), denom: 1.0 }
        } else {
            // G = θ F with θ = 1 / (1 + |F_k*|), so J_G = θ J_F + F ∇θ^T and
            // ∇θ = -θ² sgn(F_k*) ∇F_k*.
            let kstar = f0
                .iter()
                .enumerate()
                .fold(0, |best, (k, v)| if v.abs() > f0[best].abs() { k } else { best });
            let scale = -th0 * th0 * f0[kstar].signum();
            let mut g = Vec::new();
            self.sys.jacobian_row(y0, f0, kstar, |col, val| g.push((col, scale * val)));
            let mut z: Vec<f64> = f0.iter().map(|v| -h * D * v).collect();
            lu.solve_in_place(&mut z);
            let denom = 1.0 + g.iter().map(|&(k, v)| v * z[k]).sum::<f64>();
            if !(denom.is_finite() && denom.abs() > 1e-12) {
                return Err(StepFailure::Singular);
            }
            IterationSolver { lu, z, g, denom }
        };

        for k in 0..m {
            self.k1[k] = th0 * f0[k];
        }
        lu.solve(&mut self.k1);
        for k in 0..m {
            self.ytmp[k] = y0[k] + 0.5 * h * self.k1[k];
        }
        let th1 = th(speed(self.sys.rates(&self.ytmp, &mut self.f1).ok_or(StepFailure::Range)?));
        for k in 0..m {
            self.k2[k] = th1 * self.f1[k] - self.k1[k];
        }
        lu.solve(&mut self.k2);
        let mut ynew = vec![0.0; m];
        for k in 0..m {
            self.k2[k] += self.k1[k];
            ynew[k] = y0[k] + h * self.k2[k];
        }
        let mut f2 = vec![0.0; m];
        let fmax2 = self.sys.rates(&ynew, &mut f2).ok_or(StepFailure::Range)?;
        let th2 = th(speed(fmax2));
        for k in 0..m {
            let g1 = th1 * self.f1[k];
            self.rhs[k] = th2 * f2[k] - E32 * (self.k2[k] - g1) - 2.0 * (self.k1[k] - th0 * f0[k]);
        }
        self.k3.copy_from_slice(&self.rhs);
        lu.solve(&mut self.k3);

        let mut err = 0.0_f64;
        for k in 0..m {
            let e = h / 6.0 * (self.k1[k] - 2.0 * self.k2[k] + self.k3[k]);
            let scale = if self.atol > 0.0 {
                let y = y0[k].max(ynew[k]).exp();
                self.rtol + self.atol / y
            } else {
                self.rtol
            };
            err = err.max(e.abs() / scale);
        }
        let dt = if unit_speed {
            h
        } else {
            // Δt = ∫ θ ds by Simpson on two panels, with θ read off the
            // interpolant y0 + h (τ(1-τ) k1 + τ(τ-2d) k2) / (1-2d); the
            // one-panel rule gives the error estimate.
            let mut th_at = |tau: f64| -> std::result::Result<f64, StepFailure> {
                let a = tau * (1.0 - tau) / (1.0 - 2.0 * D);
                let b = tau * (tau - 2.0 * D) / (1.0 - 2.0 * D);
                for k in 0..m {
                    self.ytmp[k] = y0[k] + h * (a * self.k1[k] + b * self.k2[k]);
                }
                Ok(speed(self.sys.rates(&self.ytmp, &mut self.f1).ok_or(StepFailure::Range)?))
            };
            let (tq1, tmid, tq3) = (th_at(0.25)?, th_at(0.5)?, th_at(0.75)?);
            let coarse = h / 6.0 * (th0 + 4.0 * tmid + th2);
            let fine = h / 12.0 * (th0 + 4.0 * tq1 + 2.0 * tmid + 4.0 * tq3 + th2);
            // relative to the local time scale 1/max|F|, which tracks T - t
            // near quenching
            let horizon = if th0 < 1.0 { (th0 / (1.0 - th0)).min(1.0) } else { 1.0 };
            let errt = (fine - coarse).abs() / 15.0 / (self.rtol * (fine + horizon));
            err = err.max(errt);
            fine + (fine - coarse) / 15.0
        };
        if !err.is_finite() {
            return Err(StepFailure::Range);
        }
        Ok(Trial {
            y: ynew,
            f: f2,
            theta: speed(fmax2),
            dt,
            err,
        })
    }
}

fn unpack(y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let u = y.iter().step_by(2).map(|x| x.exp()).collect();
    let v = y.iter().skip(1).step_by(2).map(|x| x.exp()).collect();
    (u, v)
}

/// Minima of both components from a log-state: `(min_u, argmin_u, min_v, argmin_v)`.
fn minima(y: &[f64]) -> (f64, usize, f64, usize) {
    let (mut mu, mut iu, mut mv, mut iv) = (f64::INFINITY, 0, f64::INFINITY, 0);
    for (i, pair) in y.chunks_exact(2).enumerate() {
        if pair[0] < mu {
            mu = pair[0];
            iu = i;
        }
        if pair[1] < mv {
            mv = pair[1];
            iv = i;
        }
    }
    (mu.exp(), iu, mv.exp(), iv)
}

struct Tracker {
    crossed_u: bool,
    crossed_v: bool,
}

impl Tracker {
    fn any(&self) -> bool {
        self.crossed_u || self.crossed_v
    }
}

/// Integrates from `state0` until quenching, steady state or `t_max`.
pub fn integrate(
    state0: &State,
    op: &NonlocalOperator,
    params: &SystemParams,
    cfg: &SolverConfig,
) -> Result<Integration> {
    cfg.validate()?;
    params.validate()?;
    if state0.u.len() != op.len() || state0.v.len() != op.len() {
        return Err(Error::DimensionMismatch {
            expected: op.len(),
            got: state0.u.len().min(state0.v.len()),
        });
    }
    if !state0.is_positive() {
        return Err(Error::Domain("initial data must be strictly positive".into()));
    }

    let n = op.len();
    let m = 2 * n;
    let eps = cfg.quench_threshold;
    let mut stepper = Stepper::new(op, *params, cfg);
    let mut y = vec![0.0; m];
    for i in 0..n {
        y[2 * i] = state0.u[i].ln();
        y[2 * i + 1] = state0.v[i].ln();
    }
    let mut f = vec![0.0; m];
    let fmax = stepper
        .sys
        .rates(&y, &mut f)
        .ok_or(Error::NumericalOverflow { index: 0 })?;
    let mut theta = speed(fmax);

    let mut targets: Vec<f64> = cfg
        .snapshot_times
        .iter()
        .copied()
        .filter(|&s| s > state0.t && s < cfg.t_max)
        .collect();
    targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    targets.dedup();
    targets.push(cfg.t_max);
    let mut next_target = 0;

    let mut t = Time::new(state0.t);
    let mut traj = Trajectory::default();
    let mut last_recorded = t;
    let record = |traj: &mut Trajectory, y: &[f64], t: Time, last: &mut Time| {
        let (min_u, argmin_u, min_v, argmin_v) = minima(y);
        let (u, v) = unpack(y);
        traj.samples.push(Sample {
            t,
            min_u,
            argmin_u,
            min_v,
            argmin_v,
            dt: t.since(*last),
            psi_gap: psi_gap_unchecked(&u, &v, params),
        });
        *last = t;
    };
    record(&mut traj, &y, t, &mut last_recorded);

    let mut stats = SolverStats::default();
    let mut tracker = Tracker {
        crossed_u: false,
        crossed_v: false,
    };
    let mut h = cfg.dt_init / theta;
    let mut steps_since_record = 0usize;

    let outcome = loop {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(Error::NumericalFailure(format!(
                "step budget of {} exhausted at t={}",
                cfg.max_steps, t
            )));
        }
        h = h.min(cfg.dt_max / theta);
        let target = targets[next_target];
        let remaining = Time::new(target).since(t);
        let landing = h * theta >= remaining;

        let physical = if landing { remaining } else { h * theta };
        if physical < cfg.dt_min || physical < 1e-30 * t.to_f64().abs() {
            let decreasing = min_decreasing(&y, &f);
            if tracker.any() || decreasing.is_some() {
                let (min_u, _, min_v, _) = minima(&y);
                let flags = if tracker.any() {
                    (tracker.crossed_u, tracker.crossed_v)
                } else {
                    (min_u <= min_v, min_v < min_u)
                };
                break quenched(&y, t, op, params, flags);
            }
            return Err(Error::NumericalFailure(format!(
                "step size underflow at t={t} with non-decreasing minima"
            )));
        }

        let trial = if landing {
            stepper.step(&y, &f, theta, remaining, true)
        } else {
            stepper.step(&y, &f, theta, h, false)
        };
        let mut trial = match trial {
            Ok(trial) => trial,
            Err(_) => {
                stats.rejected += 1;
                h = if landing { 0.5 * remaining / theta } else { 0.5 * h };
                continue;
            }
        };
        if trial.err > 1.0 {
            stats.rejected += 1;
            let shrink = (SAFETY * trial.err.powf(-1.0 / 3.0)).max(MIN_SHRINK);
            h = if landing { remaining / theta } else { h } * shrink;
            continue;
        }
        // theta varies across the step, so a free step can still overrun the target
        if !landing && trial.dt >= remaining {
            h = remaining / theta;
            continue;
        }
        let used_h = if landing { remaining / theta } else { h };
        let growth = (SAFETY * trial.err.max(1e-10).powf(-1.0 / 3.0)).min(MAX_GROWTH);

        // Land the first quenching crossing inside [eps/2, eps].
        let mut landed_on_target = landing;
        if !tracker.any() {
            let (tu, _, tv, _) = minima(&trial.y);
            if tu.min(tv) < 0.5 * eps {
                let h_hi = if landing { remaining / theta } else { h };
                if let Some(better) = localize(&mut stepper, &y, &f, theta, h_hi, eps) {
                    trial = better;
                    landed_on_target = false;
                }
            }
        }

        stats.accepted += 1;
        y = trial.y;
        f = trial.f;
        theta = trial.theta;
        if landed_on_target {
            t = Time::new(target);
        } else {
            t = t.add(trial.dt);
        }
        h = used_h * growth;

        let (min_u, _, min_v, _) = minima(&y);
        let dec = min_decreasing(&y, &f);
        if min_u <= eps && dec.map_or(false, |d| d.0) {
            tracker.crossed_u = true;
        }
        if min_v <= eps && dec.map_or(false, |d| d.1) {
            tracker.crossed_v = true;
        }
        let residual = physical_residual(&y, &f);

        let is_snapshot = landed_on_target && next_target + 1 < targets.len();
        let finished = (tracker.crossed_u && tracker.crossed_v)
            || (tracker.crossed_u && min_u <= cfg.quench_floor)
            || (tracker.crossed_v && min_v <= cfg.quench_floor)
            || (!tracker.any() && residual < cfg.steady_tol)
            || (landed_on_target && next_target + 1 == targets.len());

        steps_since_record += 1;
        if finished || is_snapshot || steps_since_record >= cfg.record_stride {
            record(&mut traj, &y, t, &mut last_recorded);
            steps_since_record = 0;
        }
        if is_snapshot {
            let (u, v) = unpack(&y);
            traj.snapshots.push(Snapshot { t, u, v });
            next_target += 1;
        }
        if !finished {
            continue;
        }
        if tracker.any() {
            break quenched(&y, t, op, params, (tracker.crossed_u, tracker.crossed_v));
        }
        if residual < cfg.steady_tol {
            break Ok(Outcome::Steady { residual });
        }
        break Ok(Outcome::TimedOut);
    }?;

    let (u, v) = unpack(&y);
    traj.snapshots.push(Snapshot {
        t,
        u: u.clone(),
        v: v.clone(),
    });
    stats.factorizations = stepper.factorizations;
    Ok(Integration {
        trajectory: traj,
        outcome,
        final_state: State {
            t: t.to_f64(),
            u,
            v,
        },
        stats,
    })
}

fn localize(
    stepper: &mut Stepper<'_>,
    y: &[f64],
    f: &[f64],
    theta: f64,
    h_hi: f64,
    eps: f64,
) -> Option<Trial> {
    let (mut lo, mut hi) = (0.0, h_hi);
    let mut fallback = None;
    for _ in 0..LOCALIZE_ITERS {
        let mid = 0.5 * (lo + hi);
        match stepper.step(y, f, theta, mid, false) {
            Ok(trial) if trial.err <= 1.0 => {
                let (tu, _, tv, _) = minima(&trial.y);
                let m = tu.min(tv);
                if m > eps {
                    lo = mid;
                } else if m < 0.5 * eps {
                    hi = mid;
                    fallback = Some(trial);
                } else {
                    return Some(trial);
                }
            }
            _ => hi = mid,
        }
    }
    fallback
}

/// Whether each component's minimum is decreasing, read off the rates at the
/// argmin. `None` when neither is.
fn min_decreasing(y: &[f64], f: &[f64]) -> Option<(bool, bool)> {
    let (_, iu, _, iv) = minima(y);
    let du = f[2 * iu] < 0.0;
    let dv = f[2 * iv + 1] < 0.0;
    (du || dv).then_some((du, dv))
}

fn physical_residual(y: &[f64], f: &[f64]) -> f64 {
    y.iter()
        .zip(f)
        .map(|(ly, r)| (r * ly.exp()).abs())
        .fold(0.0, f64::max)
}

fn quenched(
    y: &[f64],
    t: Time,
    op: &NonlocalOperator,
    params: &SystemParams,
    flags: (bool, bool),
) -> Result<Outcome> {
    let (u, v) = unpack(y);
    let state = State {
        t: t.to_f64(),
        u,
        v,
    };
    let t_est = extrapolate(t, &state, op, params)?;
    Ok(Outcome::Quenched {
        t_est,
        u_quenched: flags.0,
        v_quenched: flags.1,
    })
}

fn extrapolate(
    t_final: Time,
    state: &State,
    op: &NonlocalOperator,
    params: &SystemParams,
) -> Result<QuenchTime> {
    let (mu, iu) = argmin(&state.u);
    let (mv, iv) = argmin(&state.v);
    let (m, slope) = if mu <= mv {
        let rate = op.average_at(iu, &state.u) - mu - params.lambda * crate::model::neg_pow(state.v[iu], params.p);
        (mu, rate)
    } else {
        let rate = op.average_at(iv, &state.v) - mv - params.mu * crate::model::neg_pow(state.u[iv], params.q);
        (mv, rate)
    };
    if !slope.is_finite() {
        return Err(Error::NumericalOverflow { index: 0 });
    }
    if slope.abs() < 1e-14 {
        warn!("quenching slope {slope:e} too small to extrapolate; using the last sample time");
        return Ok(QuenchTime {
            t_final,
            correction: 0.0,
            degenerate: true,
        });
    }
    Ok(QuenchTime {
        t_final,
        correction: m / slope.abs(),
        degenerate: false,
    })
}

/// `T ≈ t_final + m / |m'|`, with `m` the smaller final minimum and `m'` its
/// rate of change at the argmin.
pub fn estimate_t(
    trajectory: &Trajectory,
    state_final: &State,
    params: &SystemParams,
    op: &NonlocalOperator,
) -> Result<QuenchTime> {
    let t_final = trajectory
        .last()
        .map(|s| s.t)
        .unwrap_or_else(|| Time::new(state_final.t));
    extrapolate(t_final, state_final, op, params)
}
