//! Post-processing of quenching runs: regimes, rate laws and fits, quench
//! sets and the diagnostics built on the Ψ primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::integrator::{Component, Integration, Outcome, QuenchTime, Trajectory};
use crate::model::{apriori_bounds, psi_unchecked, SystemParams};

/// Samples a fit window must hold.
pub const MIN_FIT_SAMPLES: usize = 20;

/// Ratios inside `[1/RELATION_BAND, RELATION_BAND]` count as bounded.
pub const RELATION_BAND: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Simultaneous,
    NonSimultaneousU,
    NonSimultaneousV,
    /// Both behaviours are possible (`p, q < 1`).
    Either,
    Global,
    /// Quenched, but the floors fit none of the above.
    Ambiguous,
    Undetermined,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Simultaneous => "simultaneous",
            Regime::NonSimultaneousU => "non_simultaneous_u",
            Regime::NonSimultaneousV => "non_simultaneous_v",
            Regime::Either => "either",
            Regime::Global => "global",
            Regime::Ambiguous => "ambiguous",
            Regime::Undetermined => "undetermined",
        }
    }
}

pub fn predict_regime(params: &SystemParams) -> Regime {
    match (params.p >= 1.0, params.q >= 1.0) {
        (true, true) => Regime::Simultaneous,
        (true, false) => Regime::NonSimultaneousU,
        (false, true) => Regime::NonSimultaneousV,
        (false, false) => Regime::Either,
    }
}

/// Regime read off the floors of a finished run.
pub fn observe_regime(run: &Integration, quench_threshold: f64) -> Regime {
    match run.outcome {
        Outcome::Steady { .. } => Regime::Global,
        Outcome::TimedOut => Regime::Undetermined,
        Outcome::Quenched { .. } => {
            let fu = run.trajectory.floor(Component::U);
            let fv = run.trajectory.floor(Component::V);
            classify_floors(fu, fv, quench_threshold)
        }
    }
}

pub fn classify_floors(floor_u: f64, floor_v: f64, eps: f64) -> Regime {
    if floor_u <= eps && floor_v <= eps {
        Regime::Simultaneous
    } else if floor_u <= eps && floor_v >= 10.0 * eps {
        Regime::NonSimultaneousU
    } else if floor_v <= eps && floor_u >= 10.0 * eps {
        Regime::NonSimultaneousV
    } else {
        Regime::Ambiguous
    }
}

/// `min ~ (T-t)^power |log(T-t)|^log_power`, or no quenching.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateLaw {
    Power { power: f64 },
    PowerLog { power: f64, log_power: f64 },
    Bounded,
}

impl RateLaw {
    pub fn has_log_correction(&self) -> bool {
        matches!(self, RateLaw::PowerLog { .. })
    }

    pub fn power(&self) -> Option<f64> {
        match *self {
            RateLaw::Power { power } | RateLaw::PowerLog { power, .. } => Some(power),
            RateLaw::Bounded => None,
        }
    }
}

/// Rate laws for `(min u, min v)` in the regime `predict_regime` gives.
/// For `p, q < 1` the simultaneous laws are returned.
pub fn theoretical_rates(params: &SystemParams) -> (RateLaw, RateLaw) {
    let SystemParams { lambda, mu, p, q } = *params;
    match predict_regime(params) {
        Regime::NonSimultaneousU => (RateLaw::Power { power: 1.0 }, RateLaw::Bounded),
        Regime::NonSimultaneousV => (RateLaw::Bounded, RateLaw::Power { power: 1.0 }),
        _ if p == 1.0 && q == 1.0 => (
            RateLaw::Power {
                power: lambda / (lambda + mu),
            },
            RateLaw::Power {
                power: mu / (lambda + mu),
            },
        ),
        _ if q == 1.0 => (
            RateLaw::PowerLog {
                power: 1.0,
                log_power: -p / (1.0 - p),
            },
            RateLaw::PowerLog {
                power: 0.0,
                log_power: 1.0 / (1.0 - p),
            },
        ),
        _ if p == 1.0 => (
            RateLaw::PowerLog {
                power: 0.0,
                log_power: 1.0 / (1.0 - q),
            },
            RateLaw::PowerLog {
                power: 1.0,
                log_power: -q / (1.0 - q),
            },
        ),
        _ => {
            let d = p * q - 1.0;
            (
                RateLaw::Power { power: (p - 1.0) / d },
                RateLaw::Power { power: (q - 1.0) / d },
            )
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    /// Least-squares slope.
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub samples: usize,
    pub window: (f64, f64),
}

/// Least-squares slope and intercept with the rms residual.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

fn window_points(
    trajectory: &Trajectory,
    t_est: &QuenchTime,
    component: Component,
    window: (f64, f64),
) -> (Vec<f64>, Vec<f64>) {
    let mut remaining = Vec::new();
    let mut mins = Vec::new();
    for s in &trajectory.samples {
        let m = s.min(component);
        let r = t_est.remaining_at(s.t);
        if m >= window.0 && m <= window.1 && r > 0.0 {
            remaining.push(r);
            mins.push(m);
        }
    }
    (remaining, mins)
}

fn fit_with(
    trajectory: &Trajectory,
    t_est: &QuenchTime,
    component: Component,
    window: (f64, f64),
    abscissa: impl Fn(f64) -> f64,
) -> Result<RateFit> {
    let (remaining, mins) = window_points(trajectory, t_est, component, window);
    if mins.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientWindow {
            found: mins.len(),
            required: MIN_FIT_SAMPLES,
        });
    }
    let xs: Vec<f64> = remaining.iter().map(|&r| abscissa(r)).collect();
    let ys: Vec<f64> = mins.iter().map(|m| m.ln()).collect();
    let (exponent, intercept, residual) = least_squares(&xs, &ys);
    Ok(RateFit {
        exponent,
        intercept,
        residual,
        samples: mins.len(),
        window,
    })
}

/// Slope of `log min` against `log(T - t)` over samples whose minimum lies
/// in `window`.
pub fn fit_rate(
    trajectory: &Trajectory,
    t_est: &QuenchTime,
    component: Component,
    window: (f64, f64),
) -> Result<RateFit> {
    fit_with(trajectory, t_est, component, window, f64::ln)
}

/// Slope of `log min` against `log |log(T - t)|`, the coordinates in which a
/// pure logarithmic law is a straight line.
pub fn fit_log_rate(
    trajectory: &Trajectory,
    t_est: &QuenchTime,
    component: Component,
    window: (f64, f64),
) -> Result<RateFit> {
    fit_with(trajectory, t_est, component, window, |r| r.ln().abs().ln())
}

/// Argmin abscissae over the final decade `[ε_q, 10 ε_q]` of each quenching
/// component, merged into clusters of radius `cluster_radius`. Each cluster
/// is represented by the abscissa where its smallest minimum was seen.
pub fn detect_quench_set(
    trajectory: &Trajectory,
    grid: &Grid,
    cluster_radius: f64,
    quench_threshold: f64,
) -> Vec<f64> {
    let mut hits: Vec<(f64, f64)> = Vec::new();
    for c in [Component::U, Component::V] {
        if trajectory.floor(c) > quench_threshold {
            continue;
        }
        for s in &trajectory.samples {
            if s.min(c) <= 10.0 * quench_threshold {
                hits.push((grid.node(s.argmin(c)), s.min(c)));
            }
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut set = Vec::new();
    let mut cluster: Option<(f64, f64, f64)> = None; // (last x, best x, best min)
    for (x, m) in hits {
        match cluster.as_mut() {
            Some(c) if x - c.0 <= cluster_radius => {
                c.0 = x;
                if m < c.2 {
                    c.1 = x;
                    c.2 = m;
                }
            }
            _ => {
                if let Some(c) = cluster {
                    set.push(c.1);
                }
                cluster = Some((x, x, m));
            }
        }
    }
    if let Some(c) = cluster {
        set.push(c.1);
    }
    set
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentRelation {
    /// `min_u^{1-q} / min_v^{1-p}` (or its log form) over the final decade.
    pub raw: Vec<f64>,
    /// `μ Ψ_q[min u] / (λ Ψ_p[min v])` over the same samples.
    pub normalized: Vec<f64>,
    pub bounded: bool,
}

fn relation_term(a: f64, g: f64) -> f64 {
    if a == 1.0 {
        -g.ln()
    } else {
        g.powf(1.0 - a)
    }
}

/// Relation between the two minima near a simultaneous quenching time.
///
/// The verdict uses the Ψ-normalized ratio, which tends to 1 whenever the
/// Ψ-gap stays bounded; the raw ratio tends to a parameter-dependent
/// constant instead.
pub fn check_component_relation(
    trajectory: &Trajectory,
    params: &SystemParams,
    quench_threshold: f64,
) -> Result<ComponentRelation> {
    let fu = trajectory.floor(Component::U);
    let fv = trajectory.floor(Component::V);
    if classify_floors(fu, fv, quench_threshold) != Regime::Simultaneous {
        return Err(Error::NotApplicable(
            "component relation needs simultaneous quenching".into(),
        ));
    }
    let SystemParams { lambda, mu, p, q } = *params;
    if p < 1.0 || q < 1.0 {
        let common = trajectory
            .samples
            .iter()
            .rev()
            .take_while(|s| s.min_u.min(s.min_v) <= 10.0 * quench_threshold)
            .all(|s| s.argmin_u == s.argmin_v);
        if !common {
            return Err(Error::NotApplicable(
                "minima of u and v are not attained at a common node".into(),
            ));
        }
    }
    let mut raw = Vec::new();
    let mut normalized = Vec::new();
    for s in &trajectory.samples {
        if s.min_u.min(s.min_v) > 10.0 * quench_threshold {
            continue;
        }
        let (mu_, mv) = (s.min_u, s.min_v);
        raw.push(if p == 1.0 && q == 1.0 {
            mu_.powf(mu) / mv.powf(lambda)
        } else {
            relation_term(q, mu_) / relation_term(p, mv)
        });
        normalized.push(mu * psi_unchecked(q, mu_) / (lambda * psi_unchecked(p, mv)));
    }
    let bounded = !normalized.is_empty()
        && normalized
            .iter()
            .all(|r| r.is_finite() && *r >= 1.0 / RELATION_BAND && *r <= RELATION_BAND);
    Ok(ComponentRelation {
        raw,
        normalized,
        bounded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub quench_threshold: f64,
    pub fit_window: (f64, f64),
    pub cluster_radius: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            quench_threshold: 1e-6,
            fit_window: (1e-5, 1e-2),
            cluster_radius: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentRate {
    pub law: RateLaw,
    /// Raw slope of `log min` against `log(T - t)`.
    pub fit: Option<RateFit>,
    /// Slope in `log |log(T - t)|` coordinates, for pure-log laws.
    pub log_fit: Option<RateFit>,
    /// Raw slopes refitted with `T` shifted by minus/plus the extrapolation
    /// correction.
    pub sensitivity: Option<(f64, f64)>,
    pub fit_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuenchReport {
    pub outcome: Outcome,
    pub regime_predicted: Regime,
    pub regime_observed: Regime,
    pub t_est: Option<f64>,
    pub t_correction: Option<f64>,
    pub alpha_u: Option<f64>,
    pub alpha_v: Option<f64>,
    pub log_correction: (bool, bool),
    pub rate_u: ComponentRate,
    pub rate_v: ComponentRate,
    pub quench_set: Vec<f64>,
    pub psi_gap_initial: f64,
    pub psi_gap_max: f64,
    pub psi_gap_bound: Option<f64>,
    pub floor_u: f64,
    pub floor_v: f64,
    /// `λ^{1/p}` and `μ^{1/q}`, compared against the floors as a diagnostic.
    pub structural_floor: (f64, f64),
    pub component_relation: Option<ComponentRelation>,
    pub bounds_respected: bool,
}

fn component_rate(
    run: &Integration,
    t_est: Option<&QuenchTime>,
    c: Component,
    law: RateLaw,
    cfg: &AnalysisConfig,
) -> ComponentRate {
    let mut out = ComponentRate {
        law,
        fit: None,
        log_fit: None,
        sensitivity: None,
        fit_error: None,
    };
    let Some(t_est) = t_est else {
        return out;
    };
    if run.trajectory.floor(c) > cfg.quench_threshold {
        return out;
    }
    match fit_rate(&run.trajectory, t_est, c, cfg.fit_window) {
        Ok(fit) => {
            let shifted = |delta: f64| {
                let q = QuenchTime {
                    correction: t_est.correction + delta,
                    ..*t_est
                };
                fit_rate(&run.trajectory, &q, c, cfg.fit_window)
                    .map(|f| f.exponent)
                    .unwrap_or(f64::NAN)
            };
            out.sensitivity = Some((shifted(-t_est.correction), shifted(t_est.correction)));
            out.fit = Some(fit);
        }
        Err(e) => out.fit_error = Some(e.to_string()),
    }
    if matches!(law, RateLaw::PowerLog { power, .. } if power == 0.0) {
        out.log_fit = fit_log_rate(&run.trajectory, t_est, c, cfg.fit_window).ok();
    }
    out
}

pub fn analyze(
    run: &Integration,
    grid: &Grid,
    params: &SystemParams,
    u0: &[f64],
    v0: &[f64],
    cfg: &AnalysisConfig,
) -> QuenchReport {
    let traj = &run.trajectory;
    let t_est = run.outcome.quench_time();
    let (law_u, law_v) = theoretical_rates(params);
    let rate_u = component_rate(run, t_est.as_ref(), Component::U, law_u, cfg);
    let rate_v = component_rate(run, t_est.as_ref(), Component::V, law_v, cfg);
    let bounds = apriori_bounds(u0, v0);
    let psi_gap_initial = traj.samples.first().map_or(0.0, |s| s.psi_gap);
    let psi_gap_bound = t_est
        .map(|t| psi_gap_initial + 8.0 * bounds.m_u * bounds.n_v * (t.value() + 1.0));
    let bounds_respected = run.final_state.u.iter().all(|&u| u <= bounds.m_u * (1.0 + 1e-9))
        && run.final_state.v.iter().all(|&v| v <= bounds.n_v * (1.0 + 1e-9))
        && traj.snapshots.iter().all(|s| {
            s.u.iter().all(|&u| u <= bounds.m_u * (1.0 + 1e-9))
                && s.v.iter().all(|&v| v <= bounds.n_v * (1.0 + 1e-9))
        });
    let quench_set = if run.outcome.is_quenched() {
        detect_quench_set(traj, grid, cfg.cluster_radius, cfg.quench_threshold)
    } else {
        Vec::new()
    };
    QuenchReport {
        outcome: run.outcome,
        regime_predicted: predict_regime(params),
        regime_observed: observe_regime(run, cfg.quench_threshold),
        t_est: t_est.map(|t| t.value()),
        t_correction: t_est.map(|t| t.correction),
        alpha_u: rate_u.fit.map(|f| f.exponent),
        alpha_v: rate_v.fit.map(|f| f.exponent),
        log_correction: (law_u.has_log_correction(), law_v.has_log_correction()),
        rate_u,
        rate_v,
        quench_set,
        psi_gap_initial,
        psi_gap_max: traj.psi_gap_max(),
        psi_gap_bound,
        floor_u: traj.floor(Component::U),
        floor_v: traj.floor(Component::V),
        structural_floor: (params.lambda.powf(1.0 / params.p), params.mu.powf(1.0 / params.q)),
        component_relation: check_component_relation(traj, params, cfg.quench_threshold).ok(),
        bounds_respected,
    }
}
