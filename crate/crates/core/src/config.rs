//! Run configuration in flat `section.key = value` text.
//!
//! Blank lines and `#` comments are ignored, values may be quoted, and
//! unknown or repeated keys are rejected. Only the four `params.*` keys are
//! required; everything else has a default. Relative paths resolve against
//! the directory holding the config file and are stored as absolute paths.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::AnalysisConfig;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::Grid;
use crate::integrator::SolverConfig;
use crate::kernel::{Kernel, KernelProfile};
use crate::model::{State, SystemParams};
use crate::operator::NonlocalOperator;
use crate::stationary::{NewtonConfig, RegionConfig, Spacing};

#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    Named(String),
    File(PathBuf),
}

/// Nodal initial values: an expression in `x` (a constant is the simplest
/// case) or a file with one value per node.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Expr(Expr),
    File(PathBuf),
}

impl DataSpec {
    pub fn constant(c: f64) -> Self {
        DataSpec::Expr(Expr::parse(&c.to_string()).expect("a number is an expression"))
    }

    /// Values at `nodes`. Files hold one value per non-comment line; with
    /// several columns the last one is used.
    pub fn sample(&self, nodes: &[f64]) -> Result<Vec<f64>> {
        match self {
            DataSpec::Expr(e) => Ok(e.sample(nodes)),
            DataSpec::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let mut out = Vec::with_capacity(nodes.len());
                for (k, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let tok = line
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|s| !s.is_empty())
                        .last()
                        .unwrap_or("");
                    let v = tok.parse::<f64>().map_err(|_| {
                        Error::InvalidParams(format!(
                            "{}:{}: bad value `{tok}`",
                            path.display(),
                            k + 1
                        ))
                    })?;
                    out.push(v);
                }
                if out.len() != nodes.len() {
                    return Err(Error::DimensionMismatch {
                        expected: nodes.len(),
                        got: out.len(),
                    });
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootSettings {
    pub delta_samples: usize,
    pub bisect_steps: usize,
}

impl Default for ShootSettings {
    fn default() -> Self {
        Self {
            delta_samples: 33,
            bisect_steps: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub domain: (f64, f64),
    pub n_half: usize,
    pub kernel: KernelSpec,
    pub params: SystemParams,
    pub initial_u: DataSpec,
    pub initial_v: DataSpec,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    pub analysis: AnalysisConfig,
    pub newton: NewtonConfig,
    pub region: RegionConfig,
    pub shoot: ShootSettings,
    /// Trajectory read by `rates`; defaults to `trajectory.csv` in the
    /// output directory.
    pub rates_trajectory: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults around the given parameters: `[-2, 2]`, `N = 100`,
    /// Epanechnikov kernel, unit initial data.
    pub fn new(params: SystemParams) -> Self {
        Self {
            domain: (-2.0, 2.0),
            n_half: 100,
            kernel: KernelSpec::Named("epanechnikov".into()),
            params,
            initial_u: DataSpec::constant(1.0),
            initial_v: DataSpec::constant(1.0),
            solver: SolverConfig::default(),
            output_dir: PathBuf::from("out"),
            analysis: AnalysisConfig::default(),
            newton: NewtonConfig::default(),
            region: RegionConfig::default(),
            shoot: ShootSettings::default(),
            rates_trajectory: None,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.domain.0, self.domain.1, self.n_half)
    }

    pub fn kernel(&self) -> Result<Kernel> {
        match &self.kernel {
            KernelSpec::Named(name) => Kernel::new(KernelProfile::by_name(name)?),
            KernelSpec::File(path) => Kernel::new(KernelProfile::from_table_file(path)?),
        }
    }

    pub fn operator(&self) -> Result<NonlocalOperator> {
        NonlocalOperator::new(&self.grid()?, &self.kernel()?)
    }

    pub fn initial_state(&self, grid: &Grid) -> Result<State> {
        let u = self.initial_u.sample(grid.nodes())?;
        let v = self.initial_v.sample(grid.nodes())?;
        State::new(0.0, u, v)
    }

    /// Analysis settings with the solver's quenching threshold.
    pub fn analysis_config(&self) -> AnalysisConfig {
        AnalysisConfig {
            quench_threshold: self.solver.quench_threshold,
            ..self.analysis
        }
    }

    pub fn emit(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let list = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let path = |p: &Path| p.display().to_string();

        kv("domain.a", self.domain.0.to_string());
        kv("domain.b", self.domain.1.to_string());
        kv("grid.n", self.n_half.to_string());
        match &self.kernel {
            KernelSpec::Named(n) => kv("kernel.name", n.clone()),
            KernelSpec::File(p) => kv("kernel.file", path(p)),
        }
        kv("params.lambda", self.params.lambda.to_string());
        kv("params.mu", self.params.mu.to_string());
        kv("params.p", self.params.p.to_string());
        kv("params.q", self.params.q.to_string());
        for (name, spec) in [("u", &self.initial_u), ("v", &self.initial_v)] {
            match spec {
                DataSpec::Expr(e) => kv(&format!("initial.{name}"), e.source().to_string()),
                DataSpec::File(p) => kv(&format!("initial.{name}_file"), path(p)),
            }
        }
        let c = &self.solver;
        kv("solver.rtol", c.rtol.to_string());
        kv("solver.atol", c.atol.to_string());
        kv("solver.dt_init", c.dt_init.to_string());
        kv("solver.dt_min", c.dt_min.to_string());
        kv("solver.dt_max", c.dt_max.to_string());
        kv("solver.quench_threshold", c.quench_threshold.to_string());
        kv("solver.quench_floor", c.quench_floor.to_string());
        kv("solver.steady_tol", c.steady_tol.to_string());
        kv("solver.t_max", c.t_max.to_string());
        kv("solver.record_stride", c.record_stride.to_string());
        kv("solver.snapshot_times", list(&c.snapshot_times));
        kv("solver.max_steps", c.max_steps.to_string());
        kv("output.dir", path(&self.output_dir));
        kv("analysis.fit_lo", self.analysis.fit_window.0.to_string());
        kv("analysis.fit_hi", self.analysis.fit_window.1.to_string());
        kv("analysis.cluster_radius", self.analysis.cluster_radius.to_string());
        kv("stationary.tol", self.newton.tol.to_string());
        kv("stationary.max_iter", self.newton.max_iter.to_string());
        let r = &self.region;
        kv("region.lambda_min", r.lambda_range.0.to_string());
        kv("region.lambda_max", r.lambda_range.1.to_string());
        kv("region.mu_min", r.mu_range.0.to_string());
        kv("region.mu_max", r.mu_range.1.to_string());
        kv("region.n_lambda", r.resolution.0.to_string());
        kv("region.n_mu", r.resolution.1.to_string());
        kv(
            "region.spacing",
            match r.spacing {
                Spacing::Linear => "linear".into(),
                Spacing::Geometric => "geometric".into(),
            },
        );
        kv("region.bisect_steps", r.bisect_steps.to_string());
        kv("shoot.delta_samples", self.shoot.delta_samples.to_string());
        kv("shoot.bisect_steps", self.shoot.bisect_steps.to_string());
        if let Some(p) = &self.rates_trajectory {
            kv("rates.trajectory", path(p));
        }
        s
    }

    /// Parses config text; relative paths are joined onto `base_dir`.
    pub fn parse_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries: HashMap<String, (usize, String)> = HashMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(line_no, line, "expected `section.key = value`"));
            };
            let key = key.trim().to_string();
            let value = unquote(value.trim()).to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::config(line_no, key, "unknown key"));
            }
            if let Some((first, _)) = entries.get(&key) {
                return Err(Error::config(line_no, key, format!("repeats line {first}")));
            }
            entries.insert(key, (line_no, value));
        }
        let mut r = Reader { entries, base_dir };
        let cfg = r.build()?;
        r.validate(&cfg)?;
        Ok(cfg)
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::parse_str(&text, base)
}

const KEYS: &[&str] = &[
    "domain.a",
    "domain.b",
    "grid.n",
    "kernel.name",
    "kernel.file",
    "params.lambda",
    "params.mu",
    "params.p",
    "params.q",
    "initial.u",
    "initial.v",
    "initial.u_file",
    "initial.v_file",
    "solver.rtol",
    "solver.atol",
    "solver.dt_init",
    "solver.dt_min",
    "solver.dt_max",
    "solver.quench_threshold",
    "solver.quench_floor",
    "solver.steady_tol",
    "solver.t_max",
    "solver.record_stride",
    "solver.snapshot_times",
    "solver.max_steps",
    "output.dir",
    "analysis.fit_lo",
    "analysis.fit_hi",
    "analysis.cluster_radius",
    "stationary.tol",
    "stationary.max_iter",
    "region.lambda_min",
    "region.lambda_max",
    "region.mu_min",
    "region.mu_max",
    "region.n_lambda",
    "region.n_mu",
    "region.spacing",
    "region.bisect_steps",
    "shoot.delta_samples",
    "shoot.bisect_steps",
    "rates.trajectory",
];

fn unquote(s: &str) -> &str {
    let b = s.as_bytes();
    if b.len() >= 2 && (b[0] == b'"' || b[0] == b'\'') && b[b.len() - 1] == b[0] {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

struct Reader<'a> {
    entries: HashMap<String, (usize, String)>,
    base_dir: &'a Path,
}

impl Reader<'_> {
    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.0)
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.entries.get(key)
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|_| Error::config(*line, key, format!("cannot parse `{v}`"))),
        }
    }

    fn required(&self, key: &str) -> Result<f64> {
        match self.raw(key) {
            None => Err(Error::config(0, key, "missing required key")),
            Some(_) => self.num(key, 0.0),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|(_, v)| {
            let joined = self.base_dir.join(v);
            std::path::absolute(&joined).unwrap_or(joined)
        })
    }

    fn either<T>(
        &self,
        a: &str,
        b: &str,
        fa: impl FnOnce(&(usize, String)) -> Result<T>,
        fb: impl FnOnce(PathBuf) -> T,
        default: T,
    ) -> Result<T> {
        match (self.raw(a), self.raw(b)) {
            (Some(_), Some((line, _))) => Err(Error::config(*line, b, format!("conflicts with `{a}`"))),
            (Some(e), None) => fa(e),
            (None, Some(_)) => Ok(fb(self.path(b).expect("present"))),
            (None, None) => Ok(default),
        }
    }

    fn data(&self, name: &str) -> Result<DataSpec> {
        let key = format!("initial.{name}");
        self.either(
            &key,
            &format!("initial.{name}_file"),
            |(line, v)| {
                Expr::parse(v)
                    .map(DataSpec::Expr)
                    .map_err(|e| Error::config(*line, key.as_str(), e.to_string()))
            },
            DataSpec::File,
            DataSpec::constant(1.0),
        )
    }

    fn build(&mut self) -> Result<RunConfig> {
        let params = SystemParams {
            lambda: self.required("params.lambda")?,
            mu: self.required("params.mu")?,
            p: self.required("params.p")?,
            q: self.required("params.q")?,
        };
        let mut cfg = RunConfig::new(params);
        cfg.domain = (self.num("domain.a", cfg.domain.0)?, self.num("domain.b", cfg.domain.1)?);
        cfg.n_half = self.num("grid.n", cfg.n_half)?;
        cfg.kernel = self.either(
            "kernel.name",
            "kernel.file",
            |(_, v)| Ok(KernelSpec::Named(v.clone())),
            KernelSpec::File,
            cfg.kernel.clone(),
        )?;
        cfg.initial_u = self.data("u")?;
        cfg.initial_v = self.data("v")?;

        let d = SolverConfig::default();
        let snapshot_times = match self.raw("solver.snapshot_times") {
            None => d.snapshot_times.clone(),
            Some((line, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>().map_err(|_| {
                        Error::config(*line, "solver.snapshot_times", format!("cannot parse `{s}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        cfg.solver = SolverConfig {
            rtol: self.num("solver.rtol", d.rtol)?,
            atol: self.num("solver.atol", d.atol)?,
            dt_init: self.num("solver.dt_init", d.dt_init)?,
            dt_min: self.num("solver.dt_min", d.dt_min)?,
            dt_max: self.num("solver.dt_max", d.dt_max)?,
            quench_threshold: self.num("solver.quench_threshold", d.quench_threshold)?,
            quench_floor: self.num("solver.quench_floor", d.quench_floor)?,
            steady_tol: self.num("solver.steady_tol", d.steady_tol)?,
            t_max: self.num("solver.t_max", d.t_max)?,
            record_stride: self.num("solver.record_stride", d.record_stride)?,
            snapshot_times,
            max_steps: self.num("solver.max_steps", d.max_steps)?,
        };
        cfg.output_dir = self.path("output.dir").unwrap_or_else(|| {
            let joined = self.base_dir.join(&cfg.output_dir);
            std::path::absolute(&joined).unwrap_or(joined)
        });
        let a = AnalysisConfig::default();
        cfg.analysis = AnalysisConfig {
            quench_threshold: cfg.solver.quench_threshold,
            fit_window: (
                self.num("analysis.fit_lo", a.fit_window.0)?,
                self.num("analysis.fit_hi", a.fit_window.1)?,
            ),
            cluster_radius: self.num("analysis.cluster_radius", a.cluster_radius)?,
        };
        cfg.newton = NewtonConfig {
            tol: self.num("stationary.tol", cfg.newton.tol)?,
            max_iter: self.num("stationary.max_iter", cfg.newton.max_iter)?,
        };
        let r = RegionConfig::default();
        let spacing = match self.raw("region.spacing") {
            None => r.spacing,
            Some((_, v)) if v == "linear" => Spacing::Linear,
            Some((_, v)) if v == "geometric" => Spacing::Geometric,
            Some((line, v)) => {
                return Err(Error::config(
                    *line,
                    "region.spacing",
                    format!("`{v}` is neither `linear` nor `geometric`"),
                ))
            }
        };
        cfg.region = RegionConfig {
            lambda_range: (
                self.num("region.lambda_min", r.lambda_range.0)?,
                self.num("region.lambda_max", r.lambda_range.1)?,
            ),
            mu_range: (
                self.num("region.mu_min", r.mu_range.0)?,
                self.num("region.mu_max", r.mu_range.1)?,
            ),
            resolution: (
                self.num("region.n_lambda", r.resolution.0)?,
                self.num("region.n_mu", r.resolution.1)?,
            ),
            spacing,
            bisect_steps: self.num("region.bisect_steps", r.bisect_steps)?,
        };
        cfg.shoot = ShootSettings {
            delta_samples: self.num("shoot.delta_samples", cfg.shoot.delta_samples)?,
            bisect_steps: self.num("shoot.bisect_steps", cfg.shoot.bisect_steps)?,
        };
        cfg.rates_trajectory = self.path("rates.trajectory");
        Ok(cfg)
    }

    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        let fail = |key: &str, e: Error| Error::config(self.line(key), key, e.to_string());
        let grid = cfg.grid().map_err(|e| fail("grid.n", e))?;
        let kernel_key = match cfg.kernel {
            KernelSpec::Named(_) => "kernel.name",
            KernelSpec::File(_) => "kernel.file",
        };
        cfg.kernel().map_err(|e| fail(kernel_key, e))?;
        SystemParams::stationary(cfg.params.lambda, cfg.params.mu, cfg.params.p, cfg.params.q)
            .map_err(|e| fail("params.lambda", e))?;
        for (name, spec) in [("u", &cfg.initial_u), ("v", &cfg.initial_v)] {
            let key = match spec {
                DataSpec::Expr(_) => format!("initial.{name}"),
                DataSpec::File(_) => format!("initial.{name}_file"),
            };
            let values = spec.sample(grid.nodes()).map_err(|e| fail(&key, e))?;
            if let Some(k) = values.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::config(
                    self.line(&key),
                    key,
                    format!("value {} at x = {} is not positive", values[k], grid.node(k)),
                ));
            }
        }
        cfg.solver.validate().map_err(|e| fail("solver.rtol", e))?;
        let (lo, hi) = cfg.analysis.fit_window;
        if !(lo > 0.0 && hi > lo) {
            return Err(fail(
                "analysis.fit_lo",
                Error::InvalidParams("need 0 < fit_lo < fit_hi".into()),
            ));
        }
        if !(cfg.analysis.cluster_radius >= 0.0) {
            return Err(fail(
                "analysis.cluster_radius",
                Error::InvalidParams("must be nonnegative".into()),
            ));
        }
        if !(cfg.newton.tol > 0.0) || cfg.newton.max_iter == 0 {
            return Err(fail(
                "stationary.tol",
                Error::InvalidParams("need tol > 0 and max_iter >= 1".into()),
            ));
        }
        cfg.region.validate().map_err(|e| fail("region.lambda_min", e))?;
        if cfg.shoot.delta_samples < 2 {
            return Err(fail(
                "shoot.delta_samples",
                Error::InvalidParams("need at least two samples".into()),
            ));
        }
        Ok(())
    }
}
