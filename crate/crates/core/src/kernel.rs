//! Admissible convolution kernels: nonnegative, even, nonincreasing in `|x|`
//! and of unit mass.

use std::path::Path;

use crate::error::{Error, Result};

/// Resolution used when validating a kernel's mass.
pub const VALIDATION_RESOLUTION: usize = 4096;
/// Allowed deviation of the kernel mass from one.
pub const MASS_TOLERANCE: f64 = 1e-6;

const SHAPE_SAMPLES: usize = 513;

/// Shape of a kernel before any scaling.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelProfile {
    /// `3/4 (1 - x^2)_+`
    Epanechnikov,
    /// `1/2` on `[-1, 1]`
    Uniform,
    /// Piecewise-linear profile through tabulated `(x, value)` pairs, zero
    /// outside the table.
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
}

impl KernelProfile {
    pub fn by_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(Self::Epanechnikov),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::InvalidKernel(format!("unknown kernel `{other}`"))),
        }
    }

    /// Reads a two-column `x value` text table with strictly increasing `x`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table_str(&text)
    }

    pub fn from_table_str(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(|c: char| c.is_whitespace() || c == ',');
            let mut next = || -> Result<f64> {
                let tok = cols.by_ref().find(|s| !s.is_empty()).ok_or_else(|| {
                    Error::InvalidKernel(format!("line {}: expected two columns", lineno + 1))
                })?;
                tok.parse::<f64>().map_err(|_| {
                    Error::InvalidKernel(format!("line {}: bad number `{tok}`", lineno + 1))
                })
            };
            let x = next()?;
            let v = next()?;
            if let Some(&last) = xs.last() {
                if x <= last {
                    return Err(Error::InvalidKernel(format!(
                        "line {}: x values must be strictly increasing",
                        lineno + 1
                    )));
                }
            }
            xs.push(x);
            values.push(v);
        }
        if xs.len() < 2 {
            return Err(Error::InvalidKernel("table needs at least two rows".into()));
        }
        Ok(Self::Tabulated { xs, values })
    }

    fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Epanechnikov => {
                let s = 1.0 - x * x;
                if s > 0.0 {
                    0.75 * s
                } else {
                    0.0
                }
            }
            Self::Uniform => {
                if x.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Self::Tabulated { xs, values } => {
                let n = xs.len();
                if x < xs[0] || x > xs[n - 1] {
                    return 0.0;
                }
                let k = xs.partition_point(|&t| t <= x).clamp(1, n - 1);
                let (x0, x1) = (xs[k - 1], xs[k]);
                let w = (x - x0) / (x1 - x0);
                values[k - 1] + w * (values[k] - values[k - 1])
            }
        }
    }

    fn support_radius(&self) -> f64 {
        match self {
            Self::Epanechnikov | Self::Uniform => 1.0,
            Self::Tabulated { xs, .. } => xs[0].abs().max(xs[xs.len() - 1].abs()),
        }
    }
}

/// A kernel `J = scale * profile`. Instances built through [`Kernel::new`]
/// (or the named constructors) are validated; [`Kernel::unchecked`] skips
/// validation so that inadmissible kernels can still be inspected.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    profile: KernelProfile,
    scale: f64,
}

impl Kernel {
    pub fn new(profile: KernelProfile) -> Result<Self> {
        Self::unchecked(profile, 1.0).validated()
    }

    pub fn unchecked(profile: KernelProfile, scale: f64) -> Self {
        Self { profile, scale }
    }

    pub fn epanechnikov() -> Self {
        Self::unchecked(KernelProfile::Epanechnikov, 1.0)
    }

    pub fn uniform() -> Self {
        Self::unchecked(KernelProfile::Uniform, 1.0)
    }

    pub fn profile(&self) -> &KernelProfile {
        &self.profile
    }

    pub fn support_radius(&self) -> f64 {
        self.profile.support_radius()
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.scale * self.profile.eval(x)
    }

    /// Checks nonnegativity, symmetry, monotonicity in `|x|` and unit mass.
    pub fn validated(self) -> Result<Self> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidKernel(format!("scale {} not positive", self.scale)));
        }
        let r = self.support_radius();
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidKernel("empty support".into()));
        }
        let mut prev = f64::INFINITY;
        for k in 0..SHAPE_SAMPLES {
            let x = r * k as f64 / (SHAPE_SAMPLES - 1) as f64;
            let (right, left) = (self.eval(x), self.eval(-x));
            if right < 0.0 || left < 0.0 || !right.is_finite() {
                return Err(Error::InvalidKernel(format!("negative or non-finite at x={x}")));
            }
            if (right - left).abs() > 1e-12 * right.abs().max(1.0) {
                return Err(Error::InvalidKernel(format!("not symmetric at x={x}")));
            }
            if right > prev + 1e-12 {
                return Err(Error::InvalidKernel(format!("increasing in |x| at x={x}")));
            }
            prev = right;
        }
        let mass = kernel_mass(&self, VALIDATION_RESOLUTION);
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidKernel(format!("mass {mass} differs from 1")));
        }
        Ok(self)
    }
}

/// Composite Simpson quadrature of `J` over its support.
pub fn kernel_mass(kernel: &Kernel, resolution: usize) -> f64 {
    let r = kernel.support_radius();
    simpson(|x| kernel.eval(x), -r, r, resolution)
}

/// Composite Simpson rule with `intervals` panels (rounded up to even).
pub(crate) fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
    let n = (intervals.max(2) + 1) & !1;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + k as f64 * h);
    }
    acc * h / 3.0
}
