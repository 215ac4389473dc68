//! CSV and JSON artifacts, and the manifest that lists them.
//!
//! Floats are written in Rust's shortest round-trip form, switching to
//! exponent notation outside `[1e-4, 1e6)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::integrator::{QuenchTime, Sample, Trajectory};
use crate::shooting::ShootingRecord;
use crate::stationary::{RegionMap, StationaryPair};
use crate::time::Time;

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "min_u", "x_argmin_u", "min_v", "x_argmin_v", "dt", "psi_gap"];
pub const SNAPSHOT_HEADER: [&str; 4] = ["t", "x", "u", "v"];
pub const RATES_HEADER: [&str; 3] = ["log_T_minus_t", "log_min_u", "log_min_v"];
pub const STATIONARY_HEADER: [&str; 3] = ["x", "w", "z"];
pub const REGION_HEADER: [&str; 4] = ["lambda", "mu", "class", "T_est"];
pub const BOUNDARY_HEADER: [&str; 3] = ["lambda", "mu_star_lo", "mu_star_hi"];
pub const SHOOTING_HEADER: [&str; 5] = ["delta", "regime", "T_delta", "floor_u", "floor_v"];

pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows<const K: usize>(
    path: &Path,
    header: [&str; K],
    rows: impl IntoIterator<Item = [String; K]>,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, grid: &Grid) -> Result<()> {
    write_rows(
        path,
        TRAJECTORY_HEADER,
        traj.samples.iter().map(|s| {
            [
                fmt_f64(s.t.to_f64()),
                fmt_f64(s.min_u),
                fmt_f64(grid.node(s.argmin_u)),
                fmt_f64(s.min_v),
                fmt_f64(grid.node(s.argmin_v)),
                fmt_f64(s.dt),
                fmt_f64(s.psi_gap),
            ]
        }),
    )
}

/// Reads a trajectory written by [`write_trajectory_csv`]. Time stamps are
/// rebuilt from the `dt` column so that differences near the end keep their
/// accuracy.
pub fn read_trajectory_csv(path: &Path, grid: &Grid) -> Result<Trajectory> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(Error::InvalidParams(format!(
            "{}: expected columns {}",
            path.display(),
            TRAJECTORY_HEADER.join(",")
        )));
    }
    let mut samples = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let col = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| {
                Error::InvalidParams(format!(
                    "{} row {}: bad `{}` value `{}`",
                    path.display(),
                    k + 1,
                    TRAJECTORY_HEADER[i],
                    &rec[i]
                ))
            })
        };
        samples.push(Sample {
            t: Time::new(col(0)?),
            min_u: col(1)?,
            argmin_u: grid.nearest_index(col(2)?),
            min_v: col(3)?,
            argmin_v: grid.nearest_index(col(4)?),
            dt: col(5)?,
            psi_gap: col(6)?,
        });
    }
    let mut traj = Trajectory {
        samples,
        snapshots: Vec::new(),
    };
    traj.restamp_from_increments();
    Ok(traj)
}

pub fn write_snapshots_csv(path: &Path, traj: &Trajectory, grid: &Grid) -> Result<()> {
    write_rows(
        path,
        SNAPSHOT_HEADER,
        traj.snapshots.iter().flat_map(|s| {
            let t = fmt_f64(s.t.to_f64());
            (0..grid.len()).map(move |i| {
                [t.clone(), fmt_f64(grid.node(i)), fmt_f64(s.u[i]), fmt_f64(s.v[i])]
            })
        }),
    )
}

/// `(log(T - t), log min u, log min v)` for every sample with `T - t > 0`.
pub fn rate_rows(traj: &Trajectory, t_est: &QuenchTime) -> Vec<[f64; 3]> {
    traj.samples
        .iter()
        .filter_map(|s| {
            let r = t_est.remaining_at(s.t);
            (r > 0.0).then(|| [r.ln(), s.min_u.ln(), s.min_v.ln()])
        })
        .collect()
}

pub fn write_rates_csv(path: &Path, traj: &Trajectory, t_est: &QuenchTime) -> Result<()> {
    write_rows(
        path,
        RATES_HEADER,
        rate_rows(traj, t_est).into_iter().map(|r| r.map(fmt_f64)),
    )
}

pub fn write_stationary_csv(path: &Path, pair: &StationaryPair, grid: &Grid) -> Result<()> {
    write_rows(
        path,
        STATIONARY_HEADER,
        (0..grid.len()).map(|i| [fmt_f64(grid.node(i)), fmt_f64(pair.w[i]), fmt_f64(pair.z[i])]),
    )
}

pub fn write_region_csv(path: &Path, map: &RegionMap) -> Result<()> {
    write_rows(
        path,
        REGION_HEADER,
        map.cells.iter().map(|c| {
            [
                fmt_f64(c.lambda),
                fmt_f64(c.mu),
                c.class.as_str().to_string(),
                opt(c.t_est),
            ]
        }),
    )
}

pub fn write_boundary_csv(path: &Path, map: &RegionMap) -> Result<()> {
    write_rows(
        path,
        BOUNDARY_HEADER,
        map.boundary
            .iter()
            .map(|b| [fmt_f64(b.lambda), fmt_f64(b.mu_star_lo), fmt_f64(b.mu_star_hi)]),
    )
}

pub fn write_shooting_csv<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a ShootingRecord>,
) -> Result<()> {
    write_rows(
        path,
        SHOOTING_HEADER,
        records.into_iter().map(|r| {
            [
                fmt_f64(r.delta),
                r.regime.as_str().to_string(),
                fmt_f64(r.t_delta),
                fmt_f64(r.floor_u),
                fmt_f64(r.floor_v),
            ]
        }),
    )
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    pub exit_code: i32,
    /// The effective configuration, as `section.key = value` text.
    pub config: String,
    pub files: Vec<ManifestEntry>,
}

pub fn checksum(path: &Path) -> Result<ManifestEntry> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(ManifestEntry {
        file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Output directory with a record of every file written into it.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path for `name`, recorded for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        if !self.written.contains(&p) {
            self.written.push(p.clone());
        }
        p
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes the manifest `name` listing every recorded file that exists.
    pub fn finish(&self, mut manifest: Manifest, name: &str) -> Result<PathBuf> {
        manifest.files = self
            .written
            .iter()
            .filter(|p| p.exists())
            .map(|p| checksum(p))
            .collect::<Result<_>>()?;
        let path = self.dir.join(name);
        write_json(&path, &manifest)?;
        Ok(path)
    }
}
