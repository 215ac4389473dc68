//! Numerical laboratory for a two-component nonlocal diffusion system with
//! singular absorption.

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod operator;
pub mod shooting;
pub mod stationary;
pub mod time;

pub use config::{parse_config, RunConfig};
pub use error::{Error, Result};
pub use experiment::{run_experiment, Command};
pub use grid::{build_grid, Grid};
pub use integrator::{estimate_t, integrate, Component, Integration, Outcome, QuenchTime, Sample, SolverConfig, Trajectory};
pub use kernel::{Kernel, KernelProfile};
pub use model::{State, SystemParams};
pub use operator::{build_operator, NonlocalOperator};
pub use time::Time;
