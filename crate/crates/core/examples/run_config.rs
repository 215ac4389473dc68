//! Drives an experiment from configuration text, as the quenchlab binary
//! does, and lists the files recorded in the manifest.

use quenchlab::config::RunConfig;
use quenchlab::*;

const CONFIG: &str = "
# non-simultaneous quenching of u
params.lambda = 0.1
params.mu = 0.1
params.p = 2
params.q = 0.7
grid.n = 50
initial.u = 1 - 0.1 * exp(-x*x)
";

fn main() -> Result<()> {
    let out = std::env::temp_dir().join("quenchlab_run_config");
    let mut cfg = RunConfig::parse_str(CONFIG, &out)?;
    cfg.output_dir = out;
    let summary = run_experiment(&cfg, Command::Simulate, Some(1))?;
    println!("exit code {}", summary.exit_code);
    println!("T_est {}", summary.report["T_est"]);
    println!("regime {}", summary.report["regime_observed"]);
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    println!("manifest {}", summary.manifest.display());
    Ok(())
}
