//! Run design, simulation and analysis from a TOML config, then verify the
//! outputs against the run manifest.
//!
//!     cargo run --release --example run_pipeline -- /tmp/run

use std::path::PathBuf;

use aic3::pipeline::{run_pipeline, verify_run, PipelineConfig};

const CONFIG: &str = r#"
seed = 11
stages = ["design", "simulate", "analyze"]

[simulate]
workers = { btc = 60, ptc = 60 }

[analysis]
bootstrap_replicates = 100
"#;

fn main() -> aic3::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("aic3-run"));
    let mut cfg: PipelineConfig = toml::from_str(CONFIG)?;
    cfg.out_dir = out;
    let result = run_pipeline(&cfg)?;
    println!("run {}", result.manifest.run_id);
    for o in &result.outputs {
        println!("  {}", o.display());
    }
    let modified = verify_run(&cfg.out_dir)?;
    println!("modified outputs: {modified:?}");
    Ok(())
}
