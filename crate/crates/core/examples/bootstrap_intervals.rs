//! Full analysis with bootstrap confidence intervals, written to a directory.
//!
//!     cargo run --release --example bootstrap_intervals -- /tmp/analysis 1000

use std::path::PathBuf;

use aic3::analysis::study::{analyze, write_outputs, AnalysisConfig};
use aic3::design::{generate_design, DesignConfig};
use aic3::sim::{simulate_campaign, BoostGain, CampaignSim, GroundTruth};
use aic3::stimulus::Protocol;

fn main() -> aic3::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("aic3-analysis"));
    let replicates = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);

    let cfg = DesignConfig::paper();
    let designs = [generate_design(&cfg, Protocol::Btc)?, generate_design(&cfg, Protocol::Ptc)?];
    let truth = GroundTruth::linear(&cfg.sources, &cfg.codecs, 0.25).with_uniform_gain(BoostGain { a: 2.0, b: 0.0 });
    let mut rows = Vec::new();
    for (i, d) in designs.iter().enumerate() {
        rows.extend(simulate_campaign(d, &truth, &CampaignSim::new(150, i as u64))?.rows);
    }

    let config = AnalysisConfig {
        bootstrap_replicates: replicates,
        seed: 2024,
        ..AnalysisConfig::default()
    };
    let result = analyze(&designs, &rows, &config)?;
    println!("kept {} of {} responses", result.report.kept_responses, result.report.responses);
    for s in result.rows(Protocol::Btc, true).take(10) {
        println!(
            "{:<22} {:>6.3} [{:.3}, {:.3}]  planted {:.3}",
            s.key().to_string(),
            s.scale_jnd,
            s.ci_low,
            s.ci_high,
            truth.plain_scale(&s.key())?
        );
    }
    for p in write_outputs(&out, &result, None)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
