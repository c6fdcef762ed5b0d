//! Reconstruct per-source JND scales from simulated answers and compare them
//! with the planted values.

use aic3::analysis::bootstrap::estimate;
use aic3::analysis::counts::tally_responses;
use aic3::analysis::thurstone::ReconstructOptions;
use aic3::design::{generate_design, DesignConfig};
use aic3::responses::QuestionIndex;
use aic3::sim::{simulate_campaign, CampaignSim, GroundTruth};
use aic3::stimulus::Protocol;

fn main() -> aic3::Result<()> {
    let cfg = DesignConfig::paper();
    let design = generate_design(&cfg, Protocol::Ptc)?;
    let truth = GroundTruth::from_fn(&cfg.sources, &cfg.codecs, |_, c, l| {
        // one codec degrades faster than the rest
        let rate = if c == cfg.codecs[0] { 0.35 } else { 0.25 };
        rate * f64::from(l)
    });
    let rows = simulate_campaign(&design, &truth, &CampaignSim::new(300, 4))?.rows;
    let index = QuestionIndex::new([&design]);
    let responses = index.join(&rows)?;
    let est = estimate(&tally_responses(&responses), &ReconstructOptions::default(), None)?;

    let source = &cfg.sources[0];
    println!("{:<24} {:>8} {:>8}", "stimulus", "planted", "fitted");
    for (key, v) in est.jnd[&Protocol::Ptc].iter().filter(|(k, _)| &k.source_id == source) {
        println!("{:<24} {:>8.3} {:>8.3}", key.to_string(), truth.scale(key, Protocol::Ptc)?, v);
    }
    println!("log-likelihood {:.1}", est.log_likelihood[&Protocol::Ptc]);
    Ok(())
}
