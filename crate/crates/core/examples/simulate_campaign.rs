//! Simulate a crowdsourcing campaign against planted scales and write the
//! response export as CSV to stdout.
//!
//!     cargo run --example simulate_campaign > responses.csv

use std::io::stdout;

use aic3::design::{generate_design, DesignConfig};
use aic3::responses::write_csv;
use aic3::sim::{simulate_campaign, BoostGain, CampaignSim, GroundTruth, ObserverProfile, ReliabilityMix};
use aic3::stimulus::Protocol;

fn main() -> aic3::Result<()> {
    let cfg = DesignConfig::paper();
    let design = generate_design(&cfg, Protocol::Ptc)?;
    let truth = GroundTruth::linear(&cfg.sources, &cfg.codecs, 0.25).with_uniform_gain(BoostGain { a: 2.0, b: 0.0 });
    let sim = CampaignSim {
        mix: ReliabilityMix {
            unreliable_fraction: 0.2,
            unreliable: ObserverProfile::uniform(0.8),
        },
        ..CampaignSim::new(40, 9)
    };
    let campaign = simulate_campaign(&design, &truth, &sim)?;
    eprintln!(
        "{} responses from {} workers, {} of them unreliable",
        campaign.rows.len(),
        sim.n_workers,
        campaign.unreliable_workers.len()
    );
    write_csv(stdout().lock(), &campaign.rows)
}
