//! Remove unreliable batch instances with trap questions and test for
//! left/right bias before and after filtering.

use aic3::analysis::bias::bias_report;
use aic3::analysis::filter::{filter_batches, DEFAULT_THRESHOLD};
use aic3::design::{generate_design, DesignConfig};
use aic3::responses::QuestionIndex;
use aic3::sim::{simulate_campaign, CampaignSim, GroundTruth, ObserverProfile, ReliabilityMix};
use aic3::stimulus::Protocol;

fn main() -> aic3::Result<()> {
    let cfg = DesignConfig::paper();
    let design = generate_design(&cfg, Protocol::Btc)?;
    let truth = GroundTruth::linear(&cfg.sources, &cfg.codecs, 0.5);
    let sim = CampaignSim {
        mix: ReliabilityMix {
            unreliable_fraction: 0.3,
            unreliable: ObserverProfile {
                lapse_rate: 0.9,
                lapse_weights: [0.2, 0.6, 0.2],
            },
        },
        ..CampaignSim::new(100, 5)
    };
    let campaign = simulate_campaign(&design, &truth, &sim)?;
    let index = QuestionIndex::new([&design]);
    let all = index.join(&campaign.rows)?;
    let (kept, report) = filter_batches(&all, DEFAULT_THRESHOLD)?;
    println!(
        "kept {} of {} batch instances ({} workers of {})",
        report.kept_instances, report.instances.len(), report.workers_after, report.workers_before
    );
    let bias = bias_report(&all, &kept, 0.05);
    for (when, t) in [("before", &bias.before_filtering), ("after", &bias.after_filtering)] {
        println!("{when:<6} left {:>4} right {:>4} p = {:.3e} biased: {}", t.left, t.right, t.p_value, t.biased);
    }
    Ok(())
}
