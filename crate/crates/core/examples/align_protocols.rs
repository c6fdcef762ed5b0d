//! Map boosted scales onto plain scales at every granularity and let AIC pick one.

use aic3::analysis::align::{fit_alignment, select_granularity, AicMode, Granularity};
use aic3::analysis::bootstrap::estimate;
use aic3::analysis::counts::tally_responses;
use aic3::analysis::thurstone::ReconstructOptions;
use aic3::design::{generate_design, DesignConfig};
use aic3::responses::QuestionIndex;
use aic3::sim::{simulate_campaign, BoostGain, CampaignSim, GroundTruth};
use aic3::stimulus::Protocol;

fn main() -> aic3::Result<()> {
    let cfg = DesignConfig::paper();
    let btc = generate_design(&cfg, Protocol::Btc)?;
    let ptc = generate_design(&cfg, Protocol::Ptc)?;
    // boosting gains differ per codec only
    let mut truth = GroundTruth::linear(&cfg.sources, &cfg.codecs, 0.25);
    for s in &cfg.sources {
        for (i, c) in cfg.codecs.iter().enumerate() {
            truth = truth.with_gain(s, c, BoostGain { a: 1.6 + 0.2 * i as f64, b: 0.0 });
        }
    }
    let mut rows = simulate_campaign(&btc, &truth, &CampaignSim::new(2000, 1))?.rows;
    rows.extend(simulate_campaign(&ptc, &truth, &CampaignSim::new(2000, 2))?.rows);

    let index = QuestionIndex::new([&btc, &ptc]);
    let responses = index.join(&rows)?;
    let opts = ReconstructOptions::default();
    let est = estimate(&tally_responses(&responses), &opts, None)?;
    let (b, p) = (&est.jnd[&Protocol::Btc], &est.jnd[&Protocol::Ptc]);

    let models = Granularity::ALL
        .iter()
        .map(|&g| fit_alignment(b, p, g, None))
        .collect::<aic3::Result<Vec<_>>>()?;
    let sel = select_granularity(
        &models,
        b,
        &est.counts[&Protocol::Ptc],
        est.free_parameters[&Protocol::Btc],
        AicMode::PlainLikelihood,
        opts.epsilon,
    )?;
    for (m, e) in models.iter().zip(&sel.table) {
        println!("{:<11} k={:<4} rss={:>8.3} lnL={:>11.1} aic={:>10.1}", e.granularity, e.parameters, m.fit.rss, e.log_likelihood, e.aic);
    }
    println!("chosen: {}", sel.chosen);
    let chosen = models.iter().find(|m| m.granularity == sel.chosen).unwrap();
    for (group, q) in chosen.coefficients.iter().take(5) {
        println!("  {group:<10} plain = {:.3} x + {:.4} x^2", q.a, q.b);
    }
    Ok(())
}
