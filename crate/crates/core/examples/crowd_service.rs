//! Drive a campaign in-process: workers open assignments, answer with a
//! simulated observer, and the export is printed. With `--serve` the same
//! campaign is exposed over HTTP instead.
//!
//!     cargo run --example crowd_service
//!     cargo run --example crowd_service -- --serve 127.0.0.1:8080

use std::sync::Arc;

use chrono::{Duration, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use aic3::design::{generate_design, DesignConfig};
use aic3::responses::QuestionIndex;
use aic3::service::http::{serve, AppState};
use aic3::service::{Campaign, CampaignConfig, Submission};
use aic3::sim::{simulate_response, GroundTruth};
use aic3::stimulus::Protocol;

fn main() -> aic3::Result<()> {
    let cfg = DesignConfig::paper();
    let design = generate_design(&cfg, Protocol::Ptc)?;
    let campaign = Campaign::new(design.clone(), CampaignConfig::for_protocol(Protocol::Ptc))?;

    let args: Vec<String> = std::env::args().collect();
    if let Some(i) = args.iter().position(|a| a == "--serve") {
        let addr = args.get(i + 1).map_or("127.0.0.1:8080", String::as_str).parse().expect("socket address");
        let state = AppState {
            campaign: Arc::new(campaign),
            stimulus_root: std::env::temp_dir(),
        };
        return tokio::runtime::Runtime::new()?.block_on(serve(addr, state));
    }

    let truth = GroundTruth::linear(&cfg.sources, &cfg.codecs, 0.25);
    let index = QuestionIndex::new([&design]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut now = Utc::now();
    for w in 0..3 {
        let a = campaign.open_assignment(&format!("worker{w}"), now)?;
        while let Some(next) = campaign.next_question(&a.assignment_id, now)? {
            let (q, _) = index.get(&next.question_id).expect("question of the design");
            let sub = Submission {
                question_id: next.question_id,
                answer: simulate_response(q, &truth, &mut rng)?,
                response_time_ms: 4000,
                toggled_count: 2,
            };
            now += Duration::seconds(4);
            campaign.submit_response(&a.assignment_id, &sub, now)?;
        }
        let done = campaign.assignment(&a.assignment_id, now)?;
        println!("{} answered {} questions ({:?})", done.assignment_id, done.answered, done.state);
    }
    let csv = String::from_utf8(campaign.export_csv()?).expect("utf-8 export");
    for line in csv.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
