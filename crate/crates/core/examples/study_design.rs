//! Generate both triplet designs and print their composition.
//!
//!     cargo run --example study_design -- [seed]

use aic3::design::{generate_design, DesignConfig, QuestionKind};
use aic3::stimulus::Protocol;

fn main() -> aic3::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = DesignConfig { rng_seed: seed, ..DesignConfig::paper() };
    for protocol in Protocol::ALL {
        let design = generate_design(&cfg, protocol)?;
        println!("{protocol}: {} questions", design.len());
        for kind in [QuestionKind::SameCodec, QuestionKind::CrossCodec, QuestionKind::Bias, QuestionKind::Trap] {
            println!("  {kind:<12} {}", design.count_kind(kind));
        }
        let b = &design.batches[0];
        println!("  {} batches, first is {} with {} questions", design.batches.len(), b.batch_id, b.questions.len());
        let q = &b.questions[0];
        println!("  e.g. {} [{}] {} vs {}", q.question_id, q.kind, q.left_key(), q.right_key());
    }
    Ok(())
}
