use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use aic3::analysis::align::{fit_alignment, Granularity};
use aic3::analysis::bias::tally_bias;
use aic3::analysis::counts::{sources_of, tally_responses, ComparisonCounts, Tally};
use aic3::analysis::thurstone::{reconstruct_scales, to_jnd, ReconstructOptions};
use aic3::boost::{amplify_artifacts, boost_pair, BoostConfig};
use aic3::design::{generate_design, Design, DesignConfig, QuestionKind, TripletQuestion};
use aic3::raster::RasterImage;
use aic3::responses::{read_csv, write_csv, QuestionIndex};
use aic3::sim::{simulate_campaign, simulate_response, BoostGain, CampaignSim, GroundTruth};
use aic3::stimulus::{Protocol, StimulusKey};

fn image(w: u32, h: u32) -> impl Strategy<Value = RasterImage> {
    proptest::collection::vec(any::<u8>(), (w * h * 3) as usize).prop_map(move |v| RasterImage::new(w, h, v).unwrap())
}

fn truth(band: f64) -> GroundTruth {
    let cfg = DesignConfig::paper();
    GroundTruth::linear(&cfg.sources, &cfg.codecs, 0.25)
        .with_uniform_gain(BoostGain { a: 2.0, b: 0.0 })
        .with_not_sure_band(band)
}

fn reconstruct(counts: &ComparisonCounts) -> BTreeMap<StimulusKey, f64> {
    reconstruct_scales(counts, &ReconstructOptions::default()).unwrap().to_jnd()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn amplify_stays_in_range(s in image(4, 3), d in image(4, 3), factor in 1.0f64..50.0) {
        let out = amplify_artifacts(&s, &d, factor).unwrap();
        prop_assert_eq!(out.dimensions(), (4, 3));
        prop_assert_eq!(out.samples().len(), 36);
    }

    #[test]
    fn boosting_is_deterministic(s in image(6, 4), d in image(6, 4), factor in 1.0f64..4.0, zoom in any::<bool>()) {
        let cfg = BoostConfig { amplification_factor: factor, zoom_enabled: zoom, lanczos_taps: 3 };
        prop_assert_eq!(boost_pair(&s, &d, &cfg).unwrap(), boost_pair(&s, &d, &cfg).unwrap());
    }

    #[test]
    fn design_invariants_hold_for_any_seed(seed in any::<u64>(), ptc in any::<bool>()) {
        let protocol = if ptc { Protocol::Ptc } else { Protocol::Btc };
        let cfg = DesignConfig { rng_seed: seed, ..DesignConfig::paper() };
        let d = generate_design(&cfg, protocol).unwrap();
        let same = d.count_kind(QuestionKind::SameCodec);
        prop_assert_eq!((same as f64 * cfg.cross_codec_ratio).round() as usize, d.count_kind(QuestionKind::CrossCodec));
        let mut ids = HashSet::new();
        let mut pairs = HashSet::new();
        for q in d.questions() {
            prop_assert!(ids.insert(q.question_id.clone()));
            q.validate().unwrap();
            if matches!(q.kind, QuestionKind::SameCodec | QuestionKind::CrossCodec) {
                prop_assert!(pairs.insert((q.left_key(), q.right_key(), q.kind)));
            }
        }
        for b in &d.batches {
            prop_assert!(b.questions.iter().any(|q| q.kind == QuestionKind::Trap));
        }
        let again = generate_design(&cfg, protocol).unwrap();
        prop_assert_eq!(d.manifest_string().unwrap(), again.manifest_string().unwrap());
    }

    #[test]
    fn per_pair_rss_never_exceeds_coarser(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = DesignConfig::paper();
        let (mut btc, mut ptc) = (BTreeMap::new(), BTreeMap::new());
        for s in &cfg.sources {
            for c in &cfg.codecs {
                for l in 1..=10u8 {
                    let x = 0.5 * f64::from(l) + rng.random_range(-0.3..0.3);
                    btc.insert(StimulusKey::at_level(s, c, l), x);
                    ptc.insert(StimulusKey::at_level(s, c, l), 0.5 * x + rng.random_range(-0.3..0.3));
                }
            }
        }
        let rss = |g| fit_alignment(&btc, &ptc, g, None).unwrap().fit.rss;
        let pair = rss(Granularity::PerPair);
        for g in [Granularity::Global, Granularity::PerSource, Granularity::PerCodec] {
            prop_assert!(pair <= rss(g) + 1e-9);
        }
        prop_assert!(rss(Granularity::PerSource) <= rss(Granularity::Global) + 1e-9);
        prop_assert!(rss(Granularity::PerCodec) <= rss(Granularity::Global) + 1e-9);
    }
}

fn small_campaign(seed: u64) -> (Design, Vec<aic3::responses::ResponseRow>) {
    let d = generate_design(&DesignConfig::paper(), Protocol::Ptc).unwrap();
    let rows = simulate_campaign(&d, &truth(0.2), &CampaignSim::new(20, seed)).unwrap().rows;
    (d, rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn relabeling_sides_leaves_scales_unchanged(seed in any::<u64>()) {
        let (d, rows) = small_campaign(seed);
        let index = QuestionIndex::new([&d]);
        let responses = index.join(&rows).unwrap();
        let tallies = tally_responses(&responses);
        let mirrored: Vec<(TripletQuestion, Tally)> = tallies
            .iter()
            .map(|(q, t)| {
                let mut m = (*q).clone();
                std::mem::swap(&mut m.left, &mut m.right);
                (m, Tally { left: t.right, right: t.left, not_sure: t.not_sure })
            })
            .collect();
        for source in sources_of(&responses, Protocol::Ptc) {
            let a = reconstruct(&ComparisonCounts::from_tallies(&source, tallies.iter().map(|(q, t)| (*q, *t))));
            let b = reconstruct(&ComparisonCounts::from_tallies(&source, mirrored.iter().map(|(q, t)| (q, *t))));
            for (k, v) in &a {
                prop_assert!((v - b[k]).abs() < 1e-9, "{} {} vs {}", k, v, b[k]);
            }
        }
    }

    #[test]
    fn counts_account_for_every_non_bias_response(seed in any::<u64>()) {
        let (d, rows) = small_campaign(seed);
        let index = QuestionIndex::new([&d]);
        let responses = index.join(&rows).unwrap();
        let tallies = tally_responses(&responses);
        let total: f64 = sources_of(&responses, Protocol::Ptc)
            .iter()
            .map(|s| ComparisonCounts::from_tallies(s, tallies.iter().map(|(q, t)| (*q, *t))).total())
            .sum();
        let expected = responses.iter().filter(|r| r.question.kind != QuestionKind::Bias).count();
        prop_assert_eq!(total, expected as f64);
    }

    #[test]
    fn export_round_trip_is_lossless(seed in any::<u64>()) {
        let (d, rows) = small_campaign(seed);
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        prop_assert_eq!(&back, &rows);
        let index = QuestionIndex::new([&d]);
        for r in index.join(&back).unwrap() {
            let (q, _) = index.get(&r.question.question_id).unwrap();
            prop_assert_eq!(q, r.question);
        }
    }
}

#[test]
fn large_sample_recovers_planted_scales() {
    // indecision band off: the split rule only matches the model without it
    let t = truth(0.0);
    let cfg = DesignConfig::paper();
    let d = generate_design(&cfg, Protocol::Btc).unwrap();
    let source = cfg.sources[0].as_str();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tallies = Vec::new();
    for q in d.questions().filter(|q| q.source_id == source && q.kind != QuestionKind::Bias) {
        let mut tally = Tally::default();
        for _ in 0..10_000 {
            tally.add(simulate_response(q, &t, &mut rng).unwrap());
        }
        tallies.push((q, tally));
    }
    let scales = reconstruct(&ComparisonCounts::from_tallies(source, tallies));
    let worst = scales
        .iter()
        .map(|(k, v)| (v - t.scale(k, Protocol::Btc).unwrap()).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.05, "max error {worst}");
}

#[test]
fn simulator_frequencies_match_model() {
    let t = truth(0.0);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let d = generate_design(&DesignConfig::paper(), Protocol::Ptc).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for q in d.questions().filter(|q| q.kind == QuestionKind::SameCodec).step_by(97) {
        let n = 100_000;
        let left = (0..n).filter(|_| simulate_response(q, &t, &mut rng).unwrap() == aic3::responses::Answer::Left).count();
        let dl = t.scale(&q.left_key(), Protocol::Ptc).unwrap() - t.scale(&q.right_key(), Protocol::Ptc).unwrap();
        let model = unit.cdf(aic3::analysis::thurstone::from_jnd(dl));
        assert!((left as f64 / n as f64 - model).abs() <= 0.01, "{}: {} vs {model}", q.question_id, left as f64 / n as f64);
    }
    assert!((to_jnd(aic3::analysis::thurstone::from_jnd(1.3)) - 1.3).abs() < 1e-12);
}

#[test]
fn unbiased_observers_pass_the_symmetry_test() {
    let d = generate_design(&DesignConfig::paper(), Protocol::Btc).unwrap();
    let index = QuestionIndex::new([&d]);
    let runs = 50;
    let mut accepted = 0;
    for seed in 0..runs {
        let rows = simulate_campaign(&d, &truth(0.2), &CampaignSim::new(30, seed)).unwrap().rows;
        let responses = index.join(&rows).unwrap();
        accepted += usize::from(!tally_bias(&responses, 0.05).biased);
    }
    assert!(accepted * 10 >= runs as usize * 9, "{accepted}/{runs} runs accepted");
}
