//! Per-question response resampling and percentile confidence intervals.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::align::{fit_alignment, AlignmentModel, Granularity};
use super::counts::{ComparisonCounts, Tally};
use super::thurstone::{reconstruct_scales, to_jnd, ReconstructOptions};
use crate::design::TripletQuestion;
use crate::error::{Error, Result};
use crate::stimulus::{Protocol, StimulusKey};

pub const MIN_REPLICATES: usize = 100;

/// One row of the scale output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleResult {
    pub source_id: String,
    pub codec_id: String,
    pub level: u8,
    pub protocol: Protocol,
    /// Boosted scale mapped onto the plain scale.
    pub aligned: bool,
    pub scale_jnd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ScaleResult {
    pub fn key(&self) -> StimulusKey {
        StimulusKey {
            source_id: self.source_id.clone(),
            codec_id: self.codec_id.clone(),
            level: self.level,
        }
    }
}

/// Scale of one stimulus under one protocol, optionally aligned.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScaleSlot {
    pub key: StimulusKey,
    pub protocol: Protocol,
    pub aligned: bool,
}

/// Point estimates of one fit of the full model.
#[derive(Debug, Clone)]
pub struct Estimate {
    /// JND scales per protocol, references included.
    pub jnd: BTreeMap<Protocol, BTreeMap<StimulusKey, f64>>,
    /// Thurstone-unit scales, used to warm-start replicates.
    pub thurstone: BTreeMap<Protocol, BTreeMap<StimulusKey, f64>>,
    pub counts: BTreeMap<Protocol, Vec<ComparisonCounts>>,
    pub free_parameters: BTreeMap<Protocol, usize>,
    pub log_likelihood: BTreeMap<Protocol, f64>,
}

impl Estimate {
    pub fn protocol_jnd(&self, protocol: Protocol) -> Option<&BTreeMap<StimulusKey, f64>> {
        self.jnd.get(&protocol)
    }
}

/// Reconstruct every source of every protocol present in `tallies`.
pub fn estimate(
    tallies: &[(&TripletQuestion, Tally)],
    options: &ReconstructOptions,
    warm: Option<&BTreeMap<Protocol, BTreeMap<StimulusKey, f64>>>,
) -> Result<Estimate> {
    let mut by_source: BTreeMap<(Protocol, &str), Vec<(&TripletQuestion, Tally)>> = BTreeMap::new();
    for &(q, t) in tallies {
        by_source.entry((q.protocol, q.source_id.as_str())).or_default().push((q, t));
    }
    let mut est = Estimate {
        jnd: BTreeMap::new(),
        thurstone: BTreeMap::new(),
        counts: BTreeMap::new(),
        free_parameters: BTreeMap::new(),
        log_likelihood: BTreeMap::new(),
    };
    for ((protocol, source), group) in by_source {
        let counts = ComparisonCounts::from_tallies(source, group);
        if counts.stimuli.is_empty() {
            continue;
        }
        let mut opts = options.clone();
        if let Some(w) = warm.and_then(|w| w.get(&protocol)) {
            opts.start = Some(counts.stimuli.iter().map(|k| w.get(k).copied().unwrap_or(0.0)).collect());
        }
        let rec = reconstruct_scales(&counts, &opts)?;
        *est.free_parameters.entry(protocol).or_default() += rec.free_parameters();
        *est.log_likelihood.entry(protocol).or_default() += rec.log_likelihood;
        let jnd = est.jnd.entry(protocol).or_default();
        let th = est.thurstone.entry(protocol).or_default();
        for (k, v) in rec.scales {
            jnd.insert(k.clone(), to_jnd(v));
            th.insert(k, v);
        }
        est.counts.entry(protocol).or_default().push(counts);
    }
    Ok(est)
}

/// Values of `slots` under an estimate and optional alignment.
pub fn slot_values(slots: &[ScaleSlot], est: &Estimate, alignment: Option<&AlignmentModel>) -> Result<Vec<f64>> {
    slots
        .iter()
        .map(|slot| {
            let v = est
                .jnd
                .get(&slot.protocol)
                .and_then(|m| m.get(&slot.key))
                .copied()
                .ok_or_else(|| Error::analysis(format!("no {} scale for {}", slot.protocol, slot.key)))?;
            if slot.aligned {
                alignment
                    .ok_or_else(|| Error::analysis("aligned scale requested without alignment"))?
                    .apply(&slot.key, v)
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Draw a resample of `tally.total()` answers from its own answer proportions.
pub fn resample_tally<R: rand::Rng>(tally: Tally, rng: &mut R) -> Tally {
    let n = u64::from(tally.total());
    if n == 0 {
        return tally;
    }
    let left = draw_binomial(n, f64::from(tally.left) / n as f64, rng);
    let rest = n - left;
    let other = f64::from(tally.right) + f64::from(tally.not_sure);
    let right = if other > 0.0 {
        draw_binomial(rest, f64::from(tally.right) / other, rng)
    } else {
        0
    };
    Tally {
        left: left as u32,
        right: right as u32,
        not_sure: (rest - right) as u32,
    }
}

fn draw_binomial<R: rand::Rng>(n: u64, p: f64, rng: &mut R) -> u64 {
    if p <= 0.0 || n == 0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Two-sided coverage of the percentile interval.
    pub level: f64,
    /// Largest tolerated fraction of failed replicates.
    pub max_failure_fraction: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 10_000,
            seed: 0,
            level: 0.95,
            max_failure_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDiagnostics {
    pub replicates: usize,
    pub failed: usize,
    /// First few failure messages.
    pub failures: Vec<String>,
}

/// Lower and upper interval bounds per slot plus diagnostics.
pub struct Intervals {
    pub bounds: Vec<(f64, f64)>,
    pub diagnostics: BootstrapDiagnostics,
}

/// Replicate generator of one slot vector.
fn replicate(
    r: usize,
    tallies: &[(&TripletQuestion, Tally)],
    slots: &[ScaleSlot],
    point: &Estimate,
    granularity: Option<Granularity>,
    options: &ReconstructOptions,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64 + 1);
    let resampled: Vec<(&TripletQuestion, Tally)> = tallies.iter().map(|&(q, t)| (q, resample_tally(t, &mut rng))).collect();
    let est = estimate(&resampled, options, Some(&point.thurstone))?;
    let alignment = match granularity {
        Some(g) => Some(fit_alignment(
            est.protocol_jnd(Protocol::Btc).ok_or_else(|| Error::analysis("replicate lost boosted scales"))?,
            est.protocol_jnd(Protocol::Ptc).ok_or_else(|| Error::analysis("replicate lost plain scales"))?,
            g,
            None,
        )?),
        None => None,
    };
    slot_values(slots, &est, alignment.as_ref())
}

/// Percentile intervals for `slots`. Replicates run in parallel, each with its
/// own RNG stream, and are combined in replicate order.
pub fn bootstrap_intervals(
    tallies: &[(&TripletQuestion, Tally)],
    slots: &[ScaleSlot],
    point: &Estimate,
    granularity: Option<Granularity>,
    options: &ReconstructOptions,
    config: &BootstrapConfig,
) -> Result<Intervals> {
    if config.replicates < MIN_REPLICATES {
        return Err(Error::invalid(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
            config.replicates
        )));
    }
    if !(0.0 < config.level && config.level < 1.0) {
        return Err(Error::invalid(format!("interval level {} outside (0, 1)", config.level)));
    }
    let results: Vec<Result<Vec<f64>>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| replicate(r, tallies, slots, point, granularity, options, config.seed))
        .collect();

    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(config.replicates); slots.len()];
    let mut failures = Vec::new();
    let mut failed = 0;
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(values) => {
                for (col, v) in columns.iter_mut().zip(values) {
                    col.push(v);
                }
            }
            Err(e) => {
                failed += 1;
                if failures.len() < 10 {
                    failures.push(format!("replicate {r}: {e}"));
                }
                log::warn!("bootstrap replicate {r} dropped: {e}");
            }
        }
    }
    if failed as f64 > config.max_failure_fraction * config.replicates as f64 {
        return Err(Error::analysis(format!(
            "{failed} of {} bootstrap replicates failed (first: {})",
            config.replicates,
            failures.first().map(String::as_str).unwrap_or("")
        )));
    }
    let tail = 100.0 * (1.0 - config.level) / 2.0;
    let bounds = columns
        .into_iter()
        .map(|mut col| {
            col.sort_by(f64::total_cmp);
            (percentile(&col, tail), percentile(&col, 100.0 - tail))
        })
        .collect();
    Ok(Intervals {
        bounds,
        diagnostics: BootstrapDiagnostics {
            replicates: config.replicates,
            failed,
            failures,
        },
    })
}

/// Linear-interpolation percentile of sorted data, `p` in [0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::QuestionKind;
    use crate::stimulus::Stimulus;
    use rand::Rng;

    #[test]
    fn percentile_matches_hand_values() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert_eq!(percentile(&v, 100.0), 5.0);
        assert!((percentile(&v, 2.5) - 1.1).abs() < 1e-12);
        assert!((percentile(&v, 97.5) - 4.9).abs() < 1e-12);
    }

    #[test]
    fn resample_preserves_total_and_degenerate_tallies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Tally {
            left: 7,
            right: 2,
            not_sure: 1,
        };
        for _ in 0..200 {
            assert_eq!(resample_tally(t, &mut rng).total(), 10);
        }
        let all_left = Tally {
            left: 9,
            right: 0,
            not_sure: 0,
        };
        assert_eq!(resample_tally(all_left, &mut rng), all_left);
    }

    #[test]
    fn resample_proportions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = Tally {
            left: 5,
            right: 3,
            not_sure: 2,
        };
        let (mut l, mut r, mut ns) = (0u64, 0u64, 0u64);
        for _ in 0..20_000 {
            let s = resample_tally(t, &mut rng);
            l += u64::from(s.left);
            r += u64::from(s.right);
            ns += u64::from(s.not_sure);
        }
        let n = 200_000.0;
        assert!((l as f64 / n - 0.5).abs() < 0.005);
        assert!((r as f64 / n - 0.3).abs() < 0.005);
        assert!((ns as f64 / n - 0.2).abs() < 0.005);
    }

    fn chain_questions() -> Vec<TripletQuestion> {
        let mut qs = Vec::new();
        for (a, b) in [(0u8, 2u8), (2, 4), (0, 4), (4, 6), (2, 6)] {
            let (ka, kb) = (StimulusKey::at_level("s", "c", a), StimulusKey::at_level("s", "c", b));
            qs.push(TripletQuestion {
                question_id: format!("q{a}{b}"),
                source_id: "s".into(),
                left: Stimulus::in_store(&kb, Protocol::Ptc),
                right: Stimulus::in_store(&ka, Protocol::Ptc),
                kind: QuestionKind::SameCodec,
                protocol: Protocol::Ptc,
            });
        }
        qs
    }

    fn slots_of(est: &Estimate) -> Vec<ScaleSlot> {
        est.jnd[&Protocol::Ptc]
            .keys()
            .filter(|k| !k.is_source())
            .map(|k| ScaleSlot {
                key: k.clone(),
                protocol: Protocol::Ptc,
                aligned: false,
            })
            .collect()
    }

    fn run(tallies: &[(&TripletQuestion, Tally)], seed: u64, n: usize) -> Vec<(f64, f64)> {
        let opts = ReconstructOptions::default();
        let point = estimate(tallies, &opts, None).unwrap();
        let cfg = BootstrapConfig {
            replicates: n,
            seed,
            ..BootstrapConfig::default()
        };
        bootstrap_intervals(tallies, &slots_of(&point), &point, None, &opts, &cfg)
            .unwrap()
            .bounds
    }

    #[test]
    fn identical_answers_give_zero_width() {
        let qs = chain_questions();
        let tallies: Vec<_> = qs
            .iter()
            .map(|q| {
                (
                    q,
                    Tally {
                        left: 30,
                        right: 0,
                        not_sure: 0,
                    },
                )
            })
            .collect();
        for (lo, hi) in run(&tallies, 1, 100) {
            assert_eq!(lo, hi);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let qs = chain_questions();
        let tallies: Vec<_> = qs
            .iter()
            .map(|q| {
                (
                    q,
                    Tally {
                        left: 22,
                        right: 6,
                        not_sure: 2,
                    },
                )
            })
            .collect();
        let a = run(&tallies, 9, 200);
        let b = run(&tallies, 9, 200);
        assert_eq!(a, b);
        let c = run(&tallies, 10, 200);
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_replicates_rejected() {
        let qs = chain_questions();
        let tallies: Vec<_> = qs.iter().map(|q| (q, Tally { left: 3, right: 1, not_sure: 0 })).collect();
        let opts = ReconstructOptions::default();
        let point = estimate(&tallies, &opts, None).unwrap();
        let cfg = BootstrapConfig {
            replicates: 10,
            ..BootstrapConfig::default()
        };
        assert!(matches!(
            bootstrap_intervals(&tallies, &slots_of(&point), &point, None, &opts, &cfg),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn width_shrinks_with_more_responses() {
        // binomial draws at Φ(0.6745·Δ) for planted scales 0, 1, 2, 3 JND
        let qs = chain_questions();
        let planted = |l: u8| f64::from(l) / 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let median_width = |n: u32, rng: &mut ChaCha8Rng| {
            let tallies: Vec<_> = qs
                .iter()
                .map(|q| {
                    let d = planted(q.left.level) - planted(q.right.level);
                    let p = crate::analysis::normal::cdf(0.6744897501960817 * d);
                    let left = (0..n).filter(|_| rng.random::<f64>() < p).count() as u32;
                    (
                        q,
                        Tally {
                            left,
                            right: n - left,
                            not_sure: 0,
                        },
                    )
                })
                .collect();
            let mut w: Vec<f64> = run(&tallies, 4, 400).iter().map(|(l, h)| h - l).collect();
            w.sort_by(f64::total_cmp);
            w[w.len() / 2]
        };
        let (mut r_sum, reps) = (0.0, 6);
        for _ in 0..reps {
            r_sum += median_width(400, &mut rng) / median_width(200, &mut rng);
        }
        let ratio = r_sum / f64::from(reps);
        assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.2 * std::f64::consts::FRAC_1_SQRT_2, "{ratio}");
    }
}
