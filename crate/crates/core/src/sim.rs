//! Synthetic observers answering triplet questions under a Thurstone
//! Case V model with planted impairment scales.
//!
//! A simulated observer perceives `d ~ N(Φ⁻¹(0.75)·(s_left − s_right), 1)`
//! with scales in JND units, answers "not sure" when `|d|` falls inside the
//! indecision band and otherwise names the side with the larger impairment.
//! With probability `lapse_rate` the answer is replaced by a random one.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::normal::PHI_INV_075;
use crate::design::{Design, TripletQuestion};
use crate::error::{Error, Result};
use crate::responses::{Answer, ResponseRecord, ResponseRow};
use crate::stimulus::{Protocol, StimulusKey, SOURCE_CODEC};

/// Quadratic gain `boosted = a·plain + b·plain²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostGain {
    pub a: f64,
    pub b: f64,
}

impl BoostGain {
    pub const IDENTITY: BoostGain = BoostGain { a: 1.0, b: 0.0 };

    pub fn apply(&self, plain: f64) -> f64 {
        self.a * plain + self.b * plain * plain
    }
}

/// Planted plain-scale impairments (JND) plus the boosting relationship.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TruthFile", into = "TruthFile")]
pub struct GroundTruth {
    scales: BTreeMap<StimulusKey, f64>,
    gains: BTreeMap<(String, String), BoostGain>,
    pub lapse_rate: f64,
    /// Half-width of the indecision band, in JND.
    pub not_sure_band: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TruthFile {
    scales: Vec<ScaleEntry>,
    #[serde(default)]
    boost_gains: Vec<GainEntry>,
    #[serde(default)]
    lapse_rate: f64,
    #[serde(default = "default_band")]
    not_sure_band: f64,
}

fn default_band() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScaleEntry {
    source_id: String,
    codec_id: String,
    level: u8,
    jnd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GainEntry {
    source_id: String,
    codec_id: String,
    a: f64,
    b: f64,
}

impl TryFrom<TruthFile> for GroundTruth {
    type Error = Error;

    fn try_from(f: TruthFile) -> Result<Self> {
        let mut scales = BTreeMap::new();
        for e in f.scales {
            let key = StimulusKey::new(e.source_id, e.codec_id, e.level)?;
            scales.insert(key, e.jnd);
        }
        let gains = f
            .boost_gains
            .into_iter()
            .map(|g| ((g.source_id, g.codec_id), BoostGain { a: g.a, b: g.b }))
            .collect();
        let truth = GroundTruth {
            scales,
            gains,
            lapse_rate: f.lapse_rate,
            not_sure_band: f.not_sure_band,
        };
        truth.validate()?;
        Ok(truth)
    }
}

impl From<GroundTruth> for TruthFile {
    fn from(t: GroundTruth) -> Self {
        TruthFile {
            scales: t
                .scales
                .into_iter()
                .map(|(k, jnd)| ScaleEntry {
                    source_id: k.source_id,
                    codec_id: k.codec_id,
                    level: k.level,
                    jnd,
                })
                .collect(),
            boost_gains: t
                .gains
                .into_iter()
                .map(|((source_id, codec_id), g)| GainEntry {
                    source_id,
                    codec_id,
                    a: g.a,
                    b: g.b,
                })
                .collect(),
            lapse_rate: t.lapse_rate,
            not_sure_band: t.not_sure_band,
        }
    }
}

impl GroundTruth {
    /// Plain impairment from `scale(source, codec, level)` for every level in
    /// 1..=10, identity boost, no lapses and the default indecision band.
    pub fn from_fn(sources: &[String], codecs: &[String], mut scale: impl FnMut(&str, &str, u8) -> f64) -> Self {
        let mut scales = BTreeMap::new();
        for s in sources {
            scales.insert(StimulusKey::source(s), 0.0);
            for c in codecs {
                for level in 1..=crate::stimulus::MAX_LEVEL {
                    scales.insert(StimulusKey::at_level(s, c, level), scale(s, c, level));
                }
            }
        }
        GroundTruth {
            scales,
            gains: BTreeMap::new(),
            lapse_rate: 0.0,
            not_sure_band: default_band(),
        }
    }

    /// Equally spaced levels, `jnd_per_level` apart.
    pub fn linear(sources: &[String], codecs: &[String], jnd_per_level: f64) -> Self {
        Self::from_fn(sources, codecs, |_, _, l| jnd_per_level * f64::from(l))
    }

    pub fn with_gain(mut self, source_id: &str, codec_id: &str, gain: BoostGain) -> Self {
        self.gains.insert((source_id.to_string(), codec_id.to_string()), gain);
        self
    }

    /// Same gain for every (source, codec) that has planted scales.
    pub fn with_uniform_gain(mut self, gain: BoostGain) -> Self {
        let pairs: BTreeSet<_> = self
            .scales
            .keys()
            .filter(|k| !k.is_source())
            .map(|k| (k.source_id.clone(), k.codec_id.clone()))
            .collect();
        for p in pairs {
            self.gains.insert(p, gain);
        }
        self
    }

    pub fn with_lapse_rate(mut self, lapse_rate: f64) -> Self {
        self.lapse_rate = lapse_rate;
        self
    }

    pub fn with_not_sure_band(mut self, band: f64) -> Self {
        self.not_sure_band = band;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lapse_rate) {
            return Err(Error::invalid("lapse_rate must lie in [0, 1]"));
        }
        if self.not_sure_band.is_nan() || self.not_sure_band < 0.0 {
            return Err(Error::invalid("not_sure_band must be non-negative"));
        }
        for (k, v) in &self.scales {
            if k.is_source() && *v != 0.0 {
                return Err(Error::invalid(format!("source {} must have scale 0", k.source_id)));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite scale for {k}")));
            }
        }
        Ok(())
    }

    pub fn gain(&self, source_id: &str, codec_id: &str) -> BoostGain {
        self.gains
            .get(&(source_id.to_string(), codec_id.to_string()))
            .copied()
            .unwrap_or(BoostGain::IDENTITY)
    }

    pub fn gains(&self) -> impl Iterator<Item = (&(String, String), &BoostGain)> {
        self.gains.iter()
    }

    pub fn stimuli(&self) -> impl Iterator<Item = (&StimulusKey, f64)> {
        self.scales.iter().map(|(k, v)| (k, *v))
    }

    pub fn plain_scale(&self, key: &StimulusKey) -> Result<f64> {
        if key.is_source() {
            return Ok(0.0);
        }
        self.scales
            .get(key)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no planted scale for {key}")))
    }

    /// Impairment seen under `protocol`, in JND.
    pub fn scale(&self, key: &StimulusKey, protocol: Protocol) -> Result<f64> {
        let plain = self.plain_scale(key)?;
        Ok(match protocol {
            Protocol::Ptc => plain,
            Protocol::Btc if key.codec_id == SOURCE_CODEC => 0.0,
            Protocol::Btc => self.gain(&key.source_id, &key.codec_id).apply(plain),
        })
    }
}

/// Lapse behaviour of one simulated worker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverProfile {
    pub lapse_rate: f64,
    /// Relative weights of left, right and not-sure on a lapse.
    pub lapse_weights: [f64; 3],
}

impl ObserverProfile {
    pub fn uniform(lapse_rate: f64) -> Self {
        ObserverProfile {
            lapse_rate,
            lapse_weights: [1.0, 1.0, 1.0],
        }
    }

    fn lapse_answer(&self, rng: &mut impl Rng) -> Answer {
        let total: f64 = self.lapse_weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (w, a) in self.lapse_weights.iter().zip(Answer::ALL) {
            if u < *w {
                return a;
            }
            u -= w;
        }
        Answer::NotSure
    }
}

/// Draw one answer from an observer with `truth`'s band and `observer`'s lapses.
pub fn simulate_response_with(
    question: &TripletQuestion,
    truth: &GroundTruth,
    observer: &ObserverProfile,
    rng: &mut impl Rng,
) -> Result<Answer> {
    let sl = truth.scale(&question.left_key(), question.protocol)?;
    let sr = truth.scale(&question.right_key(), question.protocol)?;
    let noise: f64 = rng.sample(StandardNormal);
    let d = PHI_INV_075 * (sl - sr) + noise;
    let answer = if d.abs() < truth.not_sure_band * PHI_INV_075 {
        Answer::NotSure
    } else if d > 0.0 {
        Answer::Left
    } else {
        Answer::Right
    };
    if observer.lapse_rate > 0.0 && rng.random::<f64>() < observer.lapse_rate {
        return Ok(observer.lapse_answer(rng));
    }
    Ok(answer)
}

/// One answer from a standard observer of `truth` (uniform lapses).
pub fn simulate_response(question: &TripletQuestion, truth: &GroundTruth, rng: &mut impl Rng) -> Result<Answer> {
    simulate_response_with(question, truth, &ObserverProfile::uniform(truth.lapse_rate), rng)
}

/// Share and behaviour of unreliable workers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityMix {
    pub unreliable_fraction: f64,
    pub unreliable: ObserverProfile,
}

impl ReliabilityMix {
    pub fn all_reliable() -> Self {
        ReliabilityMix {
            unreliable_fraction: 0.0,
            unreliable: ObserverProfile::uniform(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSim {
    pub n_workers: usize,
    /// Batches per worker (1 or 2 in crowdsourced campaigns).
    pub batches_per_worker: usize,
    pub mix: ReliabilityMix,
    pub seed: u64,
    pub start: DateTime<Utc>,
}

impl CampaignSim {
    pub fn new(n_workers: usize, seed: u64) -> Self {
        CampaignSim {
            n_workers,
            batches_per_worker: 1,
            mix: ReliabilityMix::all_reliable(),
            seed,
            start: DateTime::parse_from_rfc3339("2024-01-15T09:00:00Z")
                .expect("valid timestamp")
                .with_timezone(&Utc),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedCampaign {
    pub rows: Vec<ResponseRow>,
    pub unreliable_workers: BTreeSet<String>,
    /// Batches answered by each worker.
    pub assignments: BTreeMap<String, Vec<String>>,
}

pub fn worker_id(index: usize) -> String {
    format!("W{:05}", index + 1)
}

/// Simulate every worker answering all questions of their batches, in a
/// per-worker random order. Batches are handed out cyclically so that their
/// coverage is as even as possible.
pub fn simulate_campaign(design: &Design, truth: &GroundTruth, sim: &CampaignSim) -> Result<SimulatedCampaign> {
    truth.validate()?;
    let nb = design.batches.len();
    if design.is_empty() || nb == 0 {
        return Err(Error::invalid("empty design"));
    }
    if sim.batches_per_worker == 0 || sim.batches_per_worker > nb {
        return Err(Error::invalid(format!(
            "batches_per_worker must lie in 1..={nb}, got {}",
            sim.batches_per_worker
        )));
    }
    if !(0.0..=1.0).contains(&sim.mix.unreliable_fraction) {
        return Err(Error::invalid("unreliable_fraction must lie in [0, 1]"));
    }
    let mut picker = ChaCha8Rng::seed_from_u64(sim.seed);
    let mut order: Vec<usize> = (0..sim.n_workers).collect();
    order.shuffle(&mut picker);
    let n_bad = (sim.mix.unreliable_fraction * sim.n_workers as f64).round() as usize;
    let bad: BTreeSet<usize> = order[..n_bad].iter().copied().collect();
    let reliable = ObserverProfile::uniform(truth.lapse_rate);

    let per_worker: Vec<(Vec<String>, Vec<ResponseRow>)> = (0..sim.n_workers)
        .into_par_iter()
        .map(|w| -> Result<_> {
            let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
            rng.set_stream(w as u64 + 1);
            let profile = if bad.contains(&w) { sim.mix.unreliable } else { reliable };
            let batches: Vec<_> = (0..sim.batches_per_worker)
                .map(|j| &design.batches[(w * sim.batches_per_worker + j) % nb])
                .collect();
            let mut items: Vec<(&TripletQuestion, &str)> = batches
                .iter()
                .flat_map(|b| b.questions.iter().map(move |q| (q, b.batch_id.as_str())))
                .collect();
            items.shuffle(&mut rng);

            let worker = worker_id(w);
            let mut clock = sim.start + Duration::hours(w as i64);
            let window = design.protocol.response_window_ms();
            let mut rows = Vec::with_capacity(items.len());
            for (q, batch_id) in items {
                let answer = simulate_response_with(q, truth, &profile, &mut rng)?;
                let response_time_ms = rng.random_range(400..window * 3 / 4);
                let toggled_count = match design.protocol {
                    Protocol::Btc => 0,
                    Protocol::Ptc => rng.random_range(1..=6),
                };
                clock += Duration::milliseconds(response_time_ms as i64);
                let rec = ResponseRecord {
                    question_id: q.question_id.clone(),
                    worker_id: worker.clone(),
                    batch_id: batch_id.to_string(),
                    answer,
                    response_time_ms,
                    toggled_count,
                    submitted_at: clock,
                };
                rows.push(rec.to_row(q));
            }
            Ok((batches.iter().map(|b| b.batch_id.clone()).collect(), rows))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut assignments = BTreeMap::new();
    for (w, (batches, r)) in per_worker.into_iter().enumerate() {
        assignments.insert(worker_id(w), batches);
        rows.extend(r);
    }
    Ok(SimulatedCampaign {
        rows,
        unreliable_workers: bad.into_iter().map(worker_id).collect(),
        assignments,
    })
}
