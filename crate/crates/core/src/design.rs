//! Triplet question generation and batch splitting.
//!
//! A design holds four kinds of questions per protocol: every ordered
//! same-codec pair of levels, a random sample of cross-codec pairs at
//! neighbouring levels, bias questions comparing an image with itself and
//! trap questions comparing the source with the strongest distortion.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stimulus::{Protocol, Stimulus, StimulusKey, MAX_LEVEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    SameCodec,
    CrossCodec,
    Bias,
    Trap,
}

impl QuestionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionKind::SameCodec => "same_codec",
            QuestionKind::CrossCodec => "cross_codec",
            QuestionKind::Bias => "bias",
            QuestionKind::Trap => "trap",
        }
    }
}

impl fmt::Display for QuestionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Two stimuli of one source shown left and right of their shared reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TripletQuestion {
    pub question_id: String,
    pub source_id: String,
    pub left: Stimulus,
    pub right: Stimulus,
    pub kind: QuestionKind,
    pub protocol: Protocol,
}

impl TripletQuestion {
    fn build(protocol: Protocol, kind: QuestionKind, left: StimulusKey, right: StimulusKey, replica: u32) -> Self {
        let question_id = question_id(protocol, kind, &left, &right, replica);
        TripletQuestion {
            question_id,
            source_id: left.source_id.clone(),
            left: Stimulus::in_store(&left, protocol),
            right: Stimulus::in_store(&right, protocol),
            kind,
            protocol,
        }
    }

    pub fn left_key(&self) -> StimulusKey {
        self.left.key()
    }

    pub fn right_key(&self) -> StimulusKey {
        self.right.key()
    }

    /// A same-codec (or trap) comparison of the source against `level`,
    /// returning the codec and whether the distorted image is on the left.
    pub fn source_vs_level(&self) -> Option<(&str, u8, bool)> {
        if !matches!(self.kind, QuestionKind::SameCodec | QuestionKind::Trap) {
            return None;
        }
        match (self.left.level, self.right.level) {
            (0, d) if d > 0 => Some((self.right.codec_id.as_str(), d, false)),
            (d, 0) if d > 0 => Some((self.left.codec_id.as_str(), d, true)),
            _ => None,
        }
    }

    /// Check the structural invariants of the question kind.
    pub fn validate(&self) -> Result<()> {
        self.left.validate()?;
        self.right.validate()?;
        let bad = |msg: &str| Err(Error::design(format!("question {}: {msg}", self.question_id)));
        if self.left.source_id != self.source_id || self.right.source_id != self.source_id {
            return bad("stimuli must share the source");
        }
        match self.kind {
            QuestionKind::Bias if self.left.key() != self.right.key() => bad("bias question must repeat one image"),
            QuestionKind::Trap => {
                let mut levels = [self.left.level, self.right.level];
                levels.sort_unstable();
                if levels != [0, MAX_LEVEL] {
                    return bad("trap must pair level 0 with the strongest level");
                }
                Ok(())
            }
            QuestionKind::CrossCodec if self.left.codec_id == self.right.codec_id => {
                bad("cross-codec question needs two codecs")
            }
            QuestionKind::SameCodec => {
                if self.left.level == self.right.level {
                    return bad("same-codec question needs distinct levels");
                }
                let codecs: HashSet<_> = [&self.left, &self.right]
                    .into_iter()
                    .filter(|s| s.level > 0)
                    .map(|s| s.codec_id.as_str())
                    .collect();
                if codecs.len() > 1 {
                    return bad("same-codec question mixes codecs");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn question_id(protocol: Protocol, kind: QuestionKind, left: &StimulusKey, right: &StimulusKey, replica: u32) -> String {
    let mut h = Sha256::new();
    h.update(
        format!(
            "{protocol}|{kind}|{}|{}|{}|{}|{}|{replica}",
            left.source_id, left.codec_id, left.level, right.codec_id, right.level
        )
        .as_bytes(),
    );
    hex::encode(&h.finalize()[..8])
}

/// How many bias and trap questions a protocol's full design holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckCounts {
    pub bias: usize,
    pub trap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub sources: Vec<String>,
    pub codecs: Vec<String>,
    pub btc_levels: Vec<u8>,
    pub ptc_levels: Vec<u8>,
    pub cross_codec_ratio: f64,
    pub n_batches: usize,
    pub rng_seed: u64,
    pub btc_checks: CheckCounts,
    pub ptc_checks: CheckCounts,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig::paper()
    }
}

impl DesignConfig {
    /// Five sources, five codecs, 11 BTC levels and 6 PTC levels.
    pub fn paper() -> Self {
        DesignConfig {
            sources: ["SRC00002", "SRC00006", "SRC00007", "SRC00009", "SRC00010"]
                .map(String::from)
                .to_vec(),
            codecs: ["jpeg", "jpeg2000", "vvc", "jpegxl", "avif"].map(String::from).to_vec(),
            btc_levels: (0..=MAX_LEVEL).collect(),
            ptc_levels: vec![0, 2, 4, 6, 8, 10],
            cross_codec_ratio: 0.2,
            n_batches: 10,
            rng_seed: 0,
            btc_checks: CheckCounts { bias: 100, trap: 200 },
            ptc_checks: CheckCounts { bias: 50, trap: 100 },
        }
    }

    pub fn levels(&self, protocol: Protocol) -> &[u8] {
        match protocol {
            Protocol::Btc => &self.btc_levels,
            Protocol::Ptc => &self.ptc_levels,
        }
    }

    pub fn checks(&self, protocol: Protocol) -> CheckCounts {
        match protocol {
            Protocol::Btc => self.btc_checks,
            Protocol::Ptc => self.ptc_checks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.codecs.is_empty() {
            return Err(Error::design("need at least one source and one codec"));
        }
        if !(self.cross_codec_ratio > 0.0 && self.cross_codec_ratio <= 1.0) {
            return Err(Error::design(format!(
                "cross_codec_ratio must lie in (0, 1], got {}",
                self.cross_codec_ratio
            )));
        }
        if self.n_batches == 0 {
            return Err(Error::design("n_batches must be positive"));
        }
        let unique = |v: &[String]| v.iter().collect::<HashSet<_>>().len() == v.len();
        if !unique(&self.sources) || !unique(&self.codecs) {
            return Err(Error::design("duplicate source or codec id"));
        }
        if self.codecs.iter().any(|c| c == crate::stimulus::SOURCE_CODEC) {
            return Err(Error::design("`source` is reserved and cannot be a codec id"));
        }
        for p in Protocol::ALL {
            let levels = self.levels(p);
            if levels.len() < 2 {
                return Err(Error::design(format!("{p}: need at least two levels")));
            }
            if levels.iter().any(|&l| l > MAX_LEVEL) || levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::design(format!("{p}: levels must be strictly increasing within 0..=10")));
            }
        }
        Ok(())
    }

    fn nonzero_levels(&self, protocol: Protocol) -> Vec<u8> {
        self.levels(protocol).iter().copied().filter(|&l| l > 0).collect()
    }
}

/// Every ordered pair of distinct levels per (source, codec).
pub fn generate_same_codec(config: &DesignConfig, protocol: Protocol) -> Result<Vec<TripletQuestion>> {
    config.validate()?;
    let levels = config.levels(protocol);
    let mut out = Vec::new();
    for source in &config.sources {
        for codec in &config.codecs {
            for &l in levels {
                for &r in levels {
                    if l != r {
                        out.push(TripletQuestion::build(
                            protocol,
                            QuestionKind::SameCodec,
                            StimulusKey::at_level(source, codec, l),
                            StimulusKey::at_level(source, codec, r),
                            0,
                        ));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Random cross-codec pairs of one source whose levels differ by at most one.
///
/// The count is `cross_codec_ratio` times the same-codec count, spread evenly
/// over sources.
pub fn generate_cross_codec(config: &DesignConfig, protocol: Protocol, rng: &mut ChaCha8Rng) -> Result<Vec<TripletQuestion>> {
    config.validate()?;
    if config.codecs.len() < 2 {
        return Err(Error::design("cross-codec questions need at least two codecs"));
    }
    let same = config.sources.len() * config.codecs.len() * {
        let n = config.levels(protocol).len();
        n * (n - 1)
    };
    let target = (config.cross_codec_ratio * same as f64).round() as usize;
    let levels = config.nonzero_levels(protocol);
    let n_src = config.sources.len();

    let mut out = Vec::with_capacity(target);
    for (si, source) in config.sources.iter().enumerate() {
        let quota = target / n_src + usize::from(si < target % n_src);
        let mut candidates = Vec::new();
        for lc in &config.codecs {
            for rc in &config.codecs {
                if lc == rc {
                    continue;
                }
                for &l in &levels {
                    for &r in &levels {
                        if l.abs_diff(r) <= 1 {
                            candidates.push((StimulusKey::at_level(source, lc, l), StimulusKey::at_level(source, rc, r)));
                        }
                    }
                }
            }
        }
        if candidates.len() < quota {
            return Err(Error::design(format!(
                "{protocol}: source {source} has {} cross-codec candidates, {quota} requested",
                candidates.len()
            )));
        }
        let picked: Vec<_> = candidates.choose_multiple(rng, quota).cloned().collect();
        out.extend(
            picked
                .into_iter()
                .map(|(l, r)| TripletQuestion::build(protocol, QuestionKind::CrossCodec, l, r, 0)),
        );
    }
    Ok(out)
}

/// Bias questions (an image against itself) and trap questions (source
/// against the strongest level, half of them with the distortion on the left).
pub fn generate_bias_and_trap(config: &DesignConfig, protocol: Protocol) -> Result<Vec<TripletQuestion>> {
    config.validate()?;
    let checks = config.checks(protocol);
    let levels = config.nonzero_levels(protocol);
    if checks.trap > 0 && levels.last() != Some(&MAX_LEVEL) {
        return Err(Error::design(format!("{protocol}: trap questions need level {MAX_LEVEL}")));
    }
    let (ns, nc, nl) = (config.sources.len(), config.codecs.len(), levels.len());
    if checks.bias > ns * nc * nl {
        return Err(Error::design(format!(
            "{protocol}: {} bias questions requested but only {} distinct images",
            checks.bias,
            ns * nc * nl
        )));
    }

    let mut out = Vec::with_capacity(checks.bias + checks.trap);
    // round-robin over source, codec and level; skip repeats
    let mut used = HashSet::new();
    let mut i = 0usize;
    while out.len() < checks.bias {
        let combo = (i % ns, (i / ns) % nc, i % nl);
        let combo = if used.contains(&combo) {
            // walk the level axis until a free image turns up
            (0..nl)
                .map(|k| (combo.0, combo.1, (combo.2 + k) % nl))
                .find(|c| !used.contains(c))
        } else {
            Some(combo)
        };
        if let Some(c) = combo {
            used.insert(c);
            let key = StimulusKey::at_level(&config.sources[c.0], &config.codecs[c.1], levels[c.2]);
            out.push(TripletQuestion::build(protocol, QuestionKind::Bias, key.clone(), key, 0));
        }
        i += 1;
    }

    // traps: cycle source, codec, side; replica counts repeats of the same ordered pair
    let mut replicas: BTreeMap<(usize, usize, bool), u32> = BTreeMap::new();
    for t in 0..checks.trap {
        let s = t % ns;
        let c = (t / ns) % nc;
        let distorted_left = (t / (ns * nc)) % 2 == 0;
        let r = replicas.entry((s, c, distorted_left)).or_insert(0);
        let src = StimulusKey::source(&config.sources[s]);
        let dist = StimulusKey::at_level(&config.sources[s], &config.codecs[c], MAX_LEVEL);
        let (l, rt) = if distorted_left { (dist, src) } else { (src, dist) };
        out.push(TripletQuestion::build(protocol, QuestionKind::Trap, l, rt, *r));
        *r += 1;
    }
    Ok(out)
}

/// A batch of questions answered together by one worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_id: String,
    pub protocol: Protocol,
    pub questions: Vec<TripletQuestion>,
}

/// Deal traps and bias questions evenly, pool same- and cross-codec
/// questions and split them evenly at random.
pub fn split_into_batches(
    questions: Vec<TripletQuestion>,
    config: &DesignConfig,
    protocol: Protocol,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Batch>> {
    let n = config.n_batches;
    let mut traps = Vec::new();
    let mut bias = Vec::new();
    let mut study = Vec::new();
    for q in questions {
        if q.protocol != protocol {
            return Err(Error::design(format!("question {} is not {protocol}", q.question_id)));
        }
        match q.kind {
            QuestionKind::Trap => traps.push(q),
            QuestionKind::Bias => bias.push(q),
            QuestionKind::SameCodec | QuestionKind::CrossCodec => study.push(q),
        }
    }
    for (name, group) in [("trap", &traps), ("bias", &bias), ("study", &study)] {
        if group.len() % n != 0 {
            return Err(Error::design(format!(
                "{protocol}: {} {name} questions cannot be split evenly into {n} batches",
                group.len()
            )));
        }
    }
    if traps.is_empty() {
        return Err(Error::design("every batch needs at least one trap question"));
    }

    let mut batches: Vec<Batch> = (0..n)
        .map(|b| Batch {
            batch_id: format!("{protocol}-{:02}", b + 1),
            protocol,
            questions: Vec::new(),
        })
        .collect();
    for mut group in [traps, bias, study] {
        group.shuffle(rng);
        let per = group.len() / n;
        for (b, chunk) in group.chunks(per.max(1)).enumerate().take(n) {
            batches[b].questions.extend_from_slice(chunk);
        }
    }
    for b in &mut batches {
        b.questions.shuffle(rng);
    }
    Ok(batches)
}

/// A full, batched design for one protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub protocol: Protocol,
    pub batches: Vec<Batch>,
}

/// One line of the JSON-lines design manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub batch_id: String,
    #[serde(flatten)]
    pub question: TripletQuestion,
}

fn protocol_rng(seed: u64, protocol: Protocol) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match protocol {
        Protocol::Btc => 1,
        Protocol::Ptc => 2,
    });
    rng
}

/// Generate the full design of one protocol from `config`.
pub fn generate_design(config: &DesignConfig, protocol: Protocol) -> Result<Design> {
    config.validate()?;
    let mut rng = protocol_rng(config.rng_seed, protocol);
    let mut questions = generate_same_codec(config, protocol)?;
    questions.extend(generate_cross_codec(config, protocol, &mut rng)?);
    questions.extend(generate_bias_and_trap(config, protocol)?);

    let mut seen = HashSet::new();
    for q in &questions {
        q.validate()?;
        if !seen.insert(q.question_id.as_str()) {
            return Err(Error::design(format!("duplicate question {}", q.question_id)));
        }
    }
    let batches = split_into_batches(questions, config, protocol, &mut rng)?;
    Ok(Design { protocol, batches })
}

impl Design {
    pub fn questions(&self) -> impl Iterator<Item = &TripletQuestion> {
        self.batches.iter().flat_map(|b| b.questions.iter())
    }

    pub fn len(&self) -> usize {
        self.batches.iter().map(|b| b.questions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count_kind(&self, kind: QuestionKind) -> usize {
        self.questions().filter(|q| q.kind == kind).count()
    }

    pub fn batch(&self, batch_id: &str) -> Option<&Batch> {
        self.batches.iter().find(|b| b.batch_id == batch_id)
    }

    pub fn write_manifest<W: Write>(&self, mut w: W) -> Result<()> {
        for b in &self.batches {
            for q in &b.questions {
                let entry = ManifestEntry {
                    batch_id: b.batch_id.clone(),
                    question: q.clone(),
                };
                serde_json::to_writer(&mut w, &entry)?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn manifest_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_manifest(&mut buf)?;
        Ok(String::from_utf8(buf).expect("json is utf-8"))
    }

    /// Read a single-protocol manifest, keeping batch and question order.
    pub fn read_manifest<R: BufRead>(r: R) -> Result<Self> {
        let mut designs = read_manifests(r)?;
        match designs.len() {
            1 => Ok(designs.remove(0)),
            0 => Err(Error::invalid("empty design manifest")),
            _ => Err(Error::invalid("manifest mixes protocols; use read_manifests")),
        }
    }
}

/// Read a manifest that may hold several protocols, one design per protocol.
pub fn read_manifests<R: BufRead>(r: R) -> Result<Vec<Design>> {
    let mut designs: Vec<Design> = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| Error::invalid(format!("manifest line {}: {e}", lineno + 1)))?;
        entry.question.validate()?;
        if !seen.insert(entry.question.question_id.clone()) {
            return Err(Error::invalid(format!("duplicate question id {}", entry.question.question_id)));
        }
        let protocol = entry.question.protocol;
        let design = match designs.iter_mut().find(|d| d.protocol == protocol) {
            Some(d) => d,
            None => {
                designs.push(Design { protocol, batches: Vec::new() });
                designs.last_mut().unwrap()
            }
        };
        match design.batches.iter_mut().find(|b| b.batch_id == entry.batch_id) {
            Some(b) => b.questions.push(entry.question),
            None => design.batches.push(Batch {
                batch_id: entry.batch_id,
                protocol,
                questions: vec![entry.question],
            }),
        }
    }
    designs.sort_by_key(|d| d.protocol);
    Ok(designs)
}
