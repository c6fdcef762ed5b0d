//! Pairwise "judged more impaired" counts per source.

use std::collections::{BTreeMap, BTreeSet};

use crate::design::{QuestionKind, TripletQuestion};
use crate::responses::{Answer, Response};
use crate::stimulus::{Protocol, StimulusKey};

/// Answer tally of one question.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub left: u32,
    pub right: u32,
    pub not_sure: u32,
}

impl Tally {
    pub fn add(&mut self, answer: Answer) {
        match answer {
            Answer::Left => self.left += 1,
            Answer::Right => self.right += 1,
            Answer::NotSure => self.not_sure += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.left + self.right + self.not_sure
    }
}

/// Effective counts for stimuli `i < k`: how often each was judged worse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCount {
    pub i: usize,
    pub k: usize,
    pub i_worse: f64,
    pub k_worse: f64,
}

impl PairCount {
    pub fn total(&self) -> f64 {
        self.i_worse + self.k_worse
    }
}

/// Comparison counts of one source, the input of scale reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonCounts {
    pub source_id: String,
    /// Sorted stimuli; indices in `pairs` refer to this list.
    pub stimuli: Vec<StimulusKey>,
    pub pairs: Vec<PairCount>,
}

impl ComparisonCounts {
    /// Build from explicit `(a, b, a judged worse, b judged worse)` entries.
    pub fn from_entries(source_id: &str, entries: impl IntoIterator<Item = (StimulusKey, StimulusKey, f64, f64)>) -> Self {
        let mut acc: BTreeMap<(StimulusKey, StimulusKey), (f64, f64)> = BTreeMap::new();
        for (a, b, aw, bw) in entries {
            if a == b {
                continue;
            }
            if a < b {
                let e = acc.entry((a, b)).or_default();
                e.0 += aw;
                e.1 += bw;
            } else {
                let e = acc.entry((b, a)).or_default();
                e.0 += bw;
                e.1 += aw;
            }
        }
        let stimuli: Vec<StimulusKey> = acc
            .keys()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = |k: &StimulusKey| stimuli.binary_search(k).expect("collected above");
        let pairs = acc
            .iter()
            .map(|((a, b), (aw, bw))| PairCount {
                i: index(a),
                k: index(b),
                i_worse: *aw,
                k_worse: *bw,
            })
            .collect();
        ComparisonCounts {
            source_id: source_id.to_string(),
            stimuli,
            pairs,
        }
    }

    /// Aggregate question tallies of `source_id`. Not-sure answers count half
    /// for each side; identical-image pairs carry no information and are skipped.
    pub fn from_tallies<'q>(source_id: &str, tallies: impl IntoIterator<Item = (&'q TripletQuestion, Tally)>) -> Self {
        let entries = tallies.into_iter().filter_map(|(q, t)| {
            if q.source_id != source_id || q.kind == QuestionKind::Bias || q.left == q.right {
                return None;
            }
            let half = 0.5 * f64::from(t.not_sure);
            Some((
                q.left_key(),
                q.right_key(),
                f64::from(t.left) + half,
                f64::from(t.right) + half,
            ))
        });
        Self::from_entries(source_id, entries)
    }

    pub fn index_of(&self, key: &StimulusKey) -> Option<usize> {
        self.stimuli.binary_search(key).ok()
    }

    pub fn total(&self) -> f64 {
        self.pairs.iter().map(PairCount::total).sum()
    }

    /// Counts for ordered pair (a, b): (a judged worse, b judged worse).
    pub fn pair(&self, a: &StimulusKey, b: &StimulusKey) -> Option<(f64, f64)> {
        let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
        self.pairs.iter().find_map(|p| {
            if p.i == ia && p.k == ib {
                Some((p.i_worse, p.k_worse))
            } else if p.i == ib && p.k == ia {
                Some((p.k_worse, p.i_worse))
            } else {
                None
            }
        })
    }
}

/// Per-question tallies of `responses`.
pub fn tally_responses<'a>(responses: &[Response<'a>]) -> Vec<(&'a TripletQuestion, Tally)> {
    let mut map: BTreeMap<&str, (&TripletQuestion, Tally)> = BTreeMap::new();
    for r in responses {
        map.entry(r.question.question_id.as_str())
            .or_insert((r.question, Tally::default()))
            .1
            .add(r.answer);
    }
    map.into_values().collect()
}

/// Counts of one source and protocol from resolved responses.
pub fn build_counts(responses: &[Response<'_>], source_id: &str, protocol: Protocol) -> ComparisonCounts {
    let tallies = tally_responses(responses);
    ComparisonCounts::from_tallies(
        source_id,
        tallies.into_iter().filter(|(q, _)| q.protocol == protocol),
    )
}

/// Sorted source ids present in `responses` for `protocol`.
pub fn sources_of(responses: &[Response<'_>], protocol: Protocol) -> Vec<String> {
    responses
        .iter()
        .filter(|r| r.question.protocol == protocol)
        .map(|r| r.question.source_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::Stimulus;

    fn q(id: &str, l: u8, r: u8, kind: QuestionKind) -> TripletQuestion {
        let lk = StimulusKey::at_level("s", "c", l);
        let rk = StimulusKey::at_level("s", "c", r);
        TripletQuestion {
            question_id: id.into(),
            source_id: "s".into(),
            left: Stimulus::in_store(&lk, Protocol::Btc),
            right: Stimulus::in_store(&rk, Protocol::Btc),
            kind,
            protocol: Protocol::Btc,
        }
    }

    fn responses<'a>(q: &'a TripletQuestion, answers: &[Answer]) -> Vec<Response<'a>> {
        answers
            .iter()
            .map(|&answer| Response {
                question: q,
                worker_id: "w",
                batch_id: "b",
                answer,
            })
            .collect()
    }

    #[test]
    fn left_answers_count_for_left_stimulus() {
        let question = q("a", 3, 1, QuestionKind::SameCodec);
        let rs = responses(&question, &[Answer::Left; 10]);
        let c = build_counts(&rs, "s", Protocol::Btc);
        let i = StimulusKey::at_level("s", "c", 3);
        let k = StimulusKey::at_level("s", "c", 1);
        assert_eq!(c.pair(&i, &k), Some((10.0, 0.0)));
        assert_eq!(c.pair(&k, &i), Some((0.0, 10.0)));
    }

    #[test]
    fn not_sure_splits_in_half() {
        let question = q("a", 3, 1, QuestionKind::SameCodec);
        let rs = responses(&question, &[Answer::NotSure; 4]);
        let c = build_counts(&rs, "s", Protocol::Btc);
        let i = StimulusKey::at_level("s", "c", 3);
        let k = StimulusKey::at_level("s", "c", 1);
        assert_eq!(c.pair(&i, &k), Some((2.0, 2.0)));
    }

    #[test]
    fn presentation_order_collapses() {
        let a = q("a", 3, 1, QuestionKind::SameCodec);
        let b = q("b", 1, 3, QuestionKind::SameCodec);
        let mut rs = responses(&a, &[Answer::Left, Answer::Left, Answer::Right]);
        rs.extend(responses(&b, &[Answer::Right, Answer::NotSure]));
        let c = build_counts(&rs, "s", Protocol::Btc);
        assert_eq!(c.pairs.len(), 1);
        let i = StimulusKey::at_level("s", "c", 3);
        let k = StimulusKey::at_level("s", "c", 1);
        assert_eq!(c.pair(&i, &k), Some((3.5, 1.5)));
        assert_eq!(c.total(), 5.0);
    }

    #[test]
    fn bias_questions_and_other_sources_excluded() {
        let bias = q("a", 2, 2, QuestionKind::Bias);
        let rs = responses(&bias, &[Answer::Right; 5]);
        let c = build_counts(&rs, "s", Protocol::Btc);
        assert!(c.pairs.is_empty());
        let trap = q("t", 10, 0, QuestionKind::Trap);
        let rs = responses(&trap, &[Answer::Left; 5]);
        assert_eq!(build_counts(&rs, "s", Protocol::Btc).total(), 5.0);
        assert!(build_counts(&rs, "other", Protocol::Btc).pairs.is_empty());
        assert!(build_counts(&rs, "s", Protocol::Ptc).pairs.is_empty());
    }
}
