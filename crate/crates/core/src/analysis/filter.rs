//! Reliability filtering of batch instances (one worker answering one batch).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::responses::{Answer, Response};
use crate::stimulus::MAX_LEVEL;

pub const DEFAULT_THRESHOLD: f64 = 0.70;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReliability {
    pub worker_id: String,
    pub batch_id: String,
    /// Source-versus-strongest-level questions answered in this instance.
    pub qualifying: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub threshold: f64,
    pub instances: Vec<BatchReliability>,
    pub kept_instances: usize,
    pub removed_instances: usize,
    pub workers_before: usize,
    pub workers_after: usize,
    /// Accuracy histogram over instances, ten bins of width 0.1.
    pub histogram: Vec<HistogramBin>,
}

impl ReliabilityReport {
    pub fn is_kept(&self, worker_id: &str, batch_id: &str) -> bool {
        self.instances
            .iter()
            .any(|i| i.kept && i.worker_id == worker_id && i.batch_id == batch_id)
    }
}

/// Is this a correct answer to a level-0 versus level-10 same-codec question?
/// `None` when the question does not qualify.
pub fn trap_correct(r: &Response<'_>) -> Option<bool> {
    let (_, level, distorted_left) = r.question.source_vs_level()?;
    if level != MAX_LEVEL {
        return None;
    }
    Some(match r.answer {
        Answer::Left => distorted_left,
        Answer::Right => !distorted_left,
        Answer::NotSure => false,
    })
}

/// Keep batch instances whose accuracy on source-versus-level-10 questions
/// reaches `threshold`. Not-sure counts as incorrect.
pub fn filter_batches<'a>(responses: &[Response<'a>], threshold: f64) -> Result<(Vec<Response<'a>>, ReliabilityReport)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut stats: BTreeMap<(&str, &str), (usize, usize)> = BTreeMap::new();
    for r in responses {
        let e = stats.entry((r.worker_id, r.batch_id)).or_default();
        if let Some(ok) = trap_correct(r) {
            e.0 += 1;
            e.1 += usize::from(ok);
        }
    }
    let mut instances = Vec::with_capacity(stats.len());
    for ((worker, batch), (qualifying, correct)) in &stats {
        if *qualifying == 0 {
            return Err(Error::analysis(format!(
                "batch {batch} answered by {worker} has no level-0 vs level-{MAX_LEVEL} questions"
            )));
        }
        let accuracy = *correct as f64 / *qualifying as f64;
        instances.push(BatchReliability {
            worker_id: worker.to_string(),
            batch_id: batch.to_string(),
            qualifying: *qualifying,
            correct: *correct,
            accuracy,
            kept: accuracy >= threshold,
        });
    }
    let kept_set: BTreeSet<(&str, &str)> = instances
        .iter()
        .filter(|i| i.kept)
        .map(|i| (i.worker_id.as_str(), i.batch_id.as_str()))
        .collect();
    let kept: Vec<Response<'a>> = responses
        .iter()
        .filter(|r| kept_set.contains(&(r.worker_id, r.batch_id)))
        .copied()
        .collect();

    let mut histogram: Vec<HistogramBin> = (0..10)
        .map(|b| HistogramBin {
            lower: b as f64 / 10.0,
            upper: (b + 1) as f64 / 10.0,
            count: 0,
        })
        .collect();
    for i in &instances {
        let bin = ((i.accuracy * 10.0).floor() as usize).min(9);
        histogram[bin].count += 1;
    }
    let workers_before = instances.iter().map(|i| &i.worker_id).collect::<BTreeSet<_>>().len();
    let workers_after = kept_set.iter().map(|(w, _)| w).collect::<BTreeSet<_>>().len();
    let kept_instances = kept_set.len();
    let report = ReliabilityReport {
        threshold,
        removed_instances: instances.len() - kept_instances,
        kept_instances,
        instances,
        workers_before,
        workers_after,
        histogram,
    };
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{QuestionKind, TripletQuestion};
    use crate::stimulus::{Protocol, Stimulus, StimulusKey};

    fn q(id: &str, l: u8, r: u8, kind: QuestionKind) -> TripletQuestion {
        let lk = StimulusKey::at_level("s", "c", l);
        let rk = StimulusKey::at_level("s", "c", r);
        TripletQuestion {
            question_id: id.into(),
            source_id: "s".into(),
            left: Stimulus::in_store(&lk, Protocol::Ptc),
            right: Stimulus::in_store(&rk, Protocol::Ptc),
            kind,
            protocol: Protocol::Ptc,
        }
    }

    fn resp<'a>(q: &'a TripletQuestion, worker: &'a str, answer: Answer) -> Response<'a> {
        Response {
            question: q,
            worker_id: worker,
            batch_id: "b1",
            answer,
        }
    }

    #[test]
    fn all_correct_is_kept_and_sixty_percent_removed() {
        let trap = q("t", 10, 0, QuestionKind::Trap);
        let study = q("s", 0, 10, QuestionKind::SameCodec);
        let other = q("o", 3, 5, QuestionKind::SameCodec);
        let mut rs = vec![
            resp(&trap, "good", Answer::Left),
            resp(&study, "good", Answer::Right),
            resp(&other, "good", Answer::Left),
        ];
        // 3 of 5 correct for "poor"
        for a in [Answer::Left, Answer::Left, Answer::Left, Answer::Right, Answer::NotSure] {
            rs.push(resp(&trap, "poor", a));
        }
        let (kept, report) = filter_batches(&rs, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(kept.len(), 3);
        assert!(kept.iter().all(|r| r.worker_id == "good"));
        let poor = report.instances.iter().find(|i| i.worker_id == "poor").unwrap();
        assert!((poor.accuracy - 0.6).abs() < 1e-12);
        assert!(!poor.kept);
        assert_eq!(report.removed_instances, 1);
        assert_eq!(report.histogram[6].count, 1);
        assert_eq!(report.histogram[9].count, 1);
    }

    #[test]
    fn exactly_at_threshold_is_kept() {
        let trap = q("t", 0, 10, QuestionKind::Trap);
        let mut rs = Vec::new();
        for i in 0..10 {
            rs.push(resp(&trap, "w", if i < 7 { Answer::Right } else { Answer::Left }));
        }
        let (kept, _) = filter_batches(&rs, 0.7).unwrap();
        assert_eq!(kept.len(), 10);
    }

    #[test]
    fn instance_without_traps_is_an_error() {
        let other = q("o", 3, 5, QuestionKind::SameCodec);
        let rs = vec![resp(&other, "w", Answer::Left)];
        assert!(matches!(filter_batches(&rs, 0.7), Err(Error::Analysis(_))));
    }
}
