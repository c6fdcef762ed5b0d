//! Left/right order bias on identical-pair questions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::design::QuestionKind;
use crate::responses::{Answer, Response};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTally {
    pub left: usize,
    pub right: usize,
    pub not_sure: usize,
    /// Exact two-sided binomial test of left versus right at p = 0.5.
    pub p_value: f64,
    pub biased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub alpha: f64,
    pub before_filtering: BiasTally,
    pub after_filtering: BiasTally,
}

/// Two-sided exact binomial p-value for `k` successes in `n` trials at 1/2.
pub fn binomial_two_sided(k: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, n as u64).expect("valid binomial");
    let k = k as u64;
    let lower = dist.cdf(k);
    let upper = if k == 0 { 1.0 } else { dist.sf(k - 1) };
    (2.0 * lower.min(upper)).min(1.0)
}

pub fn tally_bias(responses: &[Response<'_>], alpha: f64) -> BiasTally {
    let (mut left, mut right, mut not_sure) = (0, 0, 0);
    for r in responses.iter().filter(|r| r.question.kind == QuestionKind::Bias) {
        match r.answer {
            Answer::Left => left += 1,
            Answer::Right => right += 1,
            Answer::NotSure => not_sure += 1,
        }
    }
    let p_value = binomial_two_sided(left, left + right);
    BiasTally {
        left,
        right,
        not_sure,
        p_value,
        biased: p_value < alpha,
    }
}

pub fn bias_report(all: &[Response<'_>], kept: &[Response<'_>], alpha: f64) -> BiasReport {
    BiasReport {
        alpha,
        before_filtering: tally_bias(all, alpha),
        after_filtering: tally_bias(kept, alpha),
    }
}
