//! Proportion of correct answers when a distortion level is compared with
//! its source, and the level where that proportion crosses 0.75.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::responses::{Answer, Response};
use crate::stimulus::Protocol;

pub const JND_PROPORTION: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub level: u8,
    /// Mean over (source, codec) cells of the per-cell proportion correct.
    pub proportion: f64,
    pub cells: usize,
    pub responses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsychometricCurve {
    pub protocol: Protocol,
    pub points: Vec<CurvePoint>,
    /// Interpolated level where the curve first reaches 0.75.
    pub jnd_threshold_level: Option<f64>,
    /// (source, codec, level) cells that had no responses.
    pub empty_cells: Vec<(String, String, u8)>,
}

/// Curve of one protocol from kept responses.
pub fn psychometric_curve(responses: &[Response<'_>], protocol: Protocol) -> PsychometricCurve {
    // (level, source, codec) -> (correct, total)
    let mut cells: BTreeMap<(u8, &str, &str), (usize, usize)> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.question.protocol == protocol) {
        let Some((codec, level, distorted_left)) = r.question.source_vs_level() else {
            continue;
        };
        let e = cells.entry((level, &r.question.source_id, codec)).or_default();
        e.1 += 1;
        e.0 += usize::from(match r.answer {
            Answer::Left => distorted_left,
            Answer::Right => !distorted_left,
            Answer::NotSure => false,
        });
    }

    let levels: Vec<u8> = {
        let mut l: Vec<u8> = cells.keys().map(|k| k.0).collect();
        l.dedup();
        l
    };
    let all_cells: Vec<(&str, &str)> = {
        let mut c: Vec<_> = cells.keys().map(|k| (k.1, k.2)).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut points = Vec::new();
    let mut empty_cells = Vec::new();
    for &level in &levels {
        let (mut sum, mut n, mut total) = (0.0, 0, 0);
        for &(s, c) in &all_cells {
            match cells.get(&(level, s, c)) {
                Some(&(ok, t)) if t > 0 => {
                    sum += ok as f64 / t as f64;
                    n += 1;
                    total += t;
                }
                _ => empty_cells.push((s.to_string(), c.to_string(), level)),
            }
        }
        if n > 0 {
            points.push(CurvePoint {
                level,
                proportion: sum / n as f64,
                cells: n,
                responses: total,
            });
        }
    }
    let jnd_threshold_level = crossing(&points, JND_PROPORTION);
    PsychometricCurve {
        protocol,
        points,
        jnd_threshold_level,
        empty_cells,
    }
}

/// First upward crossing of `target`, linearly interpolated. Chance level
/// (0.5 at level 0) is the implicit first point.
pub fn crossing(points: &[CurvePoint], target: f64) -> Option<f64> {
    let mut prev = (0.0, 0.5);
    for p in points {
        let cur = (f64::from(p.level), p.proportion);
        if cur.1 >= target {
            if prev.1 >= target || cur.1 == prev.1 {
                return Some(cur.0);
            }
            return Some(prev.0 + (target - prev.1) * (cur.0 - prev.0) / (cur.1 - prev.1));
        }
        prev = cur;
    }
    None
}
