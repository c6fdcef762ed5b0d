//! Mapping boosted-scale JND onto the plain scale with a zero-intercept
//! quadratic `y = a·x + b·x²`, fitted per group of stimuli.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::counts::ComparisonCounts;
use super::thurstone::{from_jnd, log_likelihood_at};
use crate::error::{Error, Result};
use crate::stimulus::StimulusKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Global,
    PerSource,
    PerCodec,
    PerPair,
}

impl Granularity {
    pub const ALL: [Granularity; 4] = [
        Granularity::Global,
        Granularity::PerSource,
        Granularity::PerCodec,
        Granularity::PerPair,
    ];

    pub fn group_of(self, key: &StimulusKey) -> String {
        match self {
            Granularity::Global => "all".to_string(),
            Granularity::PerSource => key.source_id.clone(),
            Granularity::PerCodec => key.codec_id.clone(),
            Granularity::PerPair => format!("{}/{}", key.source_id, key.codec_id),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Global => "global",
            Granularity::PerSource => "per_source",
            Granularity::PerCodec => "per_codec",
            Granularity::PerPair => "per_pair",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Granularity::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown granularity `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
}

impl Quadratic {
    pub fn apply(&self, x: f64) -> f64 {
        self.a * x + self.b * x * x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub rss: f64,
    pub points: usize,
    /// Transformation parameters (two per group).
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentModel {
    pub granularity: Granularity,
    pub coefficients: BTreeMap<String, Quadratic>,
    pub fit: FitDiagnostics,
}

impl AlignmentModel {
    /// Aligned (plain-scale) JND of a boosted JND value for `key`.
    pub fn apply(&self, key: &StimulusKey, boosted_jnd: f64) -> Result<f64> {
        if key.is_source() {
            return Ok(0.0);
        }
        let group = self.granularity.group_of(key);
        self.coefficients
            .get(&group)
            .map(|q| q.apply(boosted_jnd))
            .ok_or_else(|| Error::analysis(format!("no alignment for group {group}")))
    }

    pub fn apply_all(&self, boosted: &BTreeMap<StimulusKey, f64>) -> Result<BTreeMap<StimulusKey, f64>> {
        boosted
            .iter()
            .map(|(k, v)| Ok((k.clone(), self.apply(k, *v)?)))
            .collect()
    }
}

/// Least-squares fit per group on stimuli present in both scale maps
/// (reference excluded). `weights`, when given, weights each point.
pub fn fit_alignment(
    btc: &BTreeMap<StimulusKey, f64>,
    ptc: &BTreeMap<StimulusKey, f64>,
    granularity: Granularity,
    weights: Option<&BTreeMap<StimulusKey, f64>>,
) -> Result<AlignmentModel> {
    let mut groups: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for (key, &y) in ptc.iter().filter(|(k, _)| !k.is_source()) {
        let Some(&x) = btc.get(key) else { continue };
        let w = match weights {
            Some(ws) => *ws
                .get(key)
                .ok_or_else(|| Error::analysis(format!("no weight for {key}")))?,
            None => 1.0,
        };
        groups.entry(granularity.group_of(key)).or_default().push((x, y, w));
    }
    if groups.is_empty() {
        return Err(Error::analysis("no stimuli shared by the boosted and plain scales"));
    }
    let mut coefficients = BTreeMap::new();
    let mut rss = 0.0;
    let mut points = 0;
    for (group, pts) in &groups {
        if pts.len() < 2 {
            return Err(Error::analysis(format!(
                "group {group} has {} overlap point(s), needs at least 2",
                pts.len()
            )));
        }
        let q = fit_quadratic(pts).ok_or_else(|| Error::analysis(format!("group {group}: degenerate predictor values")))?;
        rss += pts.iter().map(|&(x, y, w)| w * (y - q.apply(x)).powi(2)).sum::<f64>();
        points += pts.len();
        coefficients.insert(group.clone(), q);
    }
    Ok(AlignmentModel {
        granularity,
        fit: FitDiagnostics {
            rss,
            points,
            parameters: 2 * coefficients.len(),
        },
        coefficients,
    })
}

/// Weighted normal equations for `y = a·x + b·x²`.
fn fit_quadratic(pts: &[(f64, f64, f64)]) -> Option<Quadratic> {
    let (mut s2, mut s3, mut s4, mut sxy, mut sx2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, w) in pts {
        let x2 = x * x;
        s2 += w * x2;
        s3 += w * x2 * x;
        s4 += w * x2 * x2;
        sxy += w * x * y;
        sx2y += w * x2 * y;
    }
    let det = s2 * s4 - s3 * s3;
    if det.abs() <= 1e-12 * (s2 * s4).abs().max(f64::MIN_POSITIVE) {
        return None;
    }
    Some(Quadratic {
        a: (sxy * s4 - sx2y * s3) / det,
        b: (s2 * sx2y - s3 * sxy) / det,
    })
}

/// Likelihood used in the AIC comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AicMode {
    /// Plain-protocol responses under Thurstone scales given by the aligned
    /// boosted scales.
    #[default]
    PlainLikelihood,
    /// Gaussian likelihood of the regression residuals.
    RegressionResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicEntry {
    pub granularity: Granularity,
    /// Boosted scale parameters plus transformation parameters.
    pub parameters: usize,
    pub log_likelihood: f64,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicSelection {
    pub mode: AicMode,
    pub table: Vec<AicEntry>,
    pub chosen: Granularity,
}

pub fn aic(parameters: usize, log_likelihood: f64) -> f64 {
    2.0 * parameters as f64 - 2.0 * log_likelihood
}

/// Pick the candidate with minimum AIC; ties go to fewer parameters.
///
/// `btc_parameters` is the number of free boosted scale values, counted in
/// every candidate.
pub fn select_granularity(
    models: &[AlignmentModel],
    btc_jnd: &BTreeMap<StimulusKey, f64>,
    ptc_counts: &[ComparisonCounts],
    btc_parameters: usize,
    mode: AicMode,
    epsilon: f64,
) -> Result<AicSelection> {
    if models.is_empty() {
        return Err(Error::analysis("no alignment candidates"));
    }
    let mut table = Vec::with_capacity(models.len());
    for m in models {
        let log_likelihood = match mode {
            AicMode::PlainLikelihood => {
                let mut total = 0.0;
                for counts in ptc_counts {
                    let mut scales = BTreeMap::new();
                    for key in &counts.stimuli {
                        let x = if key.is_source() {
                            0.0
                        } else {
                            *btc_jnd
                                .get(key)
                                .ok_or_else(|| Error::analysis(format!("plain stimulus {key} has no boosted scale")))?
                        };
                        scales.insert(key.clone(), from_jnd(m.apply(key, x)?));
                    }
                    total += log_likelihood_at(counts, &scales, epsilon)?;
                }
                total
            }
            AicMode::RegressionResidual => {
                let n = m.fit.points as f64;
                let sigma2 = (m.fit.rss / n).max(f64::MIN_POSITIVE);
                -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0)
            }
        };
        let parameters = btc_parameters + m.fit.parameters;
        table.push(AicEntry {
            granularity: m.granularity,
            parameters,
            log_likelihood,
            aic: aic(parameters, log_likelihood),
        });
    }
    let chosen = table
        .iter()
        .min_by(|a, b| a.aic.total_cmp(&b.aic).then(a.parameters.cmp(&b.parameters)))
        .expect("non-empty")
        .granularity;
    Ok(AicSelection { mode, table, chosen })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(f: impl Fn(&str, &str, u8) -> f64) -> BTreeMap<StimulusKey, f64> {
        let mut m = BTreeMap::new();
        for s in ["s1", "s2", "s3", "s4", "s5"] {
            for c in ["c1", "c2", "c3", "c4", "c5"] {
                for l in [2u8, 4, 6, 8, 10] {
                    m.insert(StimulusKey::at_level(s, c, l), f(s, c, l));
                }
            }
        }
        m
    }

    #[test]
    fn identity_line() {
        let x = grid(|_, _, l| f64::from(l) * 0.3);
        let m = fit_alignment(&x, &x, Granularity::Global, None).unwrap();
        let q = m.coefficients["all"];
        assert!((q.a - 1.0).abs() < 1e-6 && q.b.abs() < 1e-6);
        assert!(m.fit.rss < 1e-18);
    }

    #[test]
    fn exact_quadratic_recovered() {
        let x = grid(|_, _, l| f64::from(l) * 0.5);
        let y: BTreeMap<_, _> = x.iter().map(|(k, v)| (k.clone(), 0.5 * v + 0.01 * v * v)).collect();
        for g in Granularity::ALL {
            let m = fit_alignment(&x, &y, g, None).unwrap();
            for q in m.coefficients.values() {
                assert!((q.a - 0.5).abs() < 1e-6 && (q.b - 0.01).abs() < 1e-6, "{g}: {q:?}");
            }
        }
    }

    #[test]
    fn group_and_parameter_counts() {
        let x = grid(|_, _, l| f64::from(l));
        let counts: Vec<usize> = Granularity::ALL
            .iter()
            .map(|&g| fit_alignment(&x, &x, g, None).unwrap().fit.parameters)
            .collect();
        assert_eq!(counts, vec![2, 10, 10, 50]);
        let totals: Vec<usize> = counts.iter().map(|p| 250 + p).collect();
        assert_eq!(totals, vec![252, 260, 260, 300]);
    }

    #[test]
    fn too_few_points() {
        let mut x = BTreeMap::new();
        x.insert(StimulusKey::at_level("s", "c", 4), 1.0);
        assert!(matches!(
            fit_alignment(&x, &x, Granularity::PerPair, None),
            Err(Error::Analysis(_))
        ));
    }

    #[test]
    fn nesting_rss() {
        // noisy, group-dependent data
        let x = grid(|s, c, l| f64::from(l) * (0.4 + 0.01 * (s.len() + c.as_bytes()[1] as usize) as f64));
        let y: BTreeMap<_, _> = x
            .iter()
            .enumerate()
            .map(|(i, (k, v))| {
                let a = 0.4 + 0.05 * f64::from(k.codec_id.as_bytes()[1] - b'0') + 0.03 * f64::from(k.source_id.as_bytes()[1] - b'0');
                (k.clone(), a * v + 0.02 * ((i * 7919) % 13) as f64 / 13.0)
            })
            .collect();
        let rss: BTreeMap<_, _> = Granularity::ALL
            .iter()
            .map(|&g| (g, fit_alignment(&x, &y, g, None).unwrap().fit.rss))
            .collect();
        for g in [Granularity::Global, Granularity::PerSource, Granularity::PerCodec] {
            assert!(rss[&Granularity::PerPair] <= rss[&g] + 1e-12);
        }
        assert!(rss[&Granularity::PerSource] <= rss[&Granularity::Global] + 1e-12);
    }

    #[test]
    fn equal_likelihood_prefers_fewer_parameters() {
        let x = grid(|_, _, l| f64::from(l));
        let models: Vec<_> = [Granularity::PerPair, Granularity::Global]
            .iter()
            .map(|&g| fit_alignment(&x, &x, g, None).unwrap())
            .collect();
        // exact fits: identical residual likelihoods
        let mut models = models;
        for m in &mut models {
            m.fit.rss = 1.0;
        }
        let sel = select_granularity(&models, &x, &[], 250, AicMode::RegressionResidual, 1e-6).unwrap();
        assert_eq!(sel.chosen, Granularity::Global);
        assert_eq!(sel.table[0].parameters, 300);
        assert_eq!(sel.table[1].parameters, 252);
    }

    #[test]
    fn weights_change_the_fit() {
        let mut x = BTreeMap::new();
        let mut y = BTreeMap::new();
        let mut w = BTreeMap::new();
        for (l, yy, ww) in [(2u8, 1.0, 1.0), (4, 2.0, 1.0), (6, 4.0, 100.0)] {
            let k = StimulusKey::at_level("s", "c", l);
            x.insert(k.clone(), f64::from(l));
            y.insert(k.clone(), yy);
            w.insert(k, ww);
        }
        let plain = fit_alignment(&x, &y, Granularity::Global, None).unwrap();
        let weighted = fit_alignment(&x, &y, Granularity::Global, Some(&w)).unwrap();
        let k6 = StimulusKey::at_level("s", "c", 6);
        let r_plain = (plain.apply(&k6, 6.0).unwrap() - 4.0).abs();
        let r_weighted = (weighted.apply(&k6, 6.0).unwrap() - 4.0).abs();
        assert!(r_weighted < r_plain);
    }
}
