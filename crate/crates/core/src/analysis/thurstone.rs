//! Maximum-likelihood scale reconstruction under Thurstone Case V.
//!
//! For stimuli i, k the probability that i is judged more impaired is
//! `Φ(s_i − s_k)`. The log-likelihood
//! `Σ c_ik ln p̂_ik + c_ki ln p̂_ki` (probabilities clamped to `[ε, 1−ε]`)
//! is concave once the source reference is pinned at zero, so a damped
//! Newton ascent with backtracking converges reliably.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::counts::ComparisonCounts;
use super::normal::{self, PHI_INV_075};
use crate::error::{Error, Result};
use crate::stimulus::StimulusKey;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructOptions {
    pub epsilon: f64,
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Starting scales in the order of `ComparisonCounts::stimuli`; zeros when unset.
    pub start: Option<Vec<f64>>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            epsilon: 1e-6,
            gradient_tolerance: 1e-7,
            max_iterations: 1000,
            start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub source_id: String,
    /// Scales in Thurstone units, source reference at 0.
    pub scales: BTreeMap<StimulusKey, f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Log-likelihood after every accepted step, starting point first.
    pub likelihood_trace: Vec<f64>,
}

impl Reconstruction {
    pub fn to_jnd(&self) -> BTreeMap<StimulusKey, f64> {
        self.scales.iter().map(|(k, v)| (k.clone(), to_jnd(*v))).collect()
    }

    /// Number of free scale values (stimuli minus the pinned reference).
    pub fn free_parameters(&self) -> usize {
        self.scales.len().saturating_sub(1)
    }
}

/// Thurstone units to JND.
pub fn to_jnd(thurstone: f64) -> f64 {
    thurstone / PHI_INV_075
}

/// JND to Thurstone units.
pub fn from_jnd(jnd: f64) -> f64 {
    jnd * PHI_INV_075
}

/// Per-pair contribution: value, first and second derivative in x = s_i − s_k.
#[inline]
fn pair_terms(x: f64, ci: f64, ck: f64, eps: f64) -> (f64, f64, f64) {
    let p = normal::cdf(x);
    let q = normal::cdf(-x);
    if p <= eps || q <= eps {
        // clamped: flat in x
        let (pc, qc) = (p.clamp(eps, 1.0 - eps), q.clamp(eps, 1.0 - eps));
        return (ci * pc.ln() + ck * qc.ln(), 0.0, 0.0);
    }
    let phi = normal::pdf(x);
    let lp = phi / p; // d/dx ln Φ(x)
    let lq = phi / q; // -d/dx ln Φ(-x)
    let value = ci * p.ln() + ck * q.ln();
    let grad = ci * lp - ck * lq;
    let hess = -ci * lp * (x + lp) - ck * lq * (lq - x);
    (value, grad, hess)
}

/// Log-likelihood of `counts` at `scales` (indexed like `counts.stimuli`).
pub fn log_likelihood(counts: &ComparisonCounts, scales: &[f64], epsilon: f64) -> f64 {
    counts
        .pairs
        .iter()
        .map(|p| {
            let x = scales[p.i] - scales[p.k];
            let pr = normal::cdf(x).clamp(epsilon, 1.0 - epsilon);
            let qr = normal::cdf(-x).clamp(epsilon, 1.0 - epsilon);
            xlogy(p.i_worse, pr) + xlogy(p.k_worse, qr)
        })
        .sum()
}

fn xlogy(c: f64, p: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * p.ln()
    }
}

/// Log-likelihood at scales given by key (Thurstone units). Every stimulus of
/// `counts` needs a scale.
pub fn log_likelihood_at(counts: &ComparisonCounts, scales: &BTreeMap<StimulusKey, f64>, epsilon: f64) -> Result<f64> {
    let s: Vec<f64> = counts
        .stimuli
        .iter()
        .map(|k| {
            scales
                .get(k)
                .copied()
                .ok_or_else(|| Error::analysis(format!("no scale for {k}")))
        })
        .collect::<Result<_>>()?;
    Ok(log_likelihood(counts, &s, epsilon))
}

/// Connected components of the comparison graph (pairs with any responses).
pub fn components(counts: &ComparisonCounts) -> Vec<Vec<usize>> {
    let n = counts.stimuli.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for p in counts.pairs.iter().filter(|p| p.total() > 0.0) {
        let (a, b) = (find(&mut parent, p.i), find(&mut parent, p.k));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

fn gradient_hessian(counts: &ComparisonCounts, s: &[f64], eps: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = s.len();
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    let mut ll = 0.0;
    for p in &counts.pairs {
        let (v, d1, d2) = pair_terms(s[p.i] - s[p.k], p.i_worse, p.k_worse, eps);
        ll += v;
        g[p.i] += d1;
        g[p.k] -= d1;
        h[(p.i, p.i)] += d2;
        h[(p.k, p.k)] += d2;
        h[(p.i, p.k)] -= d2;
        h[(p.k, p.i)] -= d2;
    }
    (ll, g, h)
}

/// Maximum-likelihood scales of one source, pinned at the level-0 reference.
pub fn reconstruct_scales(counts: &ComparisonCounts, options: &ReconstructOptions) -> Result<Reconstruction> {
    let n = counts.stimuli.len();
    let anchor = counts
        .stimuli
        .iter()
        .position(StimulusKey::is_source)
        .ok_or_else(|| Error::analysis(format!("source {} has no comparisons with its reference", counts.source_id)))?;
    let comps = components(counts);
    if comps.len() > 1 {
        return Err(Error::Disconnected {
            source_id: counts.source_id.clone(),
            components: comps
                .iter()
                .map(|c| c.iter().map(|&i| counts.stimuli[i].to_string()).collect())
                .collect(),
        });
    }

    let mut s = match &options.start {
        Some(start) if start.len() == n => start.clone(),
        Some(_) => return Err(Error::invalid("start vector length does not match stimuli")),
        None => vec![0.0; n],
    };
    let shift = s[anchor];
    s.iter_mut().for_each(|v| *v -= shift);

    let free: Vec<usize> = (0..n).filter(|&i| i != anchor).collect();
    let eps = options.epsilon;
    let mut trace = vec![log_likelihood(counts, &s, eps)];
    let mut iterations = 0;
    let mut lambda = 0.0f64;

    loop {
        let (ll, g, h) = gradient_hessian(counts, &s, eps);
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
        if gf.amax() < options.gradient_tolerance {
            break;
        }
        if iterations >= options.max_iterations {
            return Err(Error::analysis(format!(
                "source {}: no convergence after {iterations} iterations (|g| = {:e})",
                counts.source_id,
                gf.amax()
            )));
        }
        iterations += 1;

        let neg_h = DMatrix::from_fn(free.len(), free.len(), |a, b| -h[(free[a], free[b])]);
        let step = loop {
            let mut m = neg_h.clone();
            for d in 0..free.len() {
                m[(d, d)] += lambda;
            }
            match m.cholesky() {
                Some(ch) => break ch.solve(&gf),
                None => lambda = if lambda == 0.0 { 1e-9 } else { lambda * 10.0 },
            }
        };

        // backtracking: accept only non-decreasing likelihood
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = s.clone();
            for (a, &i) in free.iter().enumerate() {
                cand[i] += t * step[a];
            }
            let cand_ll = log_likelihood(counts, &cand, eps);
            if cand_ll >= ll {
                accepted = Some((cand, cand_ll));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, cand_ll)) => {
                let gain = cand_ll - ll;
                s = cand;
                trace.push(cand_ll);
                lambda = if t == 1.0 { lambda * 0.1 } else { lambda.max(1e-9) * 10.0 };
                if lambda < 1e-12 {
                    lambda = 0.0;
                }
                // stalled at floating-point resolution
                if gain <= 1e-14 * (1.0 + ll.abs()) && gf.amax() < 1e-4 * (1.0 + counts.total()).sqrt() {
                    break;
                }
            }
            None => {
                // no representable ascent direction remains
                if gf.amax() < 1e-4 * (1.0 + counts.total()).sqrt() {
                    break;
                }
                lambda = lambda.max(1e-9) * 100.0;
                if lambda > 1e12 {
                    return Err(Error::analysis(format!("source {}: line search failed", counts.source_id)));
                }
            }
        }
    }

    let log_likelihood = log_likelihood(counts, &s, eps);
    Ok(Reconstruction {
        source_id: counts.source_id.clone(),
        scales: counts.stimuli.iter().cloned().zip(s).collect(),
        log_likelihood,
        iterations,
        likelihood_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn key(level: u8) -> StimulusKey {
        StimulusKey::at_level("s", "c", level)
    }

    fn two(c_worse: f64, c_better: f64) -> ComparisonCounts {
        ComparisonCounts::from_entries("s", [(key(1), key(0), c_worse, c_better)])
    }

    /// Grid search over Δ of the binomial likelihood, independent of the solver.
    fn grid_oracle(c1: f64, c0: f64) -> f64 {
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut d = -4.0;
        while d <= 4.0 {
            let ll = c1 * normal::cdf(d).ln() + c0 * normal::cdf(-d).ln();
            if ll > best.0 {
                best = (ll, d);
            }
            d += 1e-5;
        }
        best.1
    }

    #[test]
    fn two_stimulus_closed_form() {
        let oracle = grid_oracle(75.0, 25.0);
        assert!((oracle - 0.6745).abs() < 1e-4);
        let r = reconstruct_scales(&two(75.0, 25.0), &ReconstructOptions::default()).unwrap();
        assert_eq!(r.scales[&key(0)], 0.0);
        assert!((r.scales[&key(1)] - oracle).abs() < 1e-4);
        assert!((to_jnd(r.scales[&key(1)]) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn symmetric_counts_give_zero_scales() {
        let entries = [(0, 1), (1, 2), (0, 2), (2, 3)].map(|(a, b)| (key(a), key(b), 50.0, 50.0));
        let r = reconstruct_scales(&ComparisonCounts::from_entries("s", entries), &ReconstructOptions::default()).unwrap();
        assert!(r.scales.values().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn to_jnd_values() {
        assert!((to_jnd(0.6745) - 1.0).abs() < 1e-3);
        assert_eq!(to_jnd(0.0), 0.0);
        assert!((to_jnd(1.3490) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn disconnected_graph_names_components() {
        let c = ComparisonCounts::from_entries(
            "s",
            [(key(0), key(1), 3.0, 4.0), (key(2), key(3), 5.0, 1.0)],
        );
        match reconstruct_scales(&c, &ReconstructOptions::default()) {
            Err(Error::Disconnected { components, .. }) => {
                assert_eq!(components.len(), 2);
                assert!(components[0].contains(&"s/source/0".to_string()));
            }
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn perfect_separation_stays_finite() {
        let c = ComparisonCounts::from_entries(
            "s",
            [(key(1), key(0), 30.0, 0.0), (key(2), key(1), 20.0, 10.0)],
        );
        let r = reconstruct_scales(&c, &ReconstructOptions::default()).unwrap();
        assert!(r.scales.values().all(|v| v.is_finite()));
        assert!(r.scales[&key(1)] > 3.0);
    }

    /// Chain of planted scales, 10⁴ simulated binary judgements per pair.
    #[test]
    fn chain_recovery() {
        let planted = [0.0, 0.4, 1.1, 1.5];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut entries = Vec::new();
        for (a, b) in [(0, 1), (1, 2), (2, 3), (0, 2)] {
            let p = normal::cdf(planted[b] - planted[a]);
            let n = 10_000;
            let wins = (0..n).filter(|_| rng.random::<f64>() < p).count() as f64;
            entries.push((key(b as u8), key(a as u8), wins, n as f64 - wins));
        }
        let r = reconstruct_scales(&ComparisonCounts::from_entries("s", entries), &ReconstructOptions::default()).unwrap();
        for (l, truth) in planted.iter().enumerate() {
            assert!((r.scales[&key(l as u8)] - truth).abs() < 0.03, "{l}: {} vs {truth}", r.scales[&key(l as u8)]);
        }
    }

    fn random_counts(seed: u64) -> ComparisonCounts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for a in 0..6u8 {
            for b in (a + 1)..6u8 {
                if a + 1 == b || rng.random::<f64>() < 0.5 {
                    entries.push((key(a), key(b), rng.random_range(1..20) as f64, rng.random_range(1..20) as f64));
                }
            }
        }
        ComparisonCounts::from_entries("s", entries)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn likelihood_never_decreases(seed in any::<u64>()) {
            let r = reconstruct_scales(&random_counts(seed), &ReconstructOptions::default()).unwrap();
            prop_assert!(r.likelihood_trace.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn start_point_does_not_matter(seed in any::<u64>(), start_seed in any::<u64>()) {
            let c = random_counts(seed);
            let zero = reconstruct_scales(&c, &ReconstructOptions::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(start_seed);
            let start = (0..c.stimuli.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let opts = ReconstructOptions { start: Some(start), ..Default::default() };
            let other = reconstruct_scales(&c, &opts).unwrap();
            for (k, v) in &zero.scales {
                prop_assert!((v - other.scales[k]).abs() < 1e-5);
            }
        }

        #[test]
        fn gradient_vanishes_at_optimum(seed in any::<u64>()) {
            let c = random_counts(seed);
            let r = reconstruct_scales(&c, &ReconstructOptions::default()).unwrap();
            let s: Vec<f64> = c.stimuli.iter().map(|k| r.scales[k]).collect();
            // central finite differences of the likelihood
            for i in 0..s.len() {
                if c.stimuli[i].is_source() { continue; }
                let h = 1e-5;
                let mut up = s.clone(); up[i] += h;
                let mut dn = s.clone(); dn[i] -= h;
                let d = (log_likelihood(&c, &up, 1e-6) - log_likelihood(&c, &dn, 1e-6)) / (2.0 * h);
                prop_assert!(d.abs() < 1e-4, "d/ds_{} = {}", i, d);
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        for &(x, ci, ck) in &[(0.3, 7.0, 2.0), (-1.2, 3.0, 9.5), (2.5, 1.0, 0.5)] {
            let (_, g, h) = pair_terms(x, ci, ck, 1e-6);
            let f = |x: f64| pair_terms(x, ci, ck, 1e-6).0;
            let d = 1e-5;
            let gn = (f(x + d) - f(x - d)) / (2.0 * d);
            let hn = (f(x + d) - 2.0 * f(x) + f(x - d)) / (d * d);
            assert!((g - gn).abs() < 1e-6, "{g} vs {gn}");
            assert!((h - hn).abs() < 1e-3, "{h} vs {hn}");
        }
    }
}
