//! Standard normal helpers.

use statrs::function::erf::erfc;

/// Φ⁻¹(0.75): Thurstone units per JND.
pub const PHI_INV_075: f64 = 0.674_489_750_196_081_7;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_matches_quantile() {
        assert!((quantile(0.75) - PHI_INV_075).abs() < 1e-12);
        assert!((cdf(PHI_INV_075) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn tails_are_accurate() {
        // 1 - Φ(5) = 2.866515718791939e-7
        assert!((cdf(-5.0) / 2.866_515_718_791_939e-7 - 1.0).abs() < 1e-10);
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
    }
}
