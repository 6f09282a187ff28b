//! Gaussian and chi-square distribution functions, and the one-sample
//! Kolmogorov–Smirnov test used to validate scan statistics.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF Φ(x).
///
/// Evaluated through `erfc` so the lower tail keeps full relative precision.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), without cancellation for large x.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// CDF of the chi-square distribution with one degree of freedom.
pub fn chi2_1_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        libm::erf((0.5 * t).sqrt())
    }
}

/// Result of a one-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²).
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS test of `samples` against a continuous `cdf`, with the Stephens
/// finite-n correction for the asymptotic p-value.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsTest {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    let sn = nf.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    KsTest {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!(std_normal_cdf(8.0) >= 1.0 - 1e-15);
        // 40-digit mpmath evaluation of ncdf(1)
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_542_948_585_232_5).abs() < 1e-12);
        assert!((std_normal_sf(3.0) - 0.001_349_898_031_630_094_526_651_8).abs() < 1e-15);
        let sf5 = std_normal_sf(5.0);
        assert!((sf5 / 2.866_515_718_791_939_116_737_5e-7 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_is_monotone_and_symmetric() {
        let mut last = 0.0;
        for i in -800..=800 {
            let x = i as f64 / 100.0;
            let p = std_normal_cdf(x);
            assert!(p >= last);
            assert!((p + std_normal_cdf(-x) - 1.0).abs() < 1e-15);
            last = p;
        }
    }

    #[test]
    fn chi2_matches_normal_tails() {
        for &z in &[0.3, 1.0, 2.5] {
            let lhs = chi2_1_cdf(z * z);
            let rhs = 2.0 * std_normal_cdf(z) - 1.0;
            assert!((lhs - rhs).abs() < 1e-14);
        }
        assert_eq!(chi2_1_cdf(-1.0), 0.0);
    }

    #[test]
    fn ks_accepts_uniform_grid_and_rejects_shift() {
        let n = 2000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let ok = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ok.p_value > 0.99);
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.9).collect();
        let bad = ks_test(&shifted, |x| x.clamp(0.0, 1.0));
        assert!(bad.p_value < 1e-6, "{bad:?}");
    }

    #[test]
    fn kolmogorov_sf_known_point() {
        // Q(1.36) ≈ 0.0494 (classic 5% critical value)
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
    }
}
