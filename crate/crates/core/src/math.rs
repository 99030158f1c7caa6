//! Small numerical kernels shared across the crate.

use std::f64::consts::{LN_2, PI};

use statrs::function::gamma::ln_gamma;

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(inv_logit(x))`.
pub fn log_inv_logit(x: f64) -> f64 {
    -softplus(-x)
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Bernoulli-logit log-probability of `outcome` given linear predictor `eta`.
pub fn bernoulli_logit_lpmf(outcome: bool, eta: f64) -> f64 {
    if outcome {
        log_inv_logit(eta)
    } else {
        log_inv_logit(-eta)
    }
}

pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn log_sum_exp_slice(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `log(1 - tanh(x)^2)`, stable for large `|x|`.
pub fn log_sech2(x: f64) -> f64 {
    let a = x.abs();
    2.0 * (LN_2 - a - (-2.0 * a).exp().ln_1p())
}

/// Location-scale Student-t log density.
pub fn student_t_lpdf(x: f64, nu: f64, scale: f64) -> f64 {
    let z = x / scale;
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * PI).ln()
        - scale.ln()
        - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
}

/// Derivative of [`student_t_lpdf`] with respect to `x`.
pub fn student_t_lpdf_dx(x: f64, nu: f64, scale: f64) -> f64 {
    -(nu + 1.0) * x / (nu * scale * scale + x * x)
}

/// Half-Cauchy log density on `x > 0`.
pub fn half_cauchy_lpdf(x: f64, scale: f64) -> f64 {
    let z = x / scale;
    LN_2 - PI.ln() - scale.ln() - (z * z).ln_1p()
}

pub fn std_normal_lpdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with `n - 1` denominator.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sort_floats(values: &mut [f64]) {
    values.sort_by(|a, b| a.total_cmp(b));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &x in &[-20.0, -3.0, -0.5, 0.0, 0.7, 4.0, 30.0] {
            let naive = (1.0 + f64::exp(x)).ln();
            assert!((softplus(x) - naive).abs() < 1e-12, "{x}");
        }
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn bernoulli_complement() {
        let eta = 0.83;
        let p1 = bernoulli_logit_lpmf(true, eta).exp();
        let p0 = bernoulli_logit_lpmf(false, eta).exp();
        assert!((p1 + p0 - 1.0).abs() < 1e-15);
        assert!((bernoulli_logit_lpmf(true, 0.0) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_sech2_stable() {
        for &x in &[0.0, 0.3, -1.2, 5.0] {
            let t = f64::tanh(x);
            assert!((log_sech2(x) - (1.0 - t * t).ln()).abs() < 1e-10);
        }
        assert!(log_sech2(400.0).is_finite());
    }

    #[test]
    fn student_t_normalizes() {
        // trapezoid over a wide range; t5 tails are light enough at +-2000
        let (nu, s) = (5.0, 2.5);
        let h = 0.01;
        let total: f64 = (-200_000..=200_000)
            .map(|i| student_t_lpdf(i as f64 * h, nu, s).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn quantile_interpolates() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile_sorted(&v, 0.5), 50.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 100.0);
    }
}
