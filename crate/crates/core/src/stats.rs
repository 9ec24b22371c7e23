//! Small descriptive-statistics helpers shared across modules.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Percentile by linear interpolation between order statistics, with
/// `q` in [0, 1] and rank `h = (n - 1) q` (the "type 7" rule).
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(&v, q)
}

pub fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Pearson correlation; NaN when either side is constant.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Ranks (0-based) that sort `xs` ascending; ties keep input order.
pub fn argsort(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    idx
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Descriptives {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub p1: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p99: f64,
    /// Coefficient of variation, SD / |mean|; 0 when SD is 0.
    pub cv: f64,
}

pub fn describe(xs: &[f64]) -> Descriptives {
    let finite: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    let mut sorted = finite.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let p = |q| {
        if sorted.is_empty() {
            f64::NAN
        } else {
            percentile_sorted(&sorted, q)
        }
    };
    let m = mean(&finite);
    let s = sd(&finite);
    Descriptives {
        n: finite.len(),
        mean: m,
        sd: s,
        p1: p(0.01),
        p25: p(0.25),
        p50: p(0.50),
        p75: p(0.75),
        p99: p(0.99),
        cv: if s == 0.0 { 0.0 } else { s / m.abs() },
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided p-value of a standard normal statistic.
pub fn two_sided_p(z: f64) -> f64 {
    2.0 * (1.0 - normal_cdf(z.abs()))
}
