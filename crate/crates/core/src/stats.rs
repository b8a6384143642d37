//! Summary statistics for Monte Carlo samples.

use serde::Serialize;
use statrs::statistics::{Data, OrderStatistics, Statistics};

/// Two-sample Kolmogorov–Smirnov coefficient `c(0.01)`.
pub const KS_COEFFICIENT_1PCT: f64 = 1.628;

/// Moments of a sample. `sd` uses the `n - 1` denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub std_error: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let count = xs.len();
        let mean = xs.mean();
        let sd = if count > 1 { xs.std_dev() } else { 0.0 };
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in xs {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let n = count as f64;
        let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
        Self {
            count,
            mean,
            sd,
            std_error: sd / n.sqrt(),
            skewness: m3 / m2.powf(1.5),
            excess_kurtosis: m4 / (m2 * m2) - 3.0,
        }
    }

    /// `|mean - target| <= k * std_error`.
    pub fn mean_within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.mean()
}

/// Sample quantile (median-unbiased interpolation); NaN for empty input.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    Data::new(xs.to_vec()).quantile(p)
}

pub fn median(xs: &[f64]) -> f64 {
    Data::new(xs.to_vec()).median()
}

/// Standard errors of skewness and excess kurtosis for a normal sample of
/// size `n`: `sqrt(6/n)` and `sqrt(24/n)`.
pub fn normal_shape_errors(n: usize) -> (f64, f64) {
    let n = n as f64;
    ((6.0 / n).sqrt(), (24.0 / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    /// `c(0.01) sqrt((n + m) / (n m))`.
    pub critical: f64,
    pub reject: bool,
}

/// Two-sample Kolmogorov–Smirnov test at the 1% level.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    let critical = KS_COEFFICIENT_1PCT * ((nf + mf) / (nf * mf)).sqrt();
    KsResult {
        statistic: d,
        critical,
        reject: d > critical,
    }
}

/// Empirical CDF of `xs` at `t`.
pub fn ecdf(sorted: &[f64], t: f64) -> f64 {
    sorted.partition_point(|&x| x <= t) as f64 / sorted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(s.skewness.abs() < 1e-15);
        // population kurtosis of a uniform 4-point set: 1.64
        assert!((s.excess_kurtosis + 1.36).abs() < 1e-12);
        let s = Summary::of(&[0.0, 0.0, 0.0, 1.0]);
        assert!((s.skewness - 2.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        let r = ks_two_sample(&a, &a);
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
        let b: Vec<f64> = (200..300).map(f64::from).collect();
        let r = ks_two_sample(&a, &b);
        assert_eq!(r.statistic, 1.0);
        assert!(r.reject);
        assert!((r.critical - 1.628 * 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ks_handles_ties() {
        let r = ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]);
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quantiles_and_ecdf() {
        let xs = [3.0, 1.0, 2.0];
        assert_eq!(median(&xs), 2.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 3.0);
        let sorted = [1.0, 2.0, 2.0, 5.0];
        assert_eq!(ecdf(&sorted, 2.0), 0.75);
        assert_eq!(ecdf(&sorted, 0.0), 0.0);
    }
}
