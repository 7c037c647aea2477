//! Sample summaries and Kolmogorov-Smirnov distances.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::{Error, Result};

/// Moments of a squared standard normal.
pub const CHI2_1_MOMENTS: [f64; 3] = [1.0, 3.0, 15.0];

/// Levels reported by [`summarize`].
pub const SUMMARY_LEVELS: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];

/// Empirical quantile with linear interpolation between order statistics
/// (the `(n - 1) p` rule).
pub fn quantile(samples: &[f64], level: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::domain(format!("quantile level {level} outside [0, 1]")));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&v, level))
}

pub fn sorted_quantile(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(samples: &[f64]) -> Result<f64> {
    quantile(samples, 0.5)
}

pub fn mean(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("mean of an empty sample"));
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Mean and its standard error (sample standard deviation over sqrt n).
pub fn mean_and_stderr(samples: &[f64]) -> Result<(f64, f64)> {
    let m = mean(samples)?;
    let n = samples.len();
    if n < 2 {
        return Ok((m, 0.0));
    }
    let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((m, (var / n as f64).sqrt()))
}

/// CDF of the chi-squared law with one degree of freedom,
/// `P(1/2, x/2) = erf(sqrt(x/2))`.
pub fn chi2_1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf((0.5 * x).sqrt())
    }
}

/// `sup_x |F_n(x) - F(x)|` for a continuous reference CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("KS distance of an empty sample"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Two-sample KS distance `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("KS distance of an empty sample"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Raw moments `E X^k`, `k = 1..=3`, with their Monte Carlo standard errors.
pub fn raw_moments(samples: &[f64]) -> Result<[(f64, f64); 3]> {
    let mut out = [(0.0, 0.0); 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let powers: Vec<f64> = samples.iter().map(|x| x.powi(k as i32 + 1)).collect();
        *slot = mean_and_stderr(&powers)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
    /// `(level, value)` pairs at [`SUMMARY_LEVELS`].
    pub quantiles: Vec<(f64, f64)>,
    pub ks_chi2_1: f64,
    pub ks_reference: Option<f64>,
}

/// Standard summary, optionally with a two-sample KS against a reference.
pub fn summarize(samples: &[f64], reference: Option<&[f64]>) -> Result<Summary> {
    let (mean, stderr) = mean_and_stderr(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = SUMMARY_LEVELS.iter().map(|&p| (p, sorted_quantile(&sorted, p))).collect();
    Ok(Summary {
        count: samples.len(),
        mean,
        stderr,
        quantiles,
        ks_chi2_1: ks_one_sample(samples, chi2_1_cdf)?,
        ks_reference: reference.map(|r| ks_two_sample(samples, r)).transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_samples() {
        let s = summarize(&[2.5; 10], None).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.stderr, 0.0);
        assert!(s.quantiles.iter().all(|q| q.1 == 2.5));
    }

    #[test]
    fn identical_sets_have_zero_two_sample_distance() {
        let a = [0.3, 1.0, -2.0, 4.0, 1.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 1.0);
    }

    #[test]
    fn empty_inputs_error() {
        assert!(summarize(&[], None).is_err());
        assert!(quantile(&[], 0.5).is_err());
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn squared_normals_fit_chi2() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..100_000)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * g
            })
            .collect();
        assert!(ks_one_sample(&v, chi2_1_cdf).unwrap() <= 0.01);
        let m = raw_moments(&v).unwrap();
        for k in 0..3 {
            assert!((m[k].0 - CHI2_1_MOMENTS[k]).abs() < 4.0 * m[k].1);
        }
    }

    #[test]
    fn chi2_median_matches_numeric_inverse() {
        // density integrated by the midpoint rule from 0 to the quoted median
        let med = 0.454_936_423_119_572_7;
        let n = 2_000_000;
        let h = med / n as f64;
        let mass: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                (-x / 2.0).exp() / (2.0 * std::f64::consts::PI * x).sqrt() * h
            })
            .sum();
        assert!((mass - 0.5).abs() < 2e-3);
        assert!((chi2_1_cdf(med) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&[0.0, 10.0], 0.25).unwrap(), 2.5);
    }
}
