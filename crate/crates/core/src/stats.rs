//! Summary statistics and percentile bootstrap.

use rand::Rng;
use serde::{Deserialize, Serialize};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Unbiased sample covariance of paired values.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linearly interpolated quantile of already sorted values (the "type 7"
/// definition used by R and NumPy).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap replicates of a statistic over `len` resampled indices.
pub fn bootstrap<R, F>(len: usize, resamples: usize, rng: &mut R, mut statistic: F) -> Vec<f64>
where
    R: Rng + ?Sized,
    F: FnMut(&[usize]) -> f64,
{
    let mut idx = vec![0usize; len];
    (0..resamples)
        .map(|_| {
            idx.iter_mut().for_each(|i| *i = rng.gen_range(0..len));
            statistic(&idx)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Spread of a set of bootstrap replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub sigma: f64,
    pub ci95: Interval,
}

pub fn summarize_replicates(mut replicates: Vec<f64>) -> BootstrapSummary {
    let sigma = variance(&replicates).sqrt();
    replicates.sort_by(f64::total_cmp);
    BootstrapSummary {
        sigma,
        ci95: Interval {
            lo: quantile_sorted(&replicates, 0.025),
            hi: quantile_sorted(&replicates, 0.975),
        },
    }
}

/// Bootstrap spread of the sample mean.
pub fn bootstrap_mean<R: Rng + ?Sized>(values: &[f64], resamples: usize, rng: &mut R) -> BootstrapSummary {
    let reps = bootstrap(values.len(), resamples, rng, |idx| {
        idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
    });
    summarize_replicates(reps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::derive_stream;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&[0.1], 0.75), 0.1);
    }

    #[test]
    fn moments() {
        let v = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_eq!(mean(&v), 5.0);
        assert!((variance(&v) - 32.0 / 7.0).abs() < 1e-12);
        assert!((covariance(&v, &v) - variance(&v)).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_sigma_of_mean_matches_standard_error() {
        let mut rng = derive_stream(0, 0);
        let values: Vec<f64> = (0..400).map(|i| (i % 10) as f64).collect();
        let se = (variance(&values) / values.len() as f64).sqrt();
        let b = bootstrap_mean(&values, 2000, &mut rng);
        assert!((b.sigma / se - 1.0).abs() < 0.1, "{} vs {}", b.sigma, se);
        assert!(b.ci95.contains(mean(&values)));
    }
}
