//! Empirical distributions and summary statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted samples with an empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("empirical distribution needs samples".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Fraction of samples `≤ x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.samples.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// Kolmogorov-Smirnov distance to a continuous CDF.
    pub fn ks<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let n = self.len() as f64;
        self.samples.iter().enumerate().fold(0.0, |d, (i, &x)| {
            let f = cdf(x);
            d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
    }

    /// Kolmogorov-Smirnov distance to the distribution with the given
    /// interval masses. `mass(a, b)` is the probability of `(a, b]`, and
    /// `lower` the bottom of the support. Masses accumulate between
    /// consecutive samples, which avoids one full CDF evaluation per sample.
    pub fn ks_by_mass<F: Fn(f64, f64) -> f64>(&self, lower: f64, mass: F) -> f64 {
        let n = self.len() as f64;
        let mut cdf = 0.0;
        let mut prev = lower;
        let mut d: f64 = 0.0;
        for (i, &x) in self.samples.iter().enumerate() {
            if x > prev {
                cdf += mass(prev, x);
                prev = x;
            }
            d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
        }
        d
    }

    /// Two-sample Kolmogorov-Smirnov distance.
    pub fn ks_two_sample(&self, other: &Self) -> f64 {
        let (a, b) = (&self.samples, &other.samples);
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (mut i, mut j) = (0, 0);
        let mut d: f64 = 0.0;
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / na - j as f64 / nb).abs());
        }
        d
    }
}

/// Kolmogorov-Smirnov distance for integer samples against a continuous
/// CDF, comparing at half-integer cell edges.
pub fn ks_lattice<F: Fn(f64) -> f64>(samples: &[i64], cdf: F) -> f64 {
    let mut v = samples.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        let x = v[i];
        let below = i as f64 / n;
        while i < v.len() && v[i] == x {
            i += 1;
        }
        d = d.max((below - cdf(x as f64 - 0.5)).abs()).max((i as f64 / n - cdf(x as f64 + 0.5)).abs());
    }
    d
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample variance and its standard error `√((m₄ - v²) / n)`.
pub fn variance_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (var, ((m4 - var * var).max(0.0) / n).sqrt())
}

/// Least-squares slope of `ln y` against `ln x` over positive pairs.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParameter("slope needs two positive points".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("slope needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Least-squares line `y = a + b x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ecdf_steps() {
        let e = EmpiricalDistribution::new(vec![3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(e.ecdf(0.5), 0.0);
        assert_eq!(e.ecdf(2.0), 0.75);
        assert_eq!(e.ecdf(3.0), 1.0);
        assert!(EmpiricalDistribution::new(vec![]).is_err());
    }

    #[test]
    fn ks_uniform_grid() {
        let n = 100;
        let e = EmpiricalDistribution::new((0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()).unwrap();
        assert!((e.ks(|x| x) - 0.5 / n as f64).abs() < 1e-12);
        let by_mass = e.ks_by_mass(0.0, |a, b| b - a);
        assert!((by_mass - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn two_sample() {
        let a = EmpiricalDistribution::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.ks_two_sample(&a), 0.0);
        let b = EmpiricalDistribution::new(vec![3.5, 4.5, 5.5, 6.5]).unwrap();
        assert_eq!(a.ks_two_sample(&b), 0.75);
    }

    #[test]
    fn summaries() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
        let xs = [1.0, 10.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-2.0)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 2.0).abs() < 1e-12);
        assert_eq!(linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]), (1.0, 2.0));
    }

    proptest! {
        #[test]
        fn ecdf_monotone(xs in proptest::collection::vec(-1e3f64..1e3, 1..50), probes in proptest::collection::vec(-2e3f64..2e3, 2..20)) {
            let e = EmpiricalDistribution::new(xs).unwrap();
            let mut p = probes;
            p.sort_by(f64::total_cmp);
            let vals: Vec<f64> = p.iter().map(|&x| e.ecdf(x)).collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
