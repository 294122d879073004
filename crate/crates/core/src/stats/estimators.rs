//! Monte Carlo estimators over independent realizations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curves::phi;
use super::empirical::mean_se;
use crate::error::{Error, Result};
use crate::lattice::Disorder;
use crate::toy::{flat_evolve, observables_at, t2t_evolve};

/// One row of a scaling table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub len: usize,
    pub u: f64,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

/// Per-realization observables on the `u` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSample {
    pub len: usize,
    pub realization: u64,
    pub u: Vec<f64>,
    pub sigma: Vec<u64>,
    pub p: Vec<f64>,
    /// Avalanches in the whole run.
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaScaling {
    /// Rows of `Σ(u/L) / L²`.
    pub rows: Vec<ScalingRow>,
    pub samples: Vec<ScalingSample>,
}

impl SigmaScaling {
    /// `Φ(u)` alongside each row.
    pub fn theory(&self) -> Vec<f64> {
        self.rows.iter().map(|r| phi(r.u).unwrap_or(f64::NAN)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatRow {
    pub len: usize,
    pub u: f64,
    pub n: usize,
    /// Mean polarization.
    pub mean: f64,
    pub se: f64,
    /// `X L^{1/2}`.
    pub collapse_x: f64,
    /// `E[P] L^{-3/2}`.
    pub collapse_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatScaling {
    pub rows: Vec<FlatRow>,
    pub samples: Vec<ScalingSample>,
}

impl FlatScaling {
    pub fn rows_for(&self, len: usize) -> Vec<&FlatRow> {
        self.rows.iter().filter(|r| r.len == len).collect()
    }

    /// Rescaled polarization `P(0) L^{-3/2}` of every realization at `len`.
    pub fn rescaled_totals(&self, len: usize) -> Vec<f64> {
        let scale = (len as f64).powf(-1.5);
        self.samples.iter().filter(|s| s.len == len).map(|s| s.sigma.last().copied().unwrap_or(0) as f64 / len as f64 * scale).collect()
    }
}

pub(crate) fn check_grid(u_grid: &[f64], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one realization".into()));
    }
    if u_grid.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
        return Err(Error::InvalidParameter("u grid must be finite and nonnegative".into()));
    }
    Ok(())
}

fn table(len: usize, u_grid: &[f64], samples: &[ScalingSample], value: impl Fn(&ScalingSample, usize) -> f64) -> Vec<ScalingRow> {
    u_grid
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let xs: Vec<f64> = samples.iter().map(|s| value(s, k)).collect();
            let (mean, se) = mean_se(&xs);
            ScalingRow { len, u, n: xs.len(), mean, se }
        })
        .collect()
}

/// Threshold-to-threshold runs on `n` realizations at size `len`,
/// recording `Σ(u/L)` for each `u`.
pub fn estimate_sigma_scaling(len: usize, u_grid: &[f64], n: usize, seed: u64) -> Result<SigmaScaling> {
    check_grid(u_grid, n)?;
    let samples = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let d = Disorder::realization(seed, r, len)?;
            let run = t2t_evolve(&d)?;
            let obs: Vec<_> = u_grid.iter().map(|&u| observables_at(&run, u / len as f64)).collect();
            Ok(ScalingSample {
                len,
                realization: r,
                u: u_grid.to_vec(),
                sigma: obs.iter().map(|o| o.sigma).collect(),
                p: obs.iter().map(|o| o.p).collect(),
                events: run.events.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let l2 = (len * len) as f64;
    let rows = table(len, u_grid, &samples, |s, k| s.sigma[k] as f64 / l2);
    Ok(SigmaScaling { rows, samples })
}

/// Flat-to-threshold runs for every size in `l_grid`, recording `P(u/L)`.
/// The last grid entry of each sample is `P` at `X = 0`.
pub fn estimate_flat_scaling(l_grid: &[usize], u_grid: &[f64], n: usize, seed: u64) -> Result<FlatScaling> {
    check_grid(u_grid, n)?;
    let mut grid = u_grid.to_vec();
    grid.push(0.0);
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &len in l_grid {
        let samples = (0..n as u64)
            .into_par_iter()
            .map(|r| {
                let d = Disorder::realization(seed, r, len)?;
                let run = flat_evolve(&d)?;
                let p: Vec<f64> = grid.iter().map(|&u| run.polarization_at(u / len as f64)).collect();
                Ok(ScalingSample {
                    len,
                    realization: r,
                    u: grid.clone(),
                    sigma: p.iter().map(|v| (v * len as f64).round() as u64).collect(),
                    p,
                    events: run.events.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sqrt_l = (len as f64).sqrt();
        for row in table(len, u_grid, &samples, |s, k| s.p[k]) {
            rows.push(FlatRow {
                len,
                u: row.u,
                n: row.n,
                mean: row.mean,
                se: row.se,
                collapse_x: row.u / sqrt_l,
                collapse_y: row.mean / (len as f64 * sqrt_l),
            });
        }
        all.extend(samples);
    }
    Ok(FlatScaling { rows, samples: all })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_table_shape_and_determinism() {
        let grid = [0.0, 1.0, 10.0];
        let a = estimate_sigma_scaling(64, &grid, 40, 5).unwrap();
        assert_eq!(a.rows.len(), 3);
        assert!(a.rows.iter().all(|r| r.n == 40));
        // Σ decreases as X grows.
        assert!(a.rows[0].mean >= a.rows[1].mean && a.rows[1].mean >= a.rows[2].mean);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| estimate_sigma_scaling(64, &grid, 40, 5).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn flat_rows_and_totals() {
        let f = estimate_flat_scaling(&[32, 64], &[0.0, 4.0], 10, 1).unwrap();
        assert_eq!(f.rows.len(), 4);
        assert_eq!(f.rescaled_totals(32).len(), 10);
        assert_eq!(f.rows_for(64).len(), 2);
        for s in &f.samples {
            assert_eq!(s.p[0], *s.p.last().unwrap());
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(estimate_sigma_scaling(16, &[-1.0], 1, 0).is_err());
        assert!(estimate_sigma_scaling(16, &[1.0], 0, 0).is_err());
    }
}
