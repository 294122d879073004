//! Closed-form positive and negative threshold configurations.

use crate::error::Result;
use crate::lattice::{invert_laplacian, Disorder, IntField, ModelParams, RealField};

use super::{Height, ToyConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    /// Well numbers, normalized to `min m = 0`.
    pub m: IntField,
    pub z: RealField,
    /// The correction site `k⁺` or `k⁻`.
    pub k: usize,
    /// Integer part `J ± δ_k` of the coordinates.
    pub eps: IntField,
}

impl Threshold {
    pub fn config(&self, disorder: &Disorder) -> Result<ToyConfig> {
        ToyConfig::new(self.m.clone(), disorder)
    }

    pub fn max_height(&self, disorder: &Disorder) -> Height {
        (0..self.m.len())
            .map(|i| Height { int: self.eps[i], frac: disorder.omega[i] })
            .max()
            .expect("nonempty lattice")
    }
}

fn moment(v: &[i64]) -> i64 {
    v.iter().enumerate().map(|(i, &x)| i as i64 * x).sum()
}

/// `J` of the positive threshold: `+1` on the `S + 1` smallest `ω` when
/// `S ≥ 0`, `-1` on the `|S| - 1` largest otherwise.
pub fn j_plus(disorder: &Disorder) -> IntField {
    let len = disorder.len();
    let s = disorder.s;
    let mut j = vec![0; len];
    if s >= 0 {
        for &i in &disorder.sigma[..=s as usize] {
            j[i] = 1;
        }
    } else {
        for &i in &disorder.sigma[len + 1 - s.unsigned_abs() as usize..] {
            j[i] = -1;
        }
    }
    j
}

/// `J⁻`: `+1` on the `S - 1` smallest `ω` when `S > 0`, `-1` on the
/// `|S| + 1` largest otherwise.
pub fn j_minus(disorder: &Disorder) -> IntField {
    let len = disorder.len();
    let s = disorder.s;
    let mut j = vec![0; len];
    if s > 0 {
        for &i in &disorder.sigma[..s as usize - 1] {
            j[i] = 1;
        }
    } else {
        for &i in &disorder.sigma[len - 1 - s.unsigned_abs() as usize..] {
            j[i] = -1;
        }
    }
    j
}

fn build(disorder: &Disorder, j: IntField, sign: i64) -> Result<Threshold> {
    let len = disorder.len() as i64;
    let mut dm: IntField = j.iter().zip(&disorder.rounded).map(|(a, r)| a - r).collect();
    // Δm = -r + J + sign·δ_k is admissible iff Σ i·Δm_i ≡ 0 (mod L).
    let k = (-sign * moment(&dm)).rem_euclid(len) as usize;
    dm[k] += sign;
    let m = invert_laplacian(&dm)?;
    let mut eps = j;
    eps[k] += sign;
    let z = eps.iter().zip(&disorder.omega).map(|(&e, &w)| e as f64 + w).collect();
    Ok(Threshold { m, z, k, eps })
}

/// The configuration minimizing `max z`.
pub fn positive_threshold(disorder: &Disorder) -> Result<Threshold> {
    build(disorder, j_plus(disorder), -1)
}

/// The configuration maximizing `min z`.
pub fn negative_threshold(disorder: &Disorder) -> Result<Threshold> {
    build(disorder, j_minus(disorder), 1)
}

/// Spacing `d` between the up and down corrections shared by both
/// thresholds: `k⁻ - σ(S - 1 mod L)`, equivalently `σ(S mod L) - k⁺`.
pub fn defect_spacing(disorder: &Disorder) -> Result<usize> {
    let len = disorder.len() as i64;
    let k_minus = negative_threshold(disorder)?.k as i64;
    let down = disorder.sigma[(disorder.s - 1).rem_euclid(len) as usize] as i64;
    Ok((k_minus - down).rem_euclid(len) as usize)
}

/// `z⁺_max` from the ordered fractional parts, without building `z⁺`.
pub fn threshold_max_formula(disorder: &Disorder, k_plus: usize) -> Height {
    let len = disorder.len();
    let s = disorder.s;
    let sigma = &disorder.sigma;
    let at = |r: usize, int: i64| Height { int, frac: disorder.omega[sigma[r]] };
    let neg = s.unsigned_abs() as usize;
    if s >= 0 && k_plus != sigma[s as usize] {
        at(s as usize, 1)
    } else if s > 0 {
        at(s as usize - 1, 1)
    } else if s == 0 {
        at(len - 1, 0)
    } else if k_plus != sigma[len - neg] {
        at(len - neg, 0)
    } else {
        at(len - neg - 1, 0)
    }
}

/// `z⁺_max` and the toy threshold force `λ(1/2 - η z⁺_max)`.
pub fn threshold_max_and_force(disorder: &Disorder, params: &ModelParams) -> Result<(f64, f64)> {
    let th = positive_threshold(disorder)?;
    let zmax = threshold_max_formula(disorder, th.k).value();
    Ok((zmax, params.lambda * (0.5 - params.eta * zmax)))
}

#[cfg(test)]
mod tests {
    #[test]
    fn defect_spacing_forms_agree() {
        for seed in 0..500 {
            let len = 4 + seed as usize % 40;
            let d = Disorder::generate(seed, len).unwrap();
            let n = len as i64;
            let spacing = defect_spacing(&d).unwrap() as i64;
            let up = d.sigma[d.s.rem_euclid(n) as usize] as i64;
            let k_plus = positive_threshold(&d).unwrap().k as i64;
            assert_eq!(spacing, (up - k_plus).rem_euclid(n));
            // Σ i (⟦Δα_i⟧ - J'_i) with J' = J⁻ + δ at σ(S - 1).
            let mut jp = j_minus(&d);
            jp[d.sigma[(d.s - 1).rem_euclid(n) as usize]] += 1;
            let r: Vec<i64> = d.rounded.iter().zip(&jp).map(|(a, b)| a - b).collect();
            assert_eq!(spacing, moment(&r).rem_euclid(n));
        }
    }

    use super::*;
    use crate::lattice::argsort;
    use crate::toy::zfa_toy;
    use proptest::prelude::*;

    #[test]
    fn fixed_family_and_shape() {
        for seed in 0..300 {
            let len = 3 + (seed as usize % 60);
            let d = Disorder::generate(seed, len).unwrap();
            let th = positive_threshold(&d).unwrap();
            assert_eq!(*th.m.iter().min().unwrap(), 0);
            let cfg = th.config(&d).unwrap();
            let (next, jumped) = zfa_toy(&cfg).unwrap();
            assert_eq!(jumped.len(), len);
            let plus_one: IntField = th.m.iter().map(|x| x + 1).collect();
            assert_eq!(next.m, plus_one);

            // z⁺ = ζ + δ_{π(0)} + δ_{π(1)} - δ_{k⁺} and k⁺ = π(0) + π(1) - k⁻.
            let neg = negative_threshold(&d).unwrap();
            let jm = j_minus(&d);
            let zeta: Vec<f64> = d.omega.iter().zip(&jm).map(|(w, &j)| w + j as f64).collect();
            let pi = argsort(&zeta);
            assert_eq!(th.k, (pi[0] + pi[1] + len - neg.k) % len);
            for i in 0..len {
                let expect = zeta[i] + (i == pi[0]) as i64 as f64 + (i == pi[1]) as i64 as f64
                    - (i == th.k) as i64 as f64;
                assert!((th.z[i] - expect).abs() < 1e-12);
                let zminus = zeta[i] + (i == neg.k) as i64 as f64;
                assert!((neg.z[i] - zminus).abs() < 1e-12);
            }
            let z = cfg.z();
            for i in 0..len {
                assert!((z[i] - th.z[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn negative_is_reflected_positive() {
        for seed in 0..200 {
            let len = 3 + (seed as usize % 30);
            let d = Disorder::generate(seed, len).unwrap();
            let neg = negative_threshold(&d).unwrap();
            let pos = positive_threshold(&d.negated().unwrap()).unwrap();
            let mut reflected: IntField = pos.m.iter().map(|x| -x).collect();
            crate::lattice::normalize_min_zero(&mut reflected);
            assert_eq!(neg.m, reflected);
            for i in 0..len {
                assert!((neg.z[i] + pos.z[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn formula_matches_direct_max() {
        for seed in 0..10_000 {
            let len = 3 + (seed as usize % 50);
            let d = Disorder::generate(seed, len).unwrap();
            let th = positive_threshold(&d).unwrap();
            let direct = th.max_height(&d);
            assert_eq!(threshold_max_formula(&d, th.k), direct, "seed {seed}");
            let p = ModelParams::new(len, 10.0).unwrap();
            let (zmax, f) = threshold_max_and_force(&d, &p).unwrap();
            assert!((zmax - direct.value()).abs() < 1e-12);
            assert!(f > 0.0 && f < p.lambda / 2.0);
        }
    }

    proptest! {
        #[test]
        fn negative_threshold_has_no_lower_neighbor_gap(seed in any::<u64>(), len in 3usize..200) {
            let d = Disorder::generate(seed, len).unwrap();
            let neg = negative_threshold(&d).unwrap();
            let lo = neg.z.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = neg.z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(hi - lo < 2.0);
            prop_assert_eq!(neg.eps.iter().sum::<i64>(), d.s);
        }
    }
}
