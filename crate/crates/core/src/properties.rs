//! Exact property checks over sampled configurations, reported as
//! violation counts.

use rand::Rng;

use crate::error::Result;
use crate::full::{FullModel, KernelKind};
use crate::lattice::{argsort, periodic_laplacian, realization_rng, Disorder, IntField, ModelParams};
use crate::stats::{Check, TestReport};
use crate::toy::{
    avalanche_aggregate, j_minus, lower_record_offsets, negative_threshold, positive_threshold, t2t_evolve, toy_jump,
    zfa_toy, RankState, ToyConfig,
};

/// Tolerance for floating-point identities.
pub const TOL: f64 = 1e-9;

/// A toy jump operator, replaceable so that the checks can be run against
/// a corrupted update.
pub type JumpFn<'a> = &'a (dyn Fn(&ToyConfig, usize) -> Result<ToyConfig> + Sync);

fn report(test: &str, len: usize, n: usize, seed: u64, violations: usize, applicable: usize, need: usize) -> TestReport {
    TestReport {
        test: test.into(),
        len,
        n,
        seed,
        checks: vec![
            Check::new("violations", violations as f64, 0.0, 0.0),
            Check::new("applicable_cases", applicable as f64, need as f64, f64::INFINITY),
        ],
    }
}

fn sample_len<R: Rng>(rng: &mut R, max_len: usize) -> usize {
    rng.random_range(3..=max_len.max(3))
}

fn sample_m<R: Rng>(rng: &mut R, len: usize, spread: i64) -> IntField {
    (0..len).map(|_| rng.random_range(-spread..=spread)).collect()
}

/// Jumps conserve `Σ z` and `Σ ỹ` and raise `Σ m` by one.
pub fn sum_conservation(cases: usize, max_len: usize, seed: u64, jump: JumpFn) -> Result<TestReport> {
    let mut rng = realization_rng(seed, 1);
    let mut bad = 0;
    for c in 0..cases {
        let len = sample_len(&mut rng, max_len);
        let d = Disorder::realization(seed, c as u64, len)?;
        let m = sample_m(&mut rng, len, 2);
        let j = rng.random_range(0..len);
        let cfg = ToyConfig::new(m.clone(), &d)?;
        let out = jump(&cfg, j)?;
        let before: f64 = cfg.z().iter().sum();
        let after: f64 = out.z().iter().sum();
        let dm: i64 = out.m.iter().sum::<i64>() - m.iter().sum::<i64>();
        if (before - after).abs() > TOL || dm != 1 {
            bad += 1;
        }
        let p = ModelParams::new(len, rng.random_range(0.5..20.0))?;
        let model = FullModel::new(&d, p, KernelKind::Exact)?;
        let mut y = model.well_coords(&m, 0.0)?;
        let s0: f64 = y.iter().sum();
        model.apply_jump(&mut y, j);
        if (y.iter().sum::<f64>() - s0).abs() > TOL {
            bad += 1;
        }
    }
    Ok(report("sum_conservation", max_len, cases, seed, bad, cases, cases))
}

/// Jumps, avalanches and ZFA applications leave every fractional part
/// `ω_i` unchanged, and the tracked coordinates match `Δm + Δα` recomputed
/// from the well numbers.
pub fn fractional_conservation(cases: usize, max_len: usize, seed: u64, jump: JumpFn) -> Result<TestReport> {
    let mut rng = realization_rng(seed, 2);
    let mut bad = 0;
    let fresh_ok = |cfg: &ToyConfig, d: &Disorder| -> Result<bool> {
        let dm = periodic_laplacian(&cfg.m)?;
        let z = cfg.z();
        Ok((0..d.len()).all(|i| {
            let fresh = dm[i] as f64 + d.delta_alpha[i];
            let frac = fresh - fresh.round();
            let w = d.omega[i];
            (z[i] - fresh).abs() <= TOL && ((frac - w).abs() <= TOL || ((frac - w).abs() - 1.0).abs() <= TOL)
        }))
    };
    for c in 0..cases {
        let len = sample_len(&mut rng, max_len);
        let d = Disorder::realization(seed, c as u64, len)?;
        let cfg = ToyConfig::new(sample_m(&mut rng, len, 2), &d)?;
        let j = rng.random_range(0..len);
        let jumped = jump(&cfg, j)?;
        let zfa = zfa_toy(&cfg)?.0;
        let aggregated = if cfg.max_height() > positive_threshold(&d)?.max_height(&d) {
            avalanche_aggregate(&cfg).ok().map(|a| a.0)
        } else {
            None
        };
        let mut ok = fresh_ok(&jumped, &d)? && fresh_ok(&zfa, &d)?;
        if let Some(a) = aggregated {
            ok &= fresh_ok(&a, &d)?;
        }
        if !ok {
            bad += 1;
        }
    }
    Ok(report("fractional_conservation", max_len, cases, seed, bad, cases, cases))
}

/// In one ZFA every site jumps at most once, in both models.
pub fn jump_once(cases: usize, max_len: usize, seed: u64) -> Result<TestReport> {
    let mut rng = realization_rng(seed, 3);
    let mut bad = 0;
    for c in 0..cases {
        let len = sample_len(&mut rng, max_len);
        let d = Disorder::realization(seed, c as u64, len)?;
        let m = sample_m(&mut rng, len, 2);
        let (toy, order) = zfa_toy(&ToyConfig::new(m.clone(), &d)?)?;
        let p = ModelParams::new(len, rng.random_range(0.5..20.0))?;
        let (full, full_order) = FullModel::new(&d, p, KernelKind::Exact)?.zfa_sites(&m)?;
        for (out, ord) in [(&toy.m, &order), (&full.m, &full_order)] {
            let mut seen = vec![false; len];
            let distinct = ord.iter().all(|&s| !std::mem::replace(&mut seen[s], true));
            let steps = out.iter().zip(&m).all(|(a, b)| a - b == 0 || a - b == 1);
            if !distinct || !steps {
                bad += 1;
            }
        }
    }
    Ok(report("jump_once", max_len, cases, seed, bad, cases, cases))
}

/// After an avalanche with force at `η < 1/3` and `F ≥ 0`, every
/// coordinate satisfies `ỹ*_i > -1/2 + (F* - F)/λ`.
pub fn bottom_edge(cases: usize, max_len: usize, seed: u64) -> Result<TestReport> {
    let mut rng = realization_rng(seed, 4);
    let (mut bad, mut applicable) = (0, 0);
    let mut c = 0u64;
    while applicable < cases && c < 20 * cases as u64 {
        c += 1;
        let len = sample_len(&mut rng, max_len);
        let d = Disorder::realization(seed, c, len)?;
        let p = ModelParams::new(len, rng.random_range(1.5..50.0))?;
        if !p.eta_below_third() {
            continue;
        }
        let model = FullModel::new(&d, p, KernelKind::Exact)?;
        let m: IntField = (0..len).map(|_| rng.random_range(0..=1)).collect();
        let y0 = model.well_coords(&m, 0.0)?;
        let hi = p.lambda * (0.5 - y0.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let lo = (p.lambda * (-0.5 - y0.iter().copied().fold(f64::INFINITY, f64::min))).max(0.0);
        if !(lo < hi) {
            continue;
        }
        let force = rng.random_range(lo..hi);
        let cfg = model.config(m, force)?;
        if !cfg.is_valid() {
            continue;
        }
        applicable += 1;
        let (out, f_star, _) = model.avalanche_with_force(&cfg)?;
        let floor = -0.5 + (f_star - force) / p.lambda;
        if out.ytilde.iter().any(|&y| y <= floor - TOL || y > 0.5 + TOL) {
            bad += 1;
        }
    }
    Ok(report("bottom_edge", max_len, cases, seed, bad, applicable, cases))
}

/// The three ZFA noncrossing clauses on ordered pairs `m¹ ≤ m²`, with `m²`
/// raised by one on a random window of `m¹`. Each clause is counted only
/// where its hypothesis holds.
pub fn noncrossing(cases: usize, max_len: usize, seed: u64) -> Result<Vec<TestReport>> {
    let mut rng = realization_rng(seed, 5);
    let mut bad = [0usize; 3];
    let mut applicable = [0usize; 3];
    let le = |a: &[i64], b: &[i64]| a.iter().zip(b).all(|(x, y)| x <= y);
    for c in 0..cases {
        let len = sample_len(&mut rng, max_len);
        let d = Disorder::realization(seed, c as u64, len)?;
        let m1 = sample_m(&mut rng, len, 1);
        let start = rng.random_range(0..len);
        let width = rng.random_range(1..=len);
        let mut m2 = m1.clone();
        for t in 0..width {
            m2[(start + t) % len] += 1;
        }
        let p = ModelParams::new(len, rng.random_range(0.5..20.0))?;
        let model = FullModel::new(&d, p, KernelKind::Exact)?;

        // Toy heights compare exactly; full coordinates within TOL.
        let (c1, c2) = (ToyConfig::new(m1.clone(), &d)?, ToyConfig::new(m2.clone(), &d)?);
        let toy = (c1.max_height().cmp(&c2.max_height()), c1.argmax(), zfa_toy(&c1)?.0.m, zfa_toy(&c2)?.0.m);
        let (y1, y2) = (model.well_coords(&m1, 0.0)?, model.well_coords(&m2, 0.0)?);
        let (max1, max2) = (
            y1.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            y2.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        let ord = if (max1 - max2).abs() <= TOL { std::cmp::Ordering::Equal } else { max1.total_cmp(&max2) };
        let full = (ord, crate::full::argmax(&y1), model.zfa_sites(&m1)?.0.m, model.zfa_sites(&m2)?.0.m);

        for (ord, j, out1, out2) in [toy, full] {
            use std::cmp::Ordering::*;
            if ord == Greater {
                applicable[0] += 1;
                bad[0] += !le(&out1, &m2) as usize;
            }
            if ord == Equal && m1[j] < m2[j] {
                applicable[1] += 1;
                bad[1] += !le(&out1, &m2) as usize;
            }
            if ord != Less {
                applicable[2] += 1;
                bad[2] += !le(&out1, &out2) as usize;
            }
        }
    }
    Ok((0..3)
        .map(|k| {
            let need = if k == 1 { 1 } else { cases / 4 };
            report(["noncrossing_i", "noncrossing_ii", "noncrossing_iii"][k], max_len, cases, seed, bad[k], applicable[k], need)
        })
        .collect())
}

/// `k⁺ = π₀ + π₁ - k⁻ (mod L)` with `π₀, π₁` the two smallest `ζ`.
pub fn k_relation(cases: usize, max_len: usize, seed: u64) -> Result<TestReport> {
    let mut rng = realization_rng(seed, 6);
    let mut bad = 0;
    for c in 0..cases {
        let len = sample_len(&mut rng, max_len);
        let d = Disorder::realization(seed, c as u64, len)?;
        let jm = j_minus(&d);
        let zeta: Vec<f64> = d.omega.iter().zip(&jm).map(|(w, &j)| w + j as f64).collect();
        let pi = argsort(&zeta);
        let (kp, km) = (positive_threshold(&d)?.k, negative_threshold(&d)?.k);
        if kp != (pi[0] + pi[1] + len - km) % len {
            bad += 1;
        }
    }
    Ok(report("k_relation", max_len, cases, seed, bad, cases, cases))
}

/// Extents of successive t2t avalanches step through the lower records of
/// `ζ` on either side of `k⁻`.
pub fn record_structure(cases: usize, max_len: usize, seed: u64) -> Result<TestReport> {
    let mut rng = realization_rng(seed, 7);
    let mut bad = 0;
    for c in 0..cases {
        let len = sample_len(&mut rng, max_len);
        let d = Disorder::realization(seed, c as u64, len)?;
        let state = RankState::new(&d)?;
        let run = t2t_evolve(&d)?;
        if state.is_degenerate() {
            bad += !run.events.is_empty() as usize;
            continue;
        }
        let (left, right) = lower_record_offsets(&state);
        let mut ls: Vec<isize> = run.extents.iter().map(|e| e.0).collect();
        let mut rs: Vec<isize> = run.extents.iter().map(|e| e.1).collect();
        ls.dedup();
        rs.dedup();
        if ls != left || rs != right {
            bad += 1;
        }
    }
    Ok(report("record_structure", max_len, cases, seed, bad, cases, cases))
}

/// Every property check with the genuine jump operator.
pub fn property_suite(cases: usize, max_len: usize, seed: u64) -> Result<Vec<TestReport>> {
    let mut out = vec![
        sum_conservation(cases, max_len, seed, &toy_jump)?,
        fractional_conservation(cases, max_len, seed, &toy_jump)?,
        jump_once(cases, max_len, seed)?,
        bottom_edge(cases, max_len, seed)?,
    ];
    out.extend(noncrossing(cases, max_len, seed)?);
    out.push(k_relation(cases, max_len, seed)?);
    out.push(record_structure(cases, 4 * max_len, seed)?);
    Ok(out)
}
