//! Independent reference engines: exhaustive threshold search, a naive
//! event-driven ZFA on a dense linear solve, and the 1-d Dhar sandpile.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{argsort, invert_laplacian, periodic_laplacian, wrap, Disorder, IntField, ModelParams, RealField};
use crate::toy::{j_minus, negative_threshold, positive_threshold};

/// Largest chain the exhaustive search accepts.
pub const BRUTE_CAP: usize = 12;
/// Default bound on `|Δm_i|`.
pub const DEFAULT_BOUND: i64 = 3;

/// How well coordinates depend on `Δm` in the exhaustive search:
/// `coords = base + Σ_j Δm_j · column_j`.
pub trait Objective: Send + Sync {
    fn name(&self) -> &'static str;
    fn base(&self) -> RealField;
    /// Contribution of `Δm_j = 1` to every coordinate.
    fn column(&self, j: usize) -> RealField;
    /// True when `Δm_j` only moves coordinate `j`, which allows pruning on
    /// the partial max/min.
    fn is_local(&self) -> bool;
}

/// Toy coordinates `z = Δm + Δα`.
pub struct ToyObjective<'a>(pub &'a Disorder);

impl Objective for ToyObjective<'_> {
    fn name(&self) -> &'static str {
        "toy"
    }
    fn base(&self) -> RealField {
        self.0.delta_alpha.clone()
    }
    fn column(&self, j: usize) -> RealField {
        let mut c = vec![0.0; self.0.len()];
        c[j] = 1.0;
        c
    }
    fn is_local(&self) -> bool {
        true
    }
}

/// Full-model coordinates from the dense linear solve.
pub struct FullObjective<'a> {
    pub disorder: &'a Disorder,
    pub lambda: f64,
}

impl Objective for FullObjective<'_> {
    fn name(&self) -> &'static str {
        "full"
    }
    fn base(&self) -> RealField {
        dense_well_coords(&vec![0; self.disorder.len()], &self.disorder.alpha, self.lambda, 0.0)
    }
    fn column(&self, j: usize) -> RealField {
        // ỹ is linear in m + α, so feed the unit through α instead: φ with
        // Δφ = e_j - 1/L. The uniform parts cancel because ΣΔm = 0.
        let len = self.disorder.len();
        let zero = vec![0.0; len];
        let mut phi = vec![0.0; len];
        for (i, p) in phi.iter_mut().enumerate() {
            let d = wrap(i as isize - j as isize, len) as f64;
            *p = d * (len as f64 - d) / (2.0 * len as f64);
        }
        let with = dense_well_coords(&vec![0; len], &phi, self.lambda, 0.0);
        let without = dense_well_coords(&vec![0; len], &zero, self.lambda, 0.0);
        with.iter().zip(&without).map(|(a, b)| a - b).collect()
    }
    fn is_local(&self) -> bool {
        false
    }
}

/// `ỹ` from `(λ - Δ) y = λ(m + α) + F` by Gaussian elimination with
/// partial pivoting. O(L³); reference use only.
pub fn dense_well_coords(m: &[i64], alpha: &[f64], lambda: f64, force: f64) -> RealField {
    let n = m.len();
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        a[i][i] += lambda + 2.0;
        a[i][(i + 1) % n] -= 1.0;
        a[i][(i + n - 1) % n] -= 1.0;
        a[i][n] = lambda * (m[i] as f64 + alpha[i]) + force;
    }
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap_or(c);
        a.swap(c, p);
        let pivot = a[c].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != c && row[c] != 0.0 {
                let f = row[c] / pivot[c];
                for k in c..=n {
                    row[k] -= f * pivot[k];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i] - alpha[i] - m[i] as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteResult {
    pub m_plus: IntField,
    pub m_minus: IntField,
    /// `min max` coordinate.
    pub max_value: f64,
    /// `max min` coordinate.
    pub min_value: f64,
    /// Admissible `Δm` within `1e-12` of the optimum, per side.
    pub ties: (usize, usize),
    pub visited: u64,
}

struct Search {
    len: usize,
    bound: i64,
    local: bool,
    columns: Vec<RealField>,
    best_max: f64,
    best_min: f64,
    arg_max: Option<IntField>,
    arg_min: Option<IntField>,
    ties: (usize, usize),
    visited: u64,
    ell: IntField,
}

const TIE: f64 = 1e-12;

impl Search {
    fn leaf(&mut self, coords: &[f64]) {
        self.visited += 1;
        let moment: i64 = self.ell.iter().enumerate().map(|(i, &x)| i as i64 * x).sum();
        if moment.rem_euclid(self.len as i64) != 0 {
            return;
        }
        let hi = coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = coords.iter().copied().fold(f64::INFINITY, f64::min);
        if hi < self.best_max - TIE {
            self.best_max = hi;
            self.arg_max = Some(self.ell.clone());
            self.ties.0 = 1;
        } else if (hi - self.best_max).abs() <= TIE {
            self.ties.0 += 1;
        }
        if lo > self.best_min + TIE {
            self.best_min = lo;
            self.arg_min = Some(self.ell.clone());
            self.ties.1 = 1;
        } else if (lo - self.best_min).abs() <= TIE {
            self.ties.1 += 1;
        }
    }

    fn add(&self, coords: &mut [f64], j: usize, by: i64) {
        if by != 0 {
            for (c, k) in coords.iter_mut().zip(&self.columns[j]) {
                *c += by as f64 * k;
            }
        }
    }

    fn dfs(&mut self, j: usize, sum: i64, coords: &mut RealField, part_hi: f64, part_lo: f64) {
        if self.local && part_hi > self.best_max + TIE && part_lo < self.best_min - TIE {
            return;
        }
        if j == self.len - 1 {
            let last = -sum;
            if last.abs() > self.bound {
                return;
            }
            self.ell[j] = last;
            self.add(coords, j, last);
            self.leaf(coords);
            self.add(coords, j, -last);
            return;
        }
        let rest = (self.len - 1 - j) as i64 * self.bound;
        for v in -self.bound..=self.bound {
            let s = sum + v;
            if s.abs() > rest {
                continue;
            }
            self.ell[j] = v;
            self.add(coords, j, v);
            let (hi, lo) = if self.local { (part_hi.max(coords[j]), part_lo.min(coords[j])) } else { (part_hi, part_lo) };
            self.dfs(j + 1, s, coords, hi, lo);
            self.add(coords, j, -v);
        }
    }
}

/// Exhaustive search over `Δm ∈ [-B, B]^L` satisfying the Laplacian
/// inversion conditions, minimizing the maximum and maximizing the minimum
/// coordinate under `objective`.
pub fn brute_threshold_with(objective: &dyn Objective, len: usize, bound: i64) -> Result<BruteResult> {
    if len > BRUTE_CAP {
        return Err(Error::Infeasible { len, cap: BRUTE_CAP });
    }
    if len < 3 {
        return Err(Error::InvalidLattice(len));
    }
    if bound < 1 {
        return Err(Error::InvalidParameter(format!("bound must be positive, got {bound}")));
    }
    let mut s = Search {
        len,
        bound,
        local: objective.is_local(),
        columns: (0..len).map(|j| objective.column(j)).collect(),
        best_max: f64::INFINITY,
        best_min: f64::NEG_INFINITY,
        arg_max: None,
        arg_min: None,
        ties: (0, 0),
        visited: 0,
        ell: vec![0; len],
    };
    let mut coords = objective.base();
    s.dfs(0, 0, &mut coords, f64::NEG_INFINITY, f64::INFINITY);
    let plus = s.arg_max.ok_or_else(|| Error::Internal("no admissible configuration".into()))?;
    let minus = s.arg_min.ok_or_else(|| Error::Internal("no admissible configuration".into()))?;
    Ok(BruteResult {
        m_plus: invert_laplacian(&plus)?,
        m_minus: invert_laplacian(&minus)?,
        max_value: s.best_max,
        min_value: s.best_min,
        ties: s.ties,
        visited: s.visited,
    })
}

/// Exhaustive toy-model thresholds.
pub fn brute_threshold(disorder: &Disorder, bound: i64) -> Result<BruteResult> {
    brute_threshold_with(&ToyObjective(disorder), disorder.len(), bound)
}

/// Exhaustive full-model thresholds.
pub fn brute_threshold_full(disorder: &Disorder, params: &ModelParams, bound: i64) -> Result<BruteResult> {
    brute_threshold_with(&FullObjective { disorder, lambda: params.lambda }, disorder.len(), bound)
}

/// Event-driven ZFA that recomputes all coordinates from scratch after each
/// jump. `coords` maps well numbers to coordinates.
pub fn naive_zfa<F>(m: &[i64], coords: F) -> Result<IntField>
where
    F: Fn(&[i64]) -> RealField,
{
    let len = m.len();
    let mut m = m.to_vec();
    let y = coords(&m);
    let level = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = (0..len).fold(0, |b, i| if y[i] > y[b] { i } else { b });
    m[first] += 1;
    for _ in 0..len {
        let y = coords(&m);
        let j = (0..len).fold(0, |b, i| if y[i] > y[b] { i } else { b });
        if y[j] <= level + 1e-12 {
            return Ok(m);
        }
        m[j] += 1;
    }
    Err(Error::SlidingDetected { site: 0, jumps: len + 1 })
}

/// Naive ZFA for the toy model.
pub fn naive_zfa_toy(m: &[i64], disorder: &Disorder) -> Result<IntField> {
    naive_zfa(m, |m| {
        let dm = periodic_laplacian(m).expect("length checked by caller");
        dm.iter().zip(&disorder.delta_alpha).map(|(&a, &b)| a as f64 + b).collect()
    })
}

/// Naive ZFA for the full model on the dense solve.
pub fn naive_zfa_full(m: &[i64], disorder: &Disorder, params: &ModelParams) -> Result<IntField> {
    naive_zfa(m, |m| dense_well_coords(m, &disorder.alpha, params.lambda, 0.0))
}

/// Heights on the interior sites `1..=𝓛` of a 1-d sandpile; the pockets
/// `0` and `𝓛 + 1` are implicit and absorb every grain they receive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandpileState {
    /// `h[t - 1]` is the height at interior site `t`.
    pub h: Vec<u32>,
}

impl SandpileState {
    pub fn new(h: Vec<u32>) -> Self {
        Self { h }
    }

    pub fn interior(&self) -> usize {
        self.h.len()
    }

    pub fn is_stable(&self) -> bool {
        self.h.iter().all(|&x| x <= 1)
    }

    /// Adds one grain at interior site `t` in `1..=𝓛`.
    pub fn add_grain(&mut self, t: usize) -> Result<()> {
        if t == 0 || t > self.h.len() {
            return Err(Error::InvalidParameter(format!("grain site {t} outside 1..={}", self.h.len())));
        }
        self.h[t - 1] += 1;
        Ok(())
    }

    fn topple(&mut self, idx: usize) {
        self.h[idx] -= 2;
        if idx > 0 {
            self.h[idx - 1] += 1;
        }
        if idx + 1 < self.h.len() {
            self.h[idx + 1] += 1;
        }
    }
}

/// Topples every site with `h ≥ 2` until stable, last-in first-out.
pub fn sandpile_stabilize(state: &SandpileState) -> (SandpileState, u64) {
    let mut s = state.clone();
    let mut stack: Vec<usize> = (0..s.h.len()).filter(|&i| s.h[i] >= 2).collect();
    let mut topples = 0;
    while let Some(i) = stack.pop() {
        if s.h[i] < 2 {
            continue;
        }
        s.topple(i);
        topples += 1;
        for j in [i.wrapping_sub(1), i, i + 1] {
            if j < s.h.len() && s.h[j] >= 2 {
                stack.push(j);
            }
        }
    }
    (s, topples)
}

/// Stabilization that picks the next unstable site uniformly at random.
pub fn sandpile_stabilize_random<R: Rng + ?Sized>(state: &SandpileState, rng: &mut R) -> (SandpileState, u64) {
    let mut s = state.clone();
    let mut topples = 0;
    loop {
        let mut unstable: Vec<usize> = (0..s.h.len()).filter(|&i| s.h[i] >= 2).collect();
        if unstable.is_empty() {
            return (s, topples);
        }
        unstable.shuffle(rng);
        s.topple(unstable[0]);
        topples += 1;
    }
}

/// Outcome of comparing threshold-to-threshold evolution with one sandpile
/// avalanche.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub holds: bool,
    /// Toy site at ring position 0, the left pocket.
    pub origin: usize,
    /// Interior position receiving the grain.
    pub grain: usize,
    pub topples: u64,
    pub initial: SandpileState,
    pub stabilized: SandpileState,
    pub expected: SandpileState,
}

/// Maps threshold configurations to 1-d sandpile states and checks that one
/// added grain carries the negative threshold to the positive one.
///
/// Convention: with `π_R` the first of the two smallest `ζ` found scanning
/// right from `k⁻` and `π_L` the other, ring position `t` holds toy site
/// `π_L + t`. Positions `0` and `L - 1` are the pockets, so `𝓛 = L - 2`.
/// An interior site has height `1 + mark`, except `π_R` whose height is its
/// mark alone; marks are `z - ζ`. The grain goes to the image of `k⁻`.
pub fn correspondence_check(disorder: &Disorder) -> Result<CorrespondenceReport> {
    let len = disorder.len();
    let neg = negative_threshold(disorder)?;
    let pos = positive_threshold(disorder)?;
    let jm = j_minus(disorder);
    let zeta: RealField = disorder.omega.iter().zip(&jm).map(|(w, &j)| w + j as f64).collect();
    let pi = argsort(&zeta);
    let k = neg.k;
    let is_terminal = |s: usize| s == pi[0] || s == pi[1];
    let right = (0..len).map(|t| (k + t) % len).find(|&s| is_terminal(s)).expect("two terminals");
    let left = if right == pi[0] { pi[1] } else { pi[0] };

    let image = |eps: &[i64]| -> SandpileState {
        let h = (1..len - 1)
            .map(|t| {
                let s = (left + t) % len;
                let mark = eps[s] - jm[s];
                let base = if s == right { 0 } else { 1 };
                (base + mark).max(0) as u32
            })
            .collect();
        SandpileState::new(h)
    };
    // Heights of the negative threshold without the k⁻ overline: the
    // recurrent state before the grain is added.
    let mut before = neg.eps.clone();
    before[k] -= 1;
    let initial = image(&before);
    let grain = wrap(k as isize - left as isize, len);
    let mut loaded = initial.clone();
    if grain >= 1 && grain <= len - 2 {
        loaded.add_grain(grain)?;
    }
    let (stabilized, topples) = sandpile_stabilize(&loaded);
    let expected = image(&pos.eps);
    Ok(CorrespondenceReport {
        holds: stabilized == expected,
        origin: left,
        grain,
        topples,
        initial,
        stabilized,
        expected,
    })
}
