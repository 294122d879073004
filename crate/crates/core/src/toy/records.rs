//! Threshold-to-threshold evolution.
//!
//! Starting from the negative threshold `z⁻ = ζ + δ_{k⁻}`, the cumulative
//! change stays trapezoidal, so the whole state is the pair of extents
//! `j_L ≤ 0 ≤ j_R` (indices relative to `k⁻`):
//!
//! ```text
//! z = ζ + δ_{j_L} + δ_{j_R} - δ_{j_L + j_R}
//! ```
//!
//! Each avalanche starts at the foot with the larger `ζ` and moves it to
//! the next lower record of `ζ` on its side; the corner follows. The run
//! ends when the feet reach the two smallest `ζ`.

use crate::error::{Error, Result};
use crate::lattice::{wrap, Disorder, IntField, RealField};

use super::threshold::{j_minus, negative_threshold};
use super::{apply_avalanche, avalanche_extents, Avalanche, AvalancheEvent, Height, ToyConfig};

/// State of the record engine.
#[derive(Debug, Clone, PartialEq)]
pub struct RankState {
    len: usize,
    pub k_minus: usize,
    heights: Vec<Height>,
    /// Permutation ordering `ζ` ascending.
    pub pi: Vec<usize>,
    pub j_l: isize,
    pub j_r: isize,
    /// Offsets of the terminal sites `π_L ≤ 0 ≤ π_R`.
    pub t_l: isize,
    pub t_r: isize,
    pub z_plus_max: Height,
    /// Well numbers of the negative threshold, `min = 0`.
    pub m_minus: IntField,
}

impl RankState {
    pub fn new(disorder: &Disorder) -> Result<Self> {
        let len = disorder.len();
        let neg = negative_threshold(disorder)?;
        let jm = j_minus(disorder);
        let heights: Vec<Height> =
            jm.iter().zip(&disorder.omega).map(|(&j, &w)| Height { int: j, frac: w }).collect();
        let mut pi: Vec<usize> = (0..len).collect();
        pi.sort_by(|&a, &b| heights[a].cmp(&heights[b]).then(a.cmp(&b)));

        let k = neg.k;
        let terminal = |s: usize| s == pi[0] || s == pi[1];
        let t_r = (0..len as isize).find(|&t| terminal(wrap(k as isize + t, len))).unwrap_or(0);
        let t_l = -(0..len as isize).find(|&t| terminal(wrap(k as isize - t, len))).unwrap_or(0);

        let k_plus = (pi[0] + pi[1] + len - k) % len;
        let mut z_plus_max = None::<Height>;
        for (i, h) in heights.iter().enumerate() {
            let bump = (i == pi[0]) as i64 + (i == pi[1]) as i64 - (i == k_plus) as i64;
            let z = h.shifted(bump);
            if z_plus_max.is_none_or(|best| z > best) {
                z_plus_max = Some(z);
            }
        }

        Ok(Self {
            len,
            k_minus: k,
            heights,
            pi,
            j_l: 0,
            j_r: 0,
            t_l,
            t_r,
            z_plus_max: z_plus_max.expect("nonempty lattice"),
            m_minus: neg.m,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `ζ` at offset `t` from `k⁻`.
    #[inline]
    pub fn zeta_at(&self, t: isize) -> Height {
        self.heights[wrap(self.k_minus as isize + t, self.len)]
    }

    pub fn zeta(&self) -> RealField {
        self.heights.iter().map(|h| h.value()).collect()
    }

    /// The terminal sites `(π_L, π_R)` in original indices.
    pub fn terminals(&self) -> (usize, usize) {
        (self.site(self.t_l), self.site(self.t_r))
    }

    pub fn is_degenerate(&self) -> bool {
        self.t_l == 0 || self.t_r == 0
    }

    pub fn is_done(&self) -> bool {
        self.is_degenerate() || (self.j_l == self.t_l && self.j_r == self.t_r)
    }

    #[inline]
    fn site(&self, t: isize) -> usize {
        wrap(self.k_minus as isize + t, self.len)
    }

    /// Current `z - ζ` per original site: overlines `+1`, underlines `-1`.
    pub fn marks(&self) -> IntField {
        let mut marks = vec![0; self.len];
        if self.j_l == 0 && self.j_r == 0 {
            marks[self.k_minus] = 1;
        } else {
            marks[self.site(self.j_l)] += 1;
            marks[self.site(self.j_r)] += 1;
            marks[self.site(self.j_l + self.j_r)] -= 1;
        }
        marks
    }

    pub fn z(&self) -> RealField {
        self.marks().iter().zip(&self.heights).map(|(&mk, h)| h.shifted(mk).value()).collect()
    }

    /// `max z`.
    pub fn max_height(&self) -> Height {
        if self.j_l == 0 && self.j_r == 0 {
            self.zeta_at(0).shifted(1)
        } else {
            self.zeta_at(self.j_l).max(self.zeta_at(self.j_r)).shifted(1)
        }
    }

    /// `X = max z - z⁺_max`.
    pub fn x(&self) -> f64 {
        self.max_height().minus(self.z_plus_max)
    }

    /// Cumulative jump count `-j_L j_R`.
    pub fn sigma(&self) -> u64 {
        (-self.j_l * self.j_r) as u64
    }

    /// First offset beyond `from` (in direction `dir`) with `ζ ≤ bar`.
    fn next_record(&self, from: isize, dir: isize, bar: Height, stop: isize) -> Result<isize> {
        let mut t = from + dir;
        loop {
            if self.zeta_at(t) <= bar {
                return Ok(t);
            }
            if t == stop {
                return Err(Error::Internal(format!(
                    "record scan from offset {from} passed terminal offset {stop}"
                )));
            }
            t += dir;
        }
    }

    /// Runs the next avalanche, or returns `None` once at positive threshold.
    pub fn step(&mut self) -> Result<Option<Avalanche>> {
        if self.is_done() {
            return Ok(None);
        }
        let (i, left, right);
        if self.j_l == 0 && self.j_r == 0 {
            let bar = self.zeta_at(0);
            i = 0;
            left = self.next_record(0, -1, bar, self.t_l)?;
            right = self.next_record(0, 1, bar, self.t_r)?;
            self.j_l = left;
            self.j_r = right;
        } else if self.zeta_at(self.j_r) > self.zeta_at(self.j_l) {
            i = self.j_r;
            left = self.j_l + self.j_r;
            right = self.next_record(self.j_r, 1, self.zeta_at(self.j_r), self.t_r)?;
            self.j_r = right;
        } else {
            i = self.j_l;
            left = self.next_record(self.j_l, -1, self.zeta_at(self.j_l), self.t_l)?;
            right = self.j_l + self.j_r;
            self.j_l = left;
        }
        let site = self.site(i);
        let shift = site as isize - i;
        Ok(Some(Avalanche { site, left: left + shift, right: right + shift }))
    }

    /// Well numbers `m⁻ + (trapezoid with feet j_L, j_R)`.
    pub fn m(&self) -> IntField {
        let mut m = self.m_minus.clone();
        if self.j_l != 0 || self.j_r != 0 {
            let av = Avalanche { site: 0, left: self.j_l, right: self.j_r };
            for t in self.j_l + 1..self.j_r {
                m[self.site(t)] += av.trapezoid(t);
            }
        }
        m
    }
}

/// Outcome of one threshold-to-threshold run.
#[derive(Debug, Clone, PartialEq)]
pub struct T2tRun {
    pub len: usize,
    pub k_minus: usize,
    /// `X` of the negative threshold.
    pub x_initial: f64,
    pub events: Vec<AvalancheEvent>,
    /// `(j_L, j_R)` after each event, relative to `k⁻`.
    pub extents: Vec<(isize, isize)>,
    pub final_config: ToyConfig,
}

impl T2tRun {
    pub fn sigma_total(&self) -> u64 {
        self.events.last().map_or(0, |e| e.sigma_cum)
    }

    pub fn final_extents(&self) -> (isize, isize) {
        self.extents.last().copied().unwrap_or((0, 0))
    }
}

/// Threshold-to-threshold evolution by the record engine.
pub fn t2t_evolve(disorder: &Disorder) -> Result<T2tRun> {
    let mut state = RankState::new(disorder)?;
    let x_initial = state.x();
    let mut events = Vec::new();
    let mut extents = Vec::new();
    while let Some(av) = state.step()? {
        events.push(AvalancheEvent::new(events.len(), av, state.sigma(), state.x()));
        extents.push((state.j_l, state.j_r));
    }
    let final_config = ToyConfig::new(state.m(), disorder)?;
    Ok(T2tRun { len: state.len, k_minus: state.k_minus, x_initial, events, extents, final_config })
}

/// Repeated [`avalanche_aggregate`](super::avalanche_aggregate) on explicit
/// arrays until `max z` reaches `z_plus_max`. Each step costs O(L).
pub fn evolve_array(
    start: ToyConfig,
    z_plus_max: Height,
    cap: usize,
) -> Result<(Vec<AvalancheEvent>, ToyConfig)> {
    let mut cfg = start;
    let mut events = Vec::new();
    let mut sigma = 0;
    while cfg.max_height() > z_plus_max {
        if events.len() == cap {
            return Err(Error::IterationCap(cap));
        }
        let av = avalanche_extents(&cfg)?;
        apply_avalanche(&mut cfg, &av)?;
        sigma += av.size();
        let x = cfg.max_height().minus(z_plus_max);
        events.push(AvalancheEvent::new(events.len(), av, sigma, x));
    }
    Ok((events, cfg))
}

/// Threshold-to-threshold evolution on explicit arrays. After every
/// avalanche this checks that it started at a foot of the cumulative
/// trapezoid and stopped at its corner, and that the well numbers are
/// exactly `m⁻` plus that trapezoid.
pub fn t2t_evolve_array(disorder: &Disorder) -> Result<T2tRun> {
    let mut state = RankState::new(disorder)?;
    let len = disorder.len();
    let n = len as isize;
    let k = state.k_minus as isize;
    let mut cfg = ToyConfig::new(state.m_minus.clone(), disorder)?;
    let x_initial = state.x();
    let mut events = Vec::new();
    let mut extents = Vec::new();
    let mut sigma = 0;
    while cfg.max_height() > state.z_plus_max {
        if events.len() == len {
            return Err(Error::IterationCap(len));
        }
        let av = avalanche_extents(&cfg)?;
        apply_avalanche(&mut cfg, &av)?;
        sigma += av.size();
        let x = cfg.max_height().minus(state.z_plus_max);
        events.push(AvalancheEvent::new(events.len(), av, sigma, x));

        let i = av.site as isize;
        let same = |a: isize, b: isize| (a - b).rem_euclid(n) == 0;
        let corner = state.j_l + state.j_r;
        if state.j_l == 0 && state.j_r == 0 && same(i, k) {
            state.j_l = av.left - i;
            state.j_r = av.right - i;
        } else if same(i - k, state.j_r) && same(av.left - k, corner) {
            state.j_r += av.right - i;
        } else if same(i - k, state.j_l) && same(av.right - k, corner) {
            state.j_l -= i - av.left;
        } else {
            return Err(Error::TrapezoidViolation(format!(
                "avalanche at {} with extents ({}, {}) does not start at a foot of ({}, {})",
                av.site, av.left, av.right, state.j_l, state.j_r
            )));
        }
        if state.m() != cfg.m {
            return Err(Error::TrapezoidViolation(format!(
                "well numbers after avalanche {} differ from the trapezoid ({}, {})",
                events.len(),
                state.j_l,
                state.j_r
            )));
        }
        extents.push((state.j_l, state.j_r));
    }
    Ok(T2tRun { len, k_minus: state.k_minus, x_initial, events, extents, final_config: cfg })
}

/// Offsets of the lower records of `ζ` scanned left and right from `k⁻` up
/// to the terminals, excluding offset 0.
pub fn lower_record_offsets(state: &RankState) -> (Vec<isize>, Vec<isize>) {
    let scan = |dir: isize, stop: isize| {
        let mut out = Vec::new();
        let mut best = state.zeta_at(0);
        let mut t = 0;
        while t != stop {
            t += dir;
            if state.zeta_at(t) <= best {
                best = state.zeta_at(t);
                out.push(t);
            }
        }
        out
    };
    (scan(-1, state.t_l), scan(1, state.t_r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub j_l: isize,
    pub j_r: isize,
    pub sigma: u64,
    pub p: f64,
}

/// Extents and jump counts of the first recorded configuration with
/// `X ≤ x`. Negative `x` is treated as zero.
pub fn observables_at(run: &T2tRun, x: f64) -> Observables {
    let zero = Observables { j_l: 0, j_r: 0, sigma: 0, p: 0.0 };
    if run.events.is_empty() || x >= run.x_initial {
        return zero;
    }
    let idx = run.events.iter().position(|e| e.x_after <= x).unwrap_or(run.events.len() - 1);
    let (j_l, j_r) = run.extents[idx];
    let sigma = run.events[idx].sigma_cum;
    Observables { j_l, j_r, sigma, p: sigma as f64 / run.len as f64 }
}
