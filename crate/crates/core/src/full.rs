//! The untruncated periodic chain: well coordinates, jump response, the
//! avalanche algorithm with force, the zero-force avalanche (ZFA), and the
//! threshold search by iterated ZFA.

use crate::error::{Error, Result};
use crate::lattice::{normalize_min_zero, periodic_laplacian, Disorder, IntField, ModelParams, RealField};

/// Slack allowed when a site that already jumped drifts back above the
/// recorded maximum through rounding. Genuine re-jumps exceed it by O(η).
pub const SLIDE_TOL: f64 = 1e-9;

/// Default cap on ZFA applications in [`FullModel::threshold`].
pub const DEFAULT_ZFA_CAP: usize = 10_000_000;

/// Periodized interaction kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum KernelKind {
    /// `(η^d + η^{L-d}) / (1 - η^L)`, exact on the ring.
    #[default]
    Exact,
    /// `η^{min(d, L-d)}`, the nearest periodic image only. Off by O(η^L).
    Truncated,
}

#[derive(Debug, Clone)]
pub struct Kernel {
    kind: KernelKind,
    eta: f64,
    /// `η / (1 - η²)`.
    scale: f64,
    /// `G_L(d)` for `d` in `0..L`.
    g: RealField,
    /// Change of `ỹ_{j+d}` when `m_j` is incremented.
    response: RealField,
}

impl Kernel {
    pub fn new(params: &ModelParams, kind: KernelKind) -> Self {
        let len = params.len;
        let eta = params.eta;
        let eta_l = eta.powi(len as i32);
        let g: RealField = (0..len)
            .map(|d| match kind {
                KernelKind::Exact => (eta.powi(d as i32) + eta.powi((len - d) as i32)) / (1.0 - eta_l),
                KernelKind::Truncated => eta.powi(d.min(len - d) as i32),
            })
            .collect();
        let scale = eta / (1.0 - eta * eta);
        let response = (0..len)
            .map(|d| {
                let prev = g[(d + len - 1) % len];
                let next = g[(d + 1) % len];
                scale * (prev + next - 2.0 * g[d])
            })
            .collect();
        Self { kind, eta, scale, g, response }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// `ỹ` increment at offset `d` from a jumping site.
    pub fn response(&self, d: usize) -> f64 {
        self.response[d % self.g.len()]
    }

    /// `η/(1-η²) Σ_j G_L(i-j) f_j`.
    pub fn apply(&self, f: &[f64]) -> RealField {
        match self.kind {
            KernelKind::Exact => self.apply_recursive(f),
            KernelKind::Truncated => self.apply_direct(f),
        }
    }

    /// O(L²) direct summation.
    pub fn apply_direct(&self, f: &[f64]) -> RealField {
        let len = f.len();
        (0..len)
            .map(|i| {
                let mut acc = 0.0;
                for (j, &fj) in f.iter().enumerate() {
                    acc += self.g[(i + len - j) % len] * fj;
                }
                self.scale * acc
            })
            .collect()
    }

    /// O(L) pair of first-order recursive filters. Only valid for the exact
    /// kernel: with `A_i = f_i + η A_{i-1}` and `B_i = f_i + η B_{i+1}`
    /// taken in periodic steady state, `Σ_j G_L(i-j) f_j = A_i + B_i - f_i`.
    pub fn apply_recursive(&self, f: &[f64]) -> RealField {
        let len = f.len();
        let eta = self.eta;
        let denom = 1.0 - eta.powi(len as i32);

        let mut seed = 0.0;
        let mut w = 1.0;
        for d in 0..len {
            seed += w * f[len - 1 - d];
            w *= eta;
        }
        let mut fwd = vec![0.0; len];
        let mut acc = seed / denom;
        for i in 0..len {
            acc = f[i] + eta * acc;
            fwd[i] = acc;
        }

        let mut seed = 0.0;
        let mut w = 1.0;
        for &fd in f.iter() {
            seed += w * fd;
            w *= eta;
        }
        let mut acc = seed / denom;
        let mut out = vec![0.0; len];
        for i in (0..len).rev() {
            acc = f[i] + eta * acc;
            out[i] = self.scale * (fwd[i] + acc - f[i]);
        }
        out
    }
}

/// Well numbers with the well coordinates they induce at force `force`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullConfig {
    pub m: IntField,
    pub ytilde: RealField,
    pub force: f64,
}

impl FullConfig {
    pub fn max_coord(&self) -> f64 {
        self.ytilde.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_coord(&self) -> f64 {
        self.ytilde.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Every coordinate lies in the half-open well `(-1/2, 1/2]`.
    pub fn is_valid(&self) -> bool {
        self.ytilde.iter().all(|&y| y > -0.5 && y <= 0.5)
    }
}

/// Outcome of one threshold search.
#[derive(Debug, Clone, PartialEq)]
pub struct FullThreshold {
    pub m_plus: IntField,
    pub ytilde: RealField,
    pub f_th: f64,
    pub zfa_applications: usize,
}

/// The full model bound to one disorder realization.
#[derive(Debug, Clone)]
pub struct FullModel<'a> {
    disorder: &'a Disorder,
    params: ModelParams,
    kernel: Kernel,
}

impl<'a> FullModel<'a> {
    pub fn new(disorder: &'a Disorder, params: ModelParams, kind: KernelKind) -> Result<Self> {
        if disorder.len() != params.len {
            return Err(Error::LengthMismatch { expected: params.len, got: disorder.len() });
        }
        Ok(Self { disorder, params, kernel: Kernel::new(&params, kind) })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.params.len {
            return Err(Error::LengthMismatch { expected: self.params.len, got });
        }
        Ok(())
    }

    /// `ỹ` for well numbers `m` at force `force`.
    pub fn well_coords(&self, m: &[i64], force: f64) -> Result<RealField> {
        self.check_len(m.len())?;
        let dm = periodic_laplacian(m)?;
        let f: RealField =
            dm.iter().zip(&self.disorder.delta_alpha).map(|(&a, &b)| a as f64 + b).collect();
        let shift = force / self.params.lambda;
        let mut y = self.kernel.apply(&f);
        y.iter_mut().for_each(|v| *v += shift);
        Ok(y)
    }

    pub fn config(&self, m: IntField, force: f64) -> Result<FullConfig> {
        let ytilde = self.well_coords(&m, force)?;
        Ok(FullConfig { m, ytilde, force })
    }

    /// Adds the response to a jump at `j` to `ytilde` in place.
    pub fn apply_jump(&self, ytilde: &mut [f64], j: usize) {
        let len = ytilde.len();
        for (i, y) in ytilde.iter_mut().enumerate() {
            *y += self.kernel.response((i + len - j) % len);
        }
    }

    /// Jumps the current argmax, then every not-yet-jumped site above
    /// `level`, largest first. Returns the jump order.
    fn cascade(&self, m: &mut [i64], y: &mut [f64], level: f64) -> Result<Vec<usize>> {
        let len = m.len();
        let mut jumped = vec![false; len];
        let mut order = Vec::new();
        let mut next = Some(argmax(y));
        while let Some(j) = next {
            if order.len() == len {
                return Err(Error::SlidingDetected { site: j, jumps: order.len() });
            }
            jumped[j] = true;
            order.push(j);
            m[j] += 1;
            self.apply_jump(y, j);

            next = None;
            let mut best = level;
            for i in 0..len {
                if jumped[i] {
                    if y[i] > level + SLIDE_TOL {
                        return Err(Error::SlidingDetected { site: i, jumps: order.len() });
                    }
                } else if y[i] > best {
                    best = y[i];
                    next = Some(i);
                }
            }
        }
        Ok(order)
    }

    /// The avalanche algorithm with force. Returns the new configuration,
    /// valid at the raised force `F*`, and the number of jumps.
    pub fn avalanche_with_force(&self, cfg: &FullConfig) -> Result<(FullConfig, f64, usize)> {
        self.check_len(cfg.m.len())?;
        let shift = 0.5 - cfg.max_coord();
        let new_force = cfg.force + self.params.lambda * shift;
        let mut m = cfg.m.clone();
        let mut y: RealField = cfg.ytilde.iter().map(|v| v + shift).collect();
        let order = self.cascade(&mut m, &mut y, 0.5)?;
        let out = self.config(m, new_force)?;
        Ok((out, new_force, order.len()))
    }

    /// One zero-force avalanche. The configuration is taken at zero force.
    pub fn zfa(&self, cfg: &FullConfig) -> Result<(FullConfig, usize)> {
        let (out, order) = self.zfa_sites(&cfg.m)?;
        Ok((out, order.len()))
    }

    /// One ZFA from well numbers `m`, returning the sites jumped in order.
    pub fn zfa_sites(&self, m: &[i64]) -> Result<(FullConfig, Vec<usize>)> {
        let mut m = m.to_vec();
        let mut y = self.well_coords(&m, 0.0)?;
        let level = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let order = self.cascade(&mut m, &mut y, level)?;
        Ok((self.config(m, 0.0)?, order))
    }

    /// Iterates the ZFA from `m = 0` until every site jumps in one
    /// application, which happens exactly on the threshold family.
    pub fn threshold(&self, cap: usize) -> Result<FullThreshold> {
        self.threshold_from(vec![0; self.params.len], cap)
    }

    pub fn threshold_from(&self, m0: IntField, cap: usize) -> Result<FullThreshold> {
        self.check_len(m0.len())?;
        let len = self.params.len;
        let mut m = m0;
        for applications in 0..cap {
            let (next, order) = self.zfa_sites(&m)?;
            if order.len() == len {
                let mut m_plus = m;
                normalize_min_zero(&mut m_plus);
                let ytilde = self.well_coords(&m_plus, 0.0)?;
                let ymax = ytilde.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                return Ok(FullThreshold {
                    m_plus,
                    ytilde,
                    f_th: self.params.lambda * (0.5 - ymax),
                    zfa_applications: applications + 1,
                });
            }
            m = next.m;
        }
        Err(Error::IterationCap(cap))
    }
}

/// Index of the largest entry; the smallest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

pub fn well_coords_full(m: &[i64], disorder: &Disorder, params: &ModelParams) -> Result<RealField> {
    FullModel::new(disorder, *params, KernelKind::Exact)?.well_coords(m, params.force)
}

/// `ytilde` after a jump at `j`, using the exact periodized response.
pub fn jump_response_full(ytilde: &[f64], j: usize, params: &ModelParams) -> Result<RealField> {
    if ytilde.len() != params.len {
        return Err(Error::LengthMismatch { expected: params.len, got: ytilde.len() });
    }
    if j >= params.len {
        return Err(Error::InvalidParameter(format!("site {j} outside 0..{}", params.len)));
    }
    let kernel = Kernel::new(params, KernelKind::Exact);
    let len = params.len;
    Ok(ytilde.iter().enumerate().map(|(i, y)| y + kernel.response((i + len - j) % len)).collect())
}

pub fn avalanche_with_force(
    cfg: &FullConfig,
    disorder: &Disorder,
    params: &ModelParams,
) -> Result<(FullConfig, f64, usize)> {
    FullModel::new(disorder, *params, KernelKind::Exact)?.avalanche_with_force(cfg)
}

pub fn zfa_full(cfg: &FullConfig, disorder: &Disorder, params: &ModelParams) -> Result<(FullConfig, usize)> {
    FullModel::new(disorder, *params, KernelKind::Exact)?.zfa(cfg)
}

pub fn threshold_full(disorder: &Disorder, params: &ModelParams) -> Result<FullThreshold> {
    FullModel::new(disorder, *params, KernelKind::Exact)?.threshold(DEFAULT_ZFA_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Dense Gaussian elimination on `(λ - Δ) y = λ(m + α) + F`.
    fn dense_coords(m: &[i64], alpha: &[f64], lambda: f64, force: f64) -> Vec<f64> {
        let n = m.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            a[i][i] += lambda + 2.0;
            a[i][(i + 1) % n] -= 1.0;
            a[i][(i + n - 1) % n] -= 1.0;
            a[i][n] = lambda * (m[i] as f64 + alpha[i]) + force;
        }
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            a.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..n).map(|i| a[i][n] / a[i][i] - alpha[i] - m[i] as f64).collect()
    }

    fn random_m(seed: u64, len: usize) -> IntField {
        use rand::Rng;
        let mut rng = crate::lattice::realization_rng(seed, 99);
        (0..len).map(|_| rng.random_range(-3..=3)).collect()
    }

    #[test]
    fn flat_configuration_has_zero_coords() {
        let d = Disorder::from_alpha(vec![0.0; 9]).unwrap();
        let p = ModelParams::new(9, 4.0).unwrap();
        let y = well_coords_full(&[2; 9], &d, &p).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn matches_dense_solve() {
        for seed in 0..20 {
            let len = 16;
            let d = Disorder::generate(seed, len).unwrap();
            let p = ModelParams::new(len, 4.0).unwrap().with_force(0.3).unwrap();
            let m = random_m(seed, len);
            let model = FullModel::new(&d, p, KernelKind::Exact).unwrap();
            let dense = dense_coords(&m, &d.alpha, 4.0, 0.3);
            let fast = model.well_coords(&m, 0.3).unwrap();
            let dm = periodic_laplacian(&m).unwrap();
            let f: Vec<f64> = dm.iter().zip(&d.delta_alpha).map(|(&a, &b)| a as f64 + b).collect();
            let direct = model.kernel().apply_direct(&f);
            for i in 0..len {
                assert!((dense[i] - fast[i]).abs() < 1e-10);
                assert!((dense[i] - direct[i] - 0.3 / 4.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn response_matches_closed_form() {
        for &(len, lambda) in &[(5usize, 0.5), (16, 4.0), (33, 10.0)] {
            let p = ModelParams::new(len, lambda).unwrap();
            let eta = p.eta;
            let k = Kernel::new(&p, KernelKind::Exact);
            let c = (1.0 - eta) / (1.0 + eta);
            let el = eta.powi(len as i32);
            let mut total = 0.0;
            for d in 0..len {
                let expect = if d == 0 {
                    -2.0 * eta / (1.0 + eta) + c * 2.0 * el / (1.0 - el)
                } else {
                    c * (eta.powi(d as i32) + eta.powi((len - d) as i32)) / (1.0 - el)
                };
                assert!((k.response(d) - expect).abs() < 1e-13, "d={d}");
                total += k.response(d);
            }
            assert!(total.abs() < 1e-12);
        }
    }

    #[test]
    fn response_matches_resolve() {
        let len = 12;
        let d = Disorder::generate(5, len).unwrap();
        let p = ModelParams::new(len, 3.0).unwrap();
        let m = random_m(1, len);
        let y = well_coords_full(&m, &d, &p).unwrap();
        for j in 0..len {
            let mut mj = m.clone();
            mj[j] += 1;
            let want = well_coords_full(&mj, &d, &p).unwrap();
            let got = jump_response_full(&y, j, &p).unwrap();
            for i in 0..len {
                assert!((want[i] - got[i]).abs() < 1e-10);
            }
        }
        let ab = jump_response_full(&jump_response_full(&y, 2, &p).unwrap(), 7, &p).unwrap();
        let ba = jump_response_full(&jump_response_full(&y, 7, &p).unwrap(), 2, &p).unwrap();
        for i in 0..len {
            assert!((ab[i] - ba[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_kernel_is_close() {
        let len = 20;
        let d = Disorder::generate(8, len).unwrap();
        let p = ModelParams::new(len, 1.0).unwrap();
        let exact = FullModel::new(&d, p, KernelKind::Exact).unwrap();
        let trunc = FullModel::new(&d, p, KernelKind::Truncated).unwrap();
        let m = random_m(8, len);
        let a = exact.well_coords(&m, 0.0).unwrap();
        let b = trunc.well_coords(&m, 0.0).unwrap();
        let bound = 10.0 * p.eta.powi((len / 2) as i32);
        for i in 0..len {
            assert!((a[i] - b[i]).abs() < bound);
        }
    }

    /// Reference avalanche: raise the force, then jump one over-cusp site at
    /// a time, re-solving from scratch after every jump.
    fn naive_avalanche(cfg: &FullConfig, d: &Disorder, p: &ModelParams) -> IntField {
        let model = FullModel::new(d, *p, KernelKind::Exact).unwrap();
        let shift = 0.5 - cfg.max_coord();
        let force = cfg.force + p.lambda * shift;
        let mut m = cfg.m.clone();
        let y = model.well_coords(&m, force).unwrap();
        m[argmax(&y)] += 1;
        loop {
            let y = model.well_coords(&m, force).unwrap();
            let j = argmax(&y);
            if y[j] <= 0.5 + 1e-12 {
                return m;
            }
            m[j] += 1;
        }
    }

    #[test]
    fn avalanche_matches_naive_reference() {
        let len = 8;
        let p = ModelParams::new(len, 10.0).unwrap();
        for seed in 0..50 {
            let d = Disorder::generate(seed, len).unwrap();
            let model = FullModel::new(&d, p, KernelKind::Exact).unwrap();
            let m: IntField = random_m(seed, len).iter().map(|x| x.rem_euclid(2)).collect();
            let cfg = model.config(m, 0.0).unwrap();
            if !cfg.is_valid() {
                continue;
            }
            let (out, fstar, jumps) = model.avalanche_with_force(&cfg).unwrap();
            assert_eq!(out.m, naive_avalanche(&cfg, &d, &p));
            assert!(jumps >= 1 && jumps <= len);
            assert!(fstar >= cfg.force);
            for i in 0..len {
                assert!((0..=1).contains(&(out.m[i] - cfg.m[i])));
            }
        }
    }

    #[test]
    fn zfa_agrees_with_forced_avalanche() {
        let len = 24;
        let p = ModelParams::new(len, 2.0).unwrap();
        for seed in 0..100 {
            let d = Disorder::generate(seed, len).unwrap();
            let model = FullModel::new(&d, p, KernelKind::Exact).unwrap();
            let cfg = model.config(random_m(seed, len), 0.0).unwrap();
            let (a, _, _) = model.avalanche_with_force(&cfg).unwrap();
            let (b, _) = model.zfa(&cfg).unwrap();
            assert_eq!(a.m, b.m);
            assert!(b.max_coord() <= cfg.max_coord() + 1e-12);
        }
    }

    #[test]
    fn threshold_is_fixed_family() {
        let len = 16;
        let p = ModelParams::new(len, 10.0).unwrap();
        for seed in 0..20 {
            let d = Disorder::generate(seed, len).unwrap();
            let th = threshold_full(&d, &p).unwrap();
            assert_eq!(*th.m_plus.iter().min().unwrap(), 0);
            assert!(th.f_th > 0.0 && th.f_th <= p.lambda / 2.0);
            let model = FullModel::new(&d, p, KernelKind::Exact).unwrap();
            let cfg = model.config(th.m_plus.clone(), 0.0).unwrap();
            let (out, jumps) = model.zfa(&cfg).unwrap();
            assert_eq!(jumps, len);
            let shifted: IntField = th.m_plus.iter().map(|x| x + 1).collect();
            assert_eq!(out.m, shifted);
        }
    }

    #[test]
    fn length_mismatch() {
        let d = Disorder::generate(0, 8).unwrap();
        let p = ModelParams::new(9, 1.0).unwrap();
        assert!(matches!(FullModel::new(&d, p, KernelKind::Exact), Err(Error::LengthMismatch { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rigid_translation(seed in any::<u64>(), f1 in 0.0f64..3.0, f2 in 0.0f64..3.0) {
            let len = 11;
            let d = Disorder::generate(seed, len).unwrap();
            let p = ModelParams::new(len, 2.5).unwrap();
            let model = FullModel::new(&d, p, KernelKind::Exact).unwrap();
            let m = random_m(seed, len);
            let a = model.well_coords(&m, f1).unwrap();
            let b = model.well_coords(&m, f2).unwrap();
            for i in 0..len {
                prop_assert!((b[i] - a[i] - (f2 - f1) / 2.5).abs() < 1e-12);
            }
        }

        #[test]
        fn bottom_edge_and_consistency(seed in any::<u64>(), force in 0.0f64..1.0) {
            let len = 20;
            let p = ModelParams::new(len, 5.0).unwrap();
            prop_assert!(p.eta_below_third());
            let d = Disorder::generate(seed, len).unwrap();
            let model = FullModel::new(&d, p, KernelKind::Exact).unwrap();
            let cfg = model.config(vec![0; len], force).unwrap();
            prop_assume!(cfg.is_valid());
            let (out, fstar, _) = model.avalanche_with_force(&cfg).unwrap();
            prop_assert!(out.is_valid());
            for i in 0..len {
                prop_assert!(out.ytilde[i] > -0.5 + (fstar - force) / p.lambda);
                let y = out.ytilde[i] + d.alpha[i] + out.m[i] as f64;
                prop_assert_eq!(crate::lattice::nearest_integer(y - d.alpha[i]), out.m[i]);
            }
        }
    }
}
