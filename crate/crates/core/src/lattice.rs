//! Periodic-lattice primitives shared by the full and truncated models.
//!
//! Fields are plain `Vec`s indexed modulo their length; [`Periodic`] adds
//! wrapped access. Disorder is generated from a counter-based ChaCha stream
//! so that realization `k` of a campaign is the same regardless of which
//! worker draws it.

use std::ops::{Add, Sub};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Periodic vector of well numbers.
pub type IntField = Vec<i64>;
/// Periodic vector of real coordinates.
pub type RealField = Vec<f64>;

/// Wrapped indexing on a periodic field.
pub trait Periodic<T> {
    fn at(&self, i: isize) -> T;
}

impl<T: Copy> Periodic<T> for [T] {
    #[inline]
    fn at(&self, i: isize) -> T {
        self[wrap(i, self.len())]
    }
}

#[inline]
pub fn wrap(i: isize, len: usize) -> usize {
    i.rem_euclid(len as isize) as usize
}

/// The integer nearest to `x`, with ties resolved so that the remainder
/// `x - n` lies in the half-open interval (-1/2, +1/2].
#[inline]
pub fn nearest_integer(x: f64) -> i64 {
    (x - 0.5).ceil() as i64
}

/// Discrete periodic Laplacian `v[i-1] - 2 v[i] + v[i+1]`.
pub fn periodic_laplacian<T>(v: &[T]) -> Result<Vec<T>>
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let len = v.len();
    if len < 3 {
        return Err(Error::InvalidLattice(len));
    }
    Ok((0..len)
        .map(|i| {
            let left = v[(i + len - 1) % len];
            let right = v[(i + 1) % len];
            left - v[i] - v[i] + right
        })
        .collect())
}

/// Solves `Δm = ell` over the integers on the periodic lattice.
///
/// A solution exists iff the components of `ell` sum to zero and
/// `Σ i·ell_i ≡ 0 (mod L)`. The returned field is normalized to `min m = 0`.
pub fn invert_laplacian(ell: &[i64]) -> Result<IntField> {
    let len = ell.len();
    if len < 3 {
        return Err(Error::InvalidLattice(len));
    }
    let sum: i64 = ell.iter().sum();
    if sum != 0 {
        return Err(Error::SumNonzero(sum));
    }
    let n = len as i64;
    let moment: i64 = ell.iter().enumerate().map(|(i, &l)| i as i64 * l).sum();
    if moment.rem_euclid(n) != 0 {
        return Err(Error::Divisibility { moment, len });
    }

    // With m_0 = 0, closing the recurrence m_{i+1} = 2 m_i - m_{i-1} + ell_i
    // at i = L gives L (m_0 - m_1) = Σ_{i=1}^{L-1} (L - i) ell_i.
    let weighted: i64 = (1..len).map(|i| (n - i as i64) * ell[i]).sum();
    debug_assert_eq!(weighted.rem_euclid(n), 0);
    let mut m = vec![0i64; len];
    m[1] = -weighted / n;
    for i in 1..len - 1 {
        m[i + 1] = 2 * m[i] - m[i - 1] + ell[i];
    }
    normalize_min_zero(&mut m);
    Ok(m)
}

/// Shifts `m` by a constant so that its minimum is zero.
pub fn normalize_min_zero(m: &mut [i64]) {
    if let Some(&lo) = m.iter().min() {
        m.iter_mut().for_each(|x| *x -= lo);
    }
}

/// `λ`, the derived decay `η`, the chain length and the applied force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub len: usize,
    pub lambda: f64,
    pub eta: f64,
    pub force: f64,
}

impl ModelParams {
    pub fn new(len: usize, lambda: f64) -> Result<Self> {
        if len < 3 {
            return Err(Error::InvalidLattice(len));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { len, lambda, eta: eta_of(lambda), force: 0.0 })
    }

    pub fn with_force(mut self, force: f64) -> Result<Self> {
        if !(force.is_finite() && force >= 0.0) {
            return Err(Error::InvalidParameter(format!("force must be nonnegative, got {force}")));
        }
        self.force = force;
        Ok(self)
    }

    /// The bottom-edge bound on avalanche output holds only for `η < 1/3`.
    pub fn eta_below_third(&self) -> bool {
        self.eta < 1.0 / 3.0
    }
}

/// Decay rate of the spring-substrate kernel, `2 / (2 + λ + sqrt(λ² + 4λ))`.
pub fn eta_of(lambda: f64) -> f64 {
    2.0 / (2.0 + lambda + (lambda * lambda + 4.0 * lambda).sqrt())
}

/// Quenched phases and the quantities derived from their Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct Disorder {
    /// Phases, i.i.d. uniform on (-1/2, 1/2) when generated.
    pub alpha: RealField,
    /// `Δα`.
    pub delta_alpha: RealField,
    /// `⟦Δα_i⟧`.
    pub rounded: IntField,
    /// Fractional part `Δα_i - ⟦Δα_i⟧`.
    pub omega: RealField,
    /// `Σ ⟦Δα_i⟧`.
    pub s: i64,
    /// Permutation sorting `omega` ascending; ties go to the smaller index.
    pub sigma: Vec<usize>,
}

impl Disorder {
    /// Builds the derived quantities from explicit phases.
    ///
    /// Any finite phases are accepted; only `Δα` enters the dynamics, so a
    /// uniform shift of `alpha` leaves every derived field unchanged up to
    /// rounding.
    pub fn from_alpha(alpha: RealField) -> Result<Self> {
        let len = alpha.len();
        if len < 3 {
            return Err(Error::InvalidLattice(len));
        }
        if let Some(bad) = alpha.iter().find(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite phase {bad}")));
        }
        let delta_alpha = periodic_laplacian(&alpha)?;
        let rounded: IntField = delta_alpha.iter().map(|&d| nearest_integer(d)).collect();
        let omega: RealField =
            delta_alpha.iter().zip(&rounded).map(|(&d, &r)| d - r as f64).collect();
        let s = rounded.iter().sum();
        let sigma = argsort(&omega);
        Ok(Self { alpha, delta_alpha, rounded, omega, s, sigma })
    }

    /// Disorder drawn from stream 0 of the ChaCha generator seeded by `seed`.
    pub fn generate(seed: u64, len: usize) -> Result<Self> {
        Self::realization(seed, 0, len)
    }

    /// Realization `index` of a campaign with master seed `master`.
    pub fn realization(master: u64, index: u64, len: usize) -> Result<Self> {
        if len < 3 {
            return Err(Error::InvalidLattice(len));
        }
        let mut rng = realization_rng(master, index);
        Self::from_alpha(sample_phases(&mut rng, len))
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Disorder with every phase negated.
    pub fn negated(&self) -> Result<Self> {
        Self::from_alpha(self.alpha.iter().map(|a| -a).collect())
    }
}

/// Per-realization generator: ChaCha8 keyed by the master seed, with the
/// realization index selecting one of its 2^64 independent streams.
pub fn realization_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// `len` phases uniform on the open interval (-1/2, 1/2).
pub fn sample_phases<R: Rng + ?Sized>(rng: &mut R, len: usize) -> RealField {
    (0..len)
        .map(|_| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u - 0.5;
            }
        })
        .collect()
}

/// Indices sorting `values` ascending, ties broken by index.
pub fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}
