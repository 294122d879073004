//! Closed-form scaling curves and densities.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Mean rescaled cumulative avalanche size
/// `Φ(u) = (6 - 4u + u² - 6e^{-u} - 2ue^{-u}) / u⁴`.
pub fn phi(u: f64) -> Result<f64> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("phi needs finite u >= 0, got {u}")));
    }
    if u < 1.0 {
        // Φ(u) = Σ_n (-1)^n (2n + 2) / (n + 4)! · uⁿ
        let mut fact = 24.0;
        let mut pow = 1.0;
        let mut sum = 0.0;
        for n in 0..30 {
            if n > 0 {
                fact *= (n + 4) as f64;
                pow *= -u;
            }
            sum += (2 * n + 2) as f64 / fact * pow;
        }
        return Ok(sum);
    }
    let e = (-u).exp();
    Ok((6.0 - 4.0 * u + u * u - 6.0 * e - 2.0 * u * e) / u.powi(4))
}

/// Density `p_u(s)` of the limiting rescaled cumulative avalanche size,
/// supported on `(0, 1/4)`.
pub fn p_u_density(u: f64, s: f64) -> Result<f64> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("p_u needs finite u >= 0, got {u}")));
    }
    if !(s > 0.0 && s < 0.25) {
        return Err(Error::Domain(format!("p_u needs s in (0, 1/4), got {s}")));
    }
    // z = 2√s cosh θ removes the 1/√(z² - 4s) endpoint singularity.
    let r = 2.0 * s.sqrt();
    let top = (1.0 / r).acosh();
    let f = |theta: f64| {
        let z = r * theta.cosh();
        let w = 1.0 - z;
        (-u * z).exp() * (4.0 + 8.0 * u * w + 2.0 * u * u * w * w)
    };
    Ok(integrate(f, 0.0, top, 1e-8))
}

/// `∫_a^b p_u(s) ds` for `0 ≤ a ≤ b ≤ 1/4`.
pub fn p_u_mass(u: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0 <= a && a <= b && b <= 0.25) {
        return Err(Error::Domain(format!("p_u mass needs 0 <= a <= b <= 1/4, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    phi(u)?;
    // s = a + (b - a) t² softens the log singularity at s = 0.
    let span = b - a;
    let f = |t: f64| {
        let s = a + span * t * t;
        if s <= 0.0 || s >= 0.25 {
            0.0
        } else {
            2.0 * span * t * p_u_density(u, s).unwrap_or(0.0)
        }
    };
    Ok(integrate(f, 0.0, 1.0, 1e-10))
}

/// Cumulative distribution of `p_u`.
pub fn p_u_cdf(u: f64, s: f64) -> Result<f64> {
    p_u_mass(u, 0.0, s.clamp(0.0, 0.25))
}

/// `K₀(x)`: power series up to `x = 2`, Steed's continued fraction above.
pub fn bessel_k0(x: f64) -> Result<f64> {
    Ok(bessel_k01(x)?.0)
}

/// `K₁(x)`, computed alongside `K₀`.
pub fn bessel_k1(x: f64) -> Result<f64> {
    Ok(bessel_k01(x)?.1)
}

fn bessel_k01(x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel K needs finite x > 0, got {x}")));
    }
    if x <= 2.0 {
        let q = 0.25 * x * x;
        let log = (0.5 * x).ln();
        // term_k = q^k / (k!)², H_k harmonic, ψ(k+1) = H_k - γ.
        let (mut term, mut h) = (1.0, 0.0);
        let (mut i0, mut i1) = (0.0, 0.0);
        let (mut s0, mut s1) = (0.0, 0.0);
        for k in 0..60 {
            let kf = k as f64;
            if k > 0 {
                term *= q / (kf * kf);
                h += 1.0 / kf;
            }
            let t1 = term / (kf + 1.0);
            i0 += term;
            i1 += t1;
            s0 += term * h;
            s1 += t1 * (2.0 * h + 1.0 / (kf + 1.0) - 2.0 * EULER_GAMMA);
            if term < 1e-18 * i0 {
                break;
            }
        }
        let k0 = -(log + EULER_GAMMA) * i0 + s0;
        let k1 = 1.0 / x + 0.5 * x * i1 * log - 0.25 * x * s1;
        return Ok((k0, k1));
    }
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let (mut q1, mut q2) = (0.0, 1.0);
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    h *= a1;
    let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    Ok((k0, k1))
}

/// Large-`u` limit density of `a = u² ς`: `2 K₀(2√a)`.
pub fn k0_density(a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("density needs a > 0, got {a}")));
    }
    Ok(2.0 * bessel_k0(2.0 * a.sqrt())?)
}

/// Cumulative distribution of `2 K₀(2√a)`: `1 - 2√a K₁(2√a)`.
pub fn k0_cdf(a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let x = 2.0 * a.sqrt();
    match bessel_k1(x) {
        Ok(k1) => 1.0 - x * k1,
        Err(_) => 1.0,
    }
}

/// Covariance of the zero-integral periodic Brownian bridge.
pub fn bridge_covariance(t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("bridge covariance needs t in [0, 1], got {t}")));
    }
    Ok((1.0 - 6.0 * t + 6.0 * t * t) / 12.0)
}

/// Covariance of the polarization process `G`.
pub fn polar_covariance(r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("polar covariance needs r in [0, 1], got {r}")));
    }
    let r2 = r * r;
    Ok((1.0 - 30.0 * r2 + 60.0 * r2 * r - 30.0 * r2 * r2) / 720.0)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        k += WGK[j] * pair;
        if j % 2 == 1 {
            g += WG[j / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    let mut stack = vec![(a, b, tol, 0u32)];
    while let Some((lo, hi, eps, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        if err <= eps || depth >= 50 || (hi - lo).abs() < 1e-15 * (1.0 + lo.abs()) {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, 0.5 * eps, depth + 1));
            stack.push((lo, mid, 0.5 * eps, depth + 1));
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn phi_values() {
        assert!((phi(0.0).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!((phi(1.0).unwrap() - (3.0 - 8.0 / std::f64::consts::E)).abs() < 1e-14);
        // Branches meet.
        assert!(rel(phi(1.0 - 1e-12).unwrap(), phi(1.0).unwrap()) < 1e-10);
        for u in [1e3, 1e5, 1e7] {
            assert!((phi(u).unwrap() * u * u - 1.0).abs() < 5.0 / u);
        }
        assert!(phi(-1.0).is_err());
    }

    #[test]
    fn phi_low_order_terms() {
        let u = 1e-3;
        let lead = 1.0 / 12.0 - u / 30.0 + u * u / 120.0;
        assert!((phi(u).unwrap() - lead + u.powi(3) / 630.0).abs() < 1e-15);
    }

    #[test]
    fn p_zero_closed_form() {
        for s in [1e-6f64, 0.01, 0.1, 0.2, 0.249] {
            let r: f64 = (1.0 - 4.0 * s).sqrt();
            let want = 2.0 * ((1.0 + r) / (1.0 - r)).ln();
            assert!((p_u_density(0.0, s).unwrap() - want).abs() < 1e-8, "s = {s}");
        }
        assert!(p_u_density(0.0, 0.25).is_err());
        assert!(p_u_density(0.0, 0.0).is_err());
    }

    #[test]
    fn p_u_normalized_with_mean_phi() {
        for u in [0.0, 0.5, 2.0, 10.0, 50.0] {
            let mass = p_u_mass(u, 0.0, 0.25).unwrap();
            assert!((mass - 1.0).abs() < 1e-6, "u = {u}: {mass}");
            let mean = integrate(
                |t: f64| {
                    let s = 0.25 * t * t;
                    if s <= 0.0 || s >= 0.25 {
                        0.0
                    } else {
                        0.5 * t * s * p_u_density(u, s).unwrap()
                    }
                },
                0.0,
                1.0,
                1e-10,
            );
            assert!((mean - phi(u).unwrap()).abs() < 1e-6, "u = {u}");
        }
    }

    #[test]
    fn bessel_reference_values() {
        let table = [
            (0.1, 2.427_069_024_702_016_6, 9.853_844_780_870_606),
            (1.0, 0.421_024_438_240_708_3, 0.601_907_230_197_234_6),
            (2.0, 0.113_893_872_749_533_4, 0.139_865_881_816_522_4),
            (5.0, 0.003_691_098_334_042_594, 0.004_044_613_445_452_164),
            (10.0, 1.778_006_231_616_918e-5, 1.864_877_345_382_558_5e-5),
        ];
        for (x, k0, k1) in table {
            assert!(rel(bessel_k0(x).unwrap(), k0) < 1e-10, "K0({x})");
            assert!(rel(bessel_k1(x).unwrap(), k1) < 1e-10, "K1({x})");
        }
        assert!(bessel_k0(0.0).is_err());
        assert!(bessel_k0(-1.0).is_err());
    }

    #[test]
    fn bessel_limits() {
        let x = 1e-8;
        assert!((bessel_k0(x).unwrap() + (x / 2.0).ln() + EULER_GAMMA).abs() < 1e-12);
        let x = 20.0;
        let asym = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
        assert!(rel(bessel_k0(x).unwrap(), asym) < 1e-2);
        // Σ_k (-1)^k ((2k-1)!!)² / (k! (8x)^k)
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..6 {
            let odd = (2 * k - 1) as f64;
            term *= -odd * odd / (k as f64 * 8.0 * x);
            series += term;
        }
        assert!(rel(bessel_k0(x).unwrap(), asym * series) < 1e-6);
    }

    #[test]
    fn k0_density_normalized() {
        // a = x²/4
        let mass = integrate(|t: f64| if t <= 0.0 { 0.0 } else { 0.5 * t * k0_density(t * t / 4.0).unwrap() }, 0.0, 60.0, 1e-12);
        assert!((mass - 1.0).abs() < 1e-9);
        for a in [0.01f64, 0.3, 2.0, 10.0] {
            let direct = integrate(|t: f64| if t <= 0.0 { 0.0 } else { 2.0 * t * k0_density(t * t).unwrap() }, 0.0, a.sqrt(), 1e-12);
            assert!((k0_cdf(a) - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn p_u_approaches_k0_form() {
        let sup = |u: f64| {
            (1..=100).fold(0.0f64, |w, i| {
                let a = 0.05 * i as f64;
                let lhs = p_u_density(u, a / (u * u)).unwrap() / (u * u);
                w.max((lhs - k0_density(a).unwrap()).abs())
            })
        };
        // The gap closes like 1/u.
        let (s50, s500, s5000) = (sup(50.0), sup(500.0), sup(5000.0));
        assert!((s50 / s500 - 10.0).abs() < 0.1 && (s500 / s5000 - 10.0).abs() < 0.1);
        assert!(s5000 < 1e-3);
    }

    #[test]
    fn covariances() {
        assert!((bridge_covariance(0.0).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!((bridge_covariance(0.5).unwrap() + 1.0 / 24.0).abs() < 1e-15);
        for t in [0.1, 0.3, 0.45] {
            assert!((bridge_covariance(t).unwrap() - bridge_covariance(1.0 - t).unwrap()).abs() < 1e-15);
        }
        assert!((polar_covariance(0.0).unwrap() - 1.0 / 720.0).abs() < 1e-15);
        assert!((polar_covariance(1.0).unwrap() - 1.0 / 720.0).abs() < 1e-15);
        let r = 1e-4;
        let incr = 2.0 * (polar_covariance(0.0).unwrap() - polar_covariance(r).unwrap());
        assert!((incr / (r * r) - 1.0 / 12.0).abs() < 1e-4);
        assert!(bridge_covariance(1.5).is_err());
        assert!(polar_covariance(-0.1).is_err());
    }
}
