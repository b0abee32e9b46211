//! Modified Bessel functions of integer order, parabolic cylinder functions,
//! gamma ratios and the cosine integral.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

use crate::error::{Error, Result};
use crate::quad;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LN_MAX: f64 = 709.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpecFunResult {
    pub value: f64,
    pub abs_error_estimate: f64,
}

impl SpecFunResult {
    fn new(value: f64, rel: f64) -> Self {
        SpecFunResult {
            value,
            abs_error_estimate: (value * rel).abs(),
        }
    }
}

fn miller_start(n: usize, x: f64) -> usize {
    let m = (n as f64).max(x);
    (m + 30.0 + (40.0 * m).sqrt()) as usize + n.min(1)
}

/// Returns `e^{-x} I_0(x)` and the ratios `I_{k+1}(x)/I_k(x)` for `k < n`.
///
/// Ratios come from the downward continued-fraction recurrence; the scale uses
/// the normalization `e^x = I_0 + 2 sum_{k>=1} I_k`.
pub fn bessel_i_ratios(n: usize, x: f64) -> (f64, Vec<f64>) {
    let start = miller_start(n, x);
    let mut rho = vec![0.0; start];
    let mut r = 0.0;
    for k in (0..start).rev() {
        r = x / (2.0 * (k as f64 + 1.0) + x * r);
        rho[k] = r;
    }
    let mut sum = 0.0;
    let mut prod = 1.0;
    for &rk in &rho {
        prod *= rk;
        sum += prod;
        if prod < 1e-18 * sum {
            break;
        }
    }
    let i0e = 1.0 / (1.0 + 2.0 * sum);
    rho.truncate(n);
    (i0e, rho)
}

/// Exponentially scaled `e^{-x} I_k(x)` for `k = 0..=n` (underflows to zero gracefully).
pub fn bessel_i_scaled_seq(n: usize, x: f64) -> Vec<f64> {
    let (i0e, rho) = bessel_i_ratios(n, x);
    let mut out = Vec::with_capacity(n + 1);
    let mut v = i0e;
    out.push(v);
    for r in rho {
        v *= r;
        out.push(v);
    }
    out
}

pub fn modified_bessel_i(n: usize, x: f64) -> Result<SpecFunResult> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("I_n requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(SpecFunResult {
            value: if n == 0 { 1.0 } else { 0.0 },
            abs_error_estimate: 0.0,
        });
    }
    let (i0e, rho) = bessel_i_ratios(n, x);
    let ln_v = x + i0e.ln() + rho.iter().map(|r| r.ln()).sum::<f64>();
    if ln_v > LN_MAX {
        return Err(Error::Overflow(format!("I_{n}({x}) exceeds f64 range")));
    }
    Ok(SpecFunResult::new(ln_v.exp(), 4e-16 * (n as f64 + 4.0)))
}

/// Exponentially scaled `e^x K_0(x)` and `e^x K_1(x)` for `x > 0`.
pub fn bessel_k01_scaled(x: f64) -> (f64, f64) {
    if x <= 2.0 {
        let t = 0.25 * x * x;
        let lnh = (0.5 * x).ln();
        let mut term0 = 1.0; // t^k/(k!)^2
        let mut term1 = 1.0; // t^k/(k!(k+1)!)
        let mut harm = 0.0; // H_k
        let mut i0 = 0.0;
        let mut s0 = 0.0;
        let mut i1 = 0.0;
        let mut s1 = 0.0;
        for k in 0..40 {
            let kf = k as f64;
            if k > 0 {
                term0 *= t / (kf * kf);
                term1 *= t / (kf * (kf + 1.0));
                harm += 1.0 / kf;
            }
            i0 += term0;
            s0 += term0 * harm;
            i1 += term1;
            let psi_sum = -2.0 * EULER_GAMMA + 2.0 * harm + 1.0 / (kf + 1.0);
            s1 += psi_sum * term1;
            if term0 < 1e-18 * i0 && k > 2 {
                break;
            }
        }
        let k0 = -(lnh + EULER_GAMMA) * i0 + s0;
        let k1 = 1.0 / x + lnh * (0.5 * x * i1) - 0.25 * x * s1;
        let e = x.exp();
        (k0 * e, k1 * e)
    } else {
        // Steed's continued fraction for the order-zero pair.
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 1..100_000 {
            let fi = i as f64;
            a -= 2.0 * fi;
            c = -a * c / (fi + 1.0);
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
        let k0e = (PI / (2.0 * x)).sqrt() / s;
        let k1e = k0e * (x + 0.5 - h) / x;
        (k0e, k1e)
    }
}

/// Ratios `K_{k+1}(x)/K_k(x)` for `k < n` by upward recurrence.
pub fn bessel_k_ratios(n: usize, x: f64) -> Vec<f64> {
    let (k0e, k1e) = bessel_k01_scaled(x);
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut s = k1e / k0e;
    out.push(s);
    for k in 1..n {
        s = 1.0 / s + 2.0 * k as f64 / x;
        out.push(s);
    }
    out
}

/// Exponentially scaled `e^x K_k(x)` for `k = 0..=n`; may overflow to infinity for large orders.
pub fn bessel_k_scaled_seq(n: usize, x: f64) -> Vec<f64> {
    let (k0e, _) = bessel_k01_scaled(x);
    let mut out = Vec::with_capacity(n + 1);
    let mut v = k0e;
    out.push(v);
    for r in bessel_k_ratios(n, x) {
        v *= r;
        out.push(v);
    }
    out
}

pub fn modified_bessel_k(n: usize, x: f64) -> Result<SpecFunResult> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("K_n requires x > 0, got {x}")));
    }
    let (k0e, _) = bessel_k01_scaled(x);
    let ln_v = -x + k0e.ln() + bessel_k_ratios(n, x).iter().map(|r| r.ln()).sum::<f64>();
    if ln_v > LN_MAX {
        return Err(Error::Overflow(format!("K_{n}({x}) exceeds f64 range")));
    }
    Ok(SpecFunResult::new(ln_v.exp(), 4e-16 * (n as f64 + 4.0)))
}

/// `D_m(x)` for `m = 0..=mmax` via the Hermite recurrence.
pub fn parabolic_cylinder_d_seq(mmax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(mmax + 1);
    let d0 = (-0.25 * x * x).exp();
    out.push(d0);
    if mmax >= 1 {
        out.push(x * d0);
    }
    for m in 1..mmax {
        let next = x * out[m] - m as f64 * out[m - 1];
        out.push(next);
    }
    out
}

/// `D_{-nu}(x)` for integer `nu >= 1` from its Laplace-type integral representation.
fn parabolic_cylinder_d_negative(nu: usize, x: f64) -> Result<SpecFunResult> {
    let a = nu as f64 - 1.0;
    let g = |t: f64| {
        if nu == 1 {
            -x * t - 0.5 * t * t
        } else if t <= 0.0 {
            f64::NEG_INFINITY
        } else {
            a * t.ln() - x * t - 0.5 * t * t
        }
    };
    let tpk = 0.5 * (-x + (x * x + 4.0 * a).sqrt());
    let gpk = g(tpk.max(0.0));
    let mut thi = tpk.max(0.0) + 1.0;
    while g(thi) - gpk > -46.0 {
        thi = tpk.max(0.0) + 2.0 * (thi - tpk.max(0.0));
    }
    let mut breaks = vec![0.0];
    if tpk > 0.0 {
        breaks.push(tpk);
    }
    breaks.push(thi);
    let mut f = |t: f64| (g(t) - gpk).exp();
    let (j, err) = quad::adaptive_breaks(&mut f, &breaks, 0.0, 1e-14, 4000)?;
    let ln_v = -0.25 * x * x + gpk - ln_gamma(nu as f64) + j.ln();
    if ln_v > LN_MAX {
        return Err(Error::Overflow(format!("D_-{nu}({x}) exceeds f64 range")));
    }
    let value = ln_v.exp();
    Ok(SpecFunResult {
        value,
        abs_error_estimate: value * (err / j + 1e-15),
    })
}

/// Parabolic cylinder function `D_p(x)` of integer order.
pub fn parabolic_cylinder_d(p: i64, x: f64) -> Result<SpecFunResult> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("D_p requires finite x, got {x}")));
    }
    if p >= 0 {
        let seq = parabolic_cylinder_d_seq(p as usize, x);
        let value = seq[p as usize];
        let scale = seq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(SpecFunResult {
            value,
            abs_error_estimate: 1e-15 * (p as f64 + 1.0) * scale.max(value.abs()),
        })
    } else {
        parabolic_cylinder_d_negative((-p) as usize, x)
    }
}

/// `D'_p(x) = (x/2) D_p(x) - D_{p+1}(x)`.
pub fn parabolic_cylinder_d_deriv(p: i64, x: f64) -> Result<SpecFunResult> {
    let d = parabolic_cylinder_d(p, x)?;
    let d1 = parabolic_cylinder_d(p + 1, x)?;
    Ok(SpecFunResult {
        value: 0.5 * x * d.value - d1.value,
        abs_error_estimate: 0.5 * x.abs() * d.abs_error_estimate + d1.abs_error_estimate,
    })
}

/// `D_{-nu}(0)` closed form for real `nu > 0`.
pub fn parabolic_cylinder_d_neg_at_zero(nu: f64) -> f64 {
    (0.5 * PI.ln() - 0.5 * nu * std::f64::consts::LN_2 - ln_gamma(0.5 * (nu + 1.0))).exp()
}

/// `D'_{-nu}(0)` closed form for real `nu > 0`.
pub fn parabolic_cylinder_d_neg_deriv_at_zero(nu: f64) -> f64 {
    -(0.5 * PI.ln() - 0.5 * (nu - 1.0) * std::f64::consts::LN_2 - ln_gamma(0.5 * nu)).exp()
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs_ln_gamma(x)
}

/// `Gamma(a)/Gamma(b)` through log-gamma differences.
pub fn gamma_ratio(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("gamma_ratio needs a, b > 0, got ({a}, {b})")));
    }
    Ok((ln_gamma(a) - ln_gamma(b)).exp())
}

/// Cosine integral `Ci(x)` for `x > 0`.
pub fn cos_integral(x: f64) -> f64 {
    assert!(x > 0.0, "Ci needs x > 0");
    sin_cos_integral(x).1
}

/// Sine integral `Si(x)`.
pub fn sin_integral(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    x.signum() * sin_cos_integral(x.abs()).0
}

/// `(Si(x), Ci(x))` for `x > 0`: power series up to 4, continued fraction for `E1(ix)` beyond.
fn sin_cos_integral(x: f64) -> (f64, f64) {
    if x <= 4.0 {
        let t = -x * x;
        let mut term = 1.0;
        let mut ci = 0.0;
        let mut si = x;
        let mut sterm = x;
        for k in 1..60 {
            let kf = k as f64;
            term *= t / ((2.0 * kf - 1.0) * (2.0 * kf));
            sterm *= t / ((2.0 * kf) * (2.0 * kf + 1.0));
            let add = term / (2.0 * kf);
            ci += add;
            si += sterm / (2.0 * kf + 1.0);
            if add.abs() < 1e-18 && sterm.abs() < 1e-18 {
                break;
            }
        }
        (si, EULER_GAMMA + x.ln() + ci)
    } else {
        // Lentz evaluation of E1(ix) = -Ci(x) + i (Si(x) - pi/2).
        let tiny = 1e-300;
        let mut b = Complex64::new(1.0, x);
        let mut c = Complex64::new(1.0 / tiny, 0.0);
        let mut d = Complex64::new(1.0, 0.0) / b;
        let mut h = d;
        for i in 2..10_000 {
            let a = -((i - 1) as f64).powi(2);
            b += 2.0;
            d = Complex64::new(1.0, 0.0) / (d * a + b);
            c = b + Complex64::new(a, 0.0) / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).norm() < 1e-16 {
                break;
            }
        }
        let e1 = Complex64::new(x.cos(), -x.sin()) * h;
        (0.5 * PI + e1.im, -e1.re)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::ops::Pow;
    use rug::Float;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn i_at_origin() {
        assert_eq!(modified_bessel_i(0, 0.0).unwrap().value, 1.0);
        assert_eq!(modified_bessel_i(1, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn i0_matches_extended_precision_series() {
        let prec = 200;
        let mut sum = Float::with_val(prec, 0);
        let mut term = Float::with_val(prec, 1);
        for k in 0..30u32 {
            if k > 0 {
                term /= Float::with_val(prec, 4 * k * k);
            }
            sum += &term;
        }
        let v = modified_bessel_i(0, 1.0).unwrap().value;
        assert!(rel(v, sum.to_f64()) < 1e-14);
    }

    #[test]
    fn k_small_argument() {
        let x = 1e-4;
        let k1 = modified_bessel_k(1, x).unwrap().value;
        assert!((x * k1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn wronskian_at_one() {
        let w = modified_bessel_i(0, 1.0).unwrap().value * modified_bessel_k(1, 1.0).unwrap().value
            + modified_bessel_i(1, 1.0).unwrap().value * modified_bessel_k(0, 1.0).unwrap().value;
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_matches_integral_representation() {
        for &(n, x) in &[(2usize, 3.0f64), (0, 0.5), (1, 1.9), (1, 2.1), (5, 10.0), (0, 40.0)] {
            let (v, _) = quad::adaptive(
                |t: f64| (-x * (t.cosh() - 1.0)).exp() * (n as f64 * t).cosh(),
                0.0,
                30.0,
                0.0,
                1e-15,
            )
            .unwrap();
            let oracle = v * (-x).exp();
            let k = modified_bessel_k(n, x).unwrap().value;
            assert!(rel(k, oracle) < 1e-12, "K_{n}({x}) = {k} vs {oracle}");
        }
    }

    fn i_series_extended(n: u32, x: f64) -> f64 {
        let prec = 256;
        let h = Float::with_val(prec, x) / 2u32;
        let h2 = Float::with_val(prec, &h * &h);
        let mut term = Float::with_val(prec, h.clone().pow(n));
        for j in 1..=n {
            term /= j;
        }
        let mut sum = term.clone();
        for k in 1..400u32 {
            term *= &h2;
            term /= k * (k + n);
            sum += &term;
        }
        sum.to_f64()
    }

    #[test]
    fn i_matches_extended_power_series() {
        for &(n, x) in &[(0u32, 0.3f64), (3, 2.0), (7, 15.0), (20, 45.0), (60, 30.0), (1, 50.0)] {
            let oracle = i_series_extended(n, x);
            let i = modified_bessel_i(n as usize, x).unwrap().value;
            assert!(rel(i, oracle) < 1e-12, "I_{n}({x}) = {i} vs {oracle}");
        }
    }

    #[test]
    fn k_domain_and_overflow() {
        assert!(matches!(modified_bessel_k(0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(modified_bessel_k(200, 1e-6), Err(Error::Overflow(_))));
        assert!(matches!(modified_bessel_i(0, 800.0), Err(Error::Overflow(_))));
    }

    #[test]
    fn d_small_orders() {
        let x = 1.3;
        assert!((parabolic_cylinder_d(0, x).unwrap().value - (-x * x / 4.0).exp()).abs() < 1e-15);
        assert_eq!(parabolic_cylinder_d(1, 0.0).unwrap().value, 0.0);
        let dm1 = parabolic_cylinder_d(-1, 0.0).unwrap().value;
        assert!(rel(dm1, (PI / 2.0).sqrt()) < 1e-12);
    }

    #[test]
    fn d_negative_order_at_zero() {
        for nu in 1..8 {
            let d = parabolic_cylinder_d(-(nu as i64), 0.0).unwrap().value;
            assert!(rel(d, parabolic_cylinder_d_neg_at_zero(nu as f64)) < 1e-12);
            let dp = parabolic_cylinder_d_deriv(-(nu as i64), 0.0).unwrap().value;
            assert!(rel(dp, parabolic_cylinder_d_neg_deriv_at_zero(nu as f64)) < 1e-11);
        }
    }

    #[test]
    fn d_minus_one_erfc_form() {
        // Frozen from e^{x^2/4} sqrt(pi/2) erfc(x/sqrt 2) evaluated at 25 digits.
        let cases = [
            (-3.0, 23.750_123_328_352_972),
            (-0.5, 1.845_023_690_733_504_4),
            (0.7, 0.685_553_163_719_509_7),
            (4.0, 0.004_334_439_587_603_224),
        ];
        for (x, oracle) in cases {
            assert!(rel(parabolic_cylinder_d(-1, x).unwrap().value, oracle) < 1e-12);
        }
    }

    #[test]
    fn gamma_ratio_values() {
        assert!((gamma_ratio(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(rel(gamma_ratio(1.5, 1.0).unwrap(), PI.sqrt() / 2.0) < 1e-13);
        let oracle = 2.5 * 1.5 * 0.5 * PI.sqrt() / 2.0;
        assert!(rel(gamma_ratio(3.5, 3.0).unwrap(), oracle) < 1e-13);
        assert!(gamma_ratio(0.0, 1.0).is_err());
    }

    #[test]
    fn cos_integral_values() {
        // Ci(1), Ci(5), Ci(20) reference values
        assert!((cos_integral(1.0) - 0.337_403_922_900_968_1).abs() < 1e-14);
        assert!((cos_integral(5.0) - (-0.190_029_749_656_643_9)).abs() < 1e-14);
        assert!((cos_integral(20.0) - 0.044_419_820_845_353_3).abs() < 1e-14);
    }

    #[test]
    fn sin_integral_values() {
        assert!((sin_integral(1.0) - 0.946_083_070_367_183_0).abs() < 1e-14);
        assert!((sin_integral(5.0) - 1.549_931_244_944_674_1).abs() < 1e-14);
        assert!((sin_integral(20.0) - 1.548_241_701_043_439_8).abs() < 1e-14);
        assert!((sin_integral(-2.0) + sin_integral(2.0)).abs() < 1e-16);
    }
}
