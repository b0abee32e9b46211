//! Quadrature rules: cached Gauss-Legendre tables and an adaptive Gauss-Kronrod driver.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

use crate::error::{Error, Result};

static RULES: OnceLock<Mutex<HashMap<usize, Arc<[(f64, f64)]>>>> = OnceLock::new();

/// Gauss-Legendre nodes and weights on [-1, 1], ascending nodes.
pub fn gauss_legendre(n: usize) -> Arc<[(f64, f64)]> {
    let n = n.max(1);
    let map = RULES.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("quadrature cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(NonZeroUsize::new(n).unwrap());
            let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            pairs.into()
        })
        .clone()
}

/// Nodes and weights mapped to [a, b].
pub fn nodes_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    gauss_legendre(n)
        .iter()
        .map(|&(x, w)| (c + h * x, h * w))
        .collect()
}

/// Composite Gauss-Legendre nodes over consecutive breakpoints.
pub fn composite_nodes(breaks: &[f64], n: usize) -> Vec<(f64, f64)> {
    breaks
        .windows(2)
        .flat_map(|w| nodes_on(n, w[0], w[1]))
        .collect()
}

pub fn fixed<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    nodes_on(n, a, b).iter().map(|&(x, w)| w * f(x)).sum()
}

/// Values that can be integrated adaptively.
pub trait Integrand: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Integrand, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron = kron + s * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + s * WG[j / 2];
        }
    }
    let k = kron * h;
    let g = gauss * h;
    (k, (k - g).magnitude())
}

/// Globally adaptive Gauss-Kronrod (7/15) integration.
///
/// Returns the integral and an absolute error estimate.
pub fn adaptive<T: Integrand, F: FnMut(f64) -> T>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(T, f64)> {
    adaptive_breaks(&mut f, &[a, b], abs_tol, rel_tol, 2000)
}

/// Adaptive integration seeded with user breakpoints.
pub fn adaptive_breaks<T: Integrand, F: FnMut(f64) -> T>(
    f: &mut F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(T, f64)> {
    let mut parts: Vec<(f64, f64, T, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] != w[0])
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total = parts.iter().fold(T::zero(), |acc, p| acc + p.2);
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.magnitude()) {
            return Ok((total, err));
        }
        if parts.len() >= max_intervals {
            return Err(Error::Quadrature(format!(
                "error estimate {err:e} above tolerance after {max_intervals} subintervals"
            )));
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (a, b, _, _) = parts.swap_remove(idx);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return Err(Error::Quadrature("subinterval underflow".into()));
        }
        let (v1, e1) = gk15(f, a, m);
        let (v2, e2) = gk15(f, m, b);
        parts.push((a, m, v1, e1));
        parts.push((m, b, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let v = fixed(|x| x.powi(9) + 3.0 * x * x, -1.0, 2.0, 6);
        let exact = (2f64.powi(10) - 1.0) / 10.0 + (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let s: f64 = nodes_on(37, 0.0, std::f64::consts::PI).iter().map(|p| p.1).sum();
        assert!((s - std::f64::consts::PI).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let (v, _) = adaptive(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_complex() {
        let (v, _) = adaptive(
            |x: f64| Complex64::new(0.0, x).exp(),
            0.0,
            std::f64::consts::PI,
            1e-13,
            1e-13,
        )
        .unwrap();
        assert!((v - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }
}
