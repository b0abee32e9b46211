//! Mathieu functions of negative parameter `-q`: characteristic values, the
//! periodic solutions `ce_m(v,-q)`, `se_m(v,-q)` and the decaying radial
//! solutions `Fek_m(u,-q)`, `Gek_m(u,-q)`.
//!
//! The angular equation is `g'' + (a + 2q cos 2v) g = 0`, the radial one
//! `f'' = (a + 2q cosh 2u) f`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `ce_{2n}`, characteristic value `a_{2n}`.
    CeEven,
    /// `ce_{2n+1}`, characteristic value `b_{2n+1}`.
    CeOdd,
    /// `se_{2n+1}`, characteristic value `a_{2n+1}`.
    SeOdd,
    /// `se_{2n+2}`, characteristic value `b_{2n+2}`.
    SeEven,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::CeEven, Family::CeOdd, Family::SeOdd, Family::SeEven];

    /// Order `m` of the `n`-th member of the family.
    pub fn order(self, n: usize) -> usize {
        match self {
            Family::CeEven => 2 * n,
            Family::CeOdd | Family::SeOdd => 2 * n + 1,
            Family::SeEven => 2 * n + 2,
        }
    }

    /// Family and in-family index holding order `m` (`cosine` selects ce over se).
    pub fn locate(m: usize, cosine: bool) -> Option<(Family, usize)> {
        match (cosine, m % 2) {
            (true, 0) => Some((Family::CeEven, m / 2)),
            (true, _) => Some((Family::CeOdd, m / 2)),
            (false, _) if m == 0 => None,
            (false, 1) => Some((Family::SeOdd, m / 2)),
            (false, _) => Some((Family::SeEven, m / 2 - 1)),
        }
    }

    pub fn is_cosine(self) -> bool {
        matches!(self, Family::CeEven | Family::CeOdd)
    }

    /// Harmonic number multiplying `v` in the `r`-th Fourier term.
    pub fn harmonic(self, r: usize) -> usize {
        self.order(r)
    }

    pub fn radial(self) -> Radial {
        if self.is_cosine() {
            Radial::Fek
        } else {
            Radial::Gek
        }
    }

    fn diagonal(self, k: usize, q: f64) -> f64 {
        let h = self.harmonic(k) as f64;
        let shift = match (self, k) {
            (Family::CeOdd, 0) => -q,
            (Family::SeOdd, 0) => q,
            _ => 0.0,
        };
        h * h + shift
    }

    /// Squared off-diagonal entry linking `k` and `k + 1` of the symmetrized recursion matrix.
    fn off_diagonal_sq(self, k: usize, q: f64) -> f64 {
        if self == Family::CeEven && k == 0 {
            2.0 * q * q
        } else {
            q * q
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radial {
    Fek,
    Gek,
}

#[derive(Debug, Clone, Serialize)]
pub struct MathieuSolution {
    pub order: usize,
    pub family: Family,
    pub q: f64,
    pub char_value: f64,
    /// Fourier coefficients `A`/`B` of the associated positive-parameter function.
    pub coefficients: Vec<f64>,
    pub truncation: usize,
    /// Coefficients of the `-q` function itself, `c_r = (-1)^{n+r} A_r`.
    #[serde(skip)]
    direct: Vec<f64>,
}

impl MathieuSolution {
    /// Index `n` inside the family.
    pub fn index(&self) -> usize {
        match self.family {
            Family::CeEven => self.order / 2,
            Family::CeOdd | Family::SeOdd => (self.order - 1) / 2,
            Family::SeEven => (self.order - 2) / 2,
        }
    }

    /// Coefficients `c_r` with `ce/se_m(v,-q) = sum_r c_r cos/sin(k_r v)`, `k_r = family.harmonic(r)`.
    pub fn direct_coefficients(&self) -> &[f64] {
        &self.direct
    }

    fn new(family: Family, n: usize, q: f64, char_value: f64, direct: Vec<f64>, truncation: usize) -> Self {
        let coefficients = direct
            .iter()
            .enumerate()
            .map(|(r, c)| if (n + r) % 2 == 0 { *c } else { -*c })
            .collect();
        MathieuSolution {
            order: family.order(n),
            family,
            q,
            char_value,
            coefficients,
            truncation,
            direct,
        }
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::Domain(format!("Mathieu parameter q must be finite and >= 0, got {q}")));
    }
    Ok(())
}

/// Characteristic values and coefficients for orders `n = 0..=n_max` of one family.
pub fn solve_characteristic(q: f64, family: Family, n_max: usize, truncation: usize) -> Result<Vec<MathieuSolution>> {
    check_q(q)?;
    if truncation < n_max + 20 {
        return Err(Error::Invalid(format!(
            "truncation {truncation} must be at least n_max + 20 = {}",
            n_max + 20
        )));
    }
    if q == 0.0 {
        return Ok((0..=n_max)
            .map(|n| {
                let mut c = vec![0.0; truncation];
                c[n] = if family == Family::CeEven && n == 0 {
                    std::f64::consts::FRAC_1_SQRT_2
                } else {
                    1.0
                };
                let h = family.harmonic(n) as f64;
                MathieuSolution::new(family, n, 0.0, h * h, c, truncation)
            })
            .collect());
    }
    let mut size = truncation.max(n_max + 20 + (2.0 * q.sqrt()).ceil() as usize);
    for _ in 0..6 {
        let (values, vectors) = dense_eigenpairs(family, q, size);
        let check = sturm_eigenvalues(family, q, 2 * size, n_max);
        let drift = (0..=n_max)
            .map(|k| (values[k] - check[k]).abs() / (1.0 + 1e-4 * values[k].abs()))
            .fold(0.0, f64::max);
        let decayed = vectors.iter().take(n_max + 1).all(|c| {
            let peak = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            c.last().unwrap().abs() < 1e-14 * peak
        });
        if drift <= 1e-10 && decayed {
            return Ok(values
                .into_iter()
                .zip(vectors)
                .take(n_max + 1)
                .enumerate()
                .map(|(n, (a, c))| MathieuSolution::new(family, n, q, a, c, size))
                .collect());
        }
        size *= 2;
    }
    Err(Error::NonConvergence(format!(
        "characteristic values of {family:?} at q = {q} did not settle up to truncation {size}"
    )))
}

/// Same contract as [`solve_characteristic`], computed by Sturm bisection and
/// inverse iteration on the tridiagonal recursion (linear cost per mode).
pub fn solve_spectrum(q: f64, family: Family, n_max: usize, truncation: usize) -> Result<Vec<MathieuSolution>> {
    check_q(q)?;
    if q == 0.0 || truncation < n_max + 20 {
        return solve_characteristic(q, family, n_max, truncation);
    }
    let mut size = truncation.max(n_max + 20 + (2.0 * q.sqrt()).ceil() as usize);
    for _ in 0..6 {
        let values = sturm_eigenvalues(family, q, size, n_max);
        let check = sturm_eigenvalues(family, q, size + size / 2, n_max);
        let drift = values
            .iter()
            .zip(&check)
            .map(|(a, b)| (a - b).abs() / (1.0 + 1e-4 * a.abs()))
            .fold(0.0, f64::max);
        let vectors: Vec<Vec<f64>> = values.iter().map(|&a| inverse_iteration(family, q, size, a)).collect();
        let decayed = vectors.iter().all(|c| {
            let peak = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            c.last().unwrap().abs() < 1e-14 * peak
        });
        if drift <= 1e-10 && decayed {
            return Ok(values
                .into_iter()
                .zip(vectors)
                .enumerate()
                .map(|(n, (a, c))| MathieuSolution::new(family, n, q, a, c, size))
                .collect());
        }
        size *= 2;
    }
    Err(Error::NonConvergence(format!(
        "characteristic values of {family:?} at q = {q} did not settle up to truncation {size}"
    )))
}

fn inverse_iteration(family: Family, q: f64, size: usize, lambda: f64) -> Vec<f64> {
    let shift = lambda + 4.0 * f64::EPSILON * (1.0 + lambda.abs());
    let off: Vec<f64> = (0..size - 1).map(|k| -family.off_diagonal_sq(k, q).sqrt()).collect();
    let diag: Vec<f64> = (0..size).map(|k| family.diagonal(k, q) - shift).collect();
    let mut x: Vec<f64> = (0..size).map(|k| 1.0 + 0.1 * ((k * 7919) % 13) as f64).collect();
    for _ in 0..3 {
        solve_tridiagonal(&off, &diag, &off, &mut x);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    }
    fix_vector(family, x)
}

/// Gaussian elimination with partial pivoting for a tridiagonal system; `b` is overwritten by the solution.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], b: &mut [f64]) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let tiny = f64::MIN_POSITIVE.sqrt();
    for i in 0..n - 1 {
        let dl = sub[i];
        if d[i].abs() >= dl.abs() {
            if d[i] == 0.0 {
                d[i] = tiny;
            }
            let f = dl / d[i];
            d[i + 1] -= f * du[i];
            b[i + 1] -= f * b[i];
        } else {
            let f = d[i] / dl;
            d[i] = dl;
            let t = d[i + 1];
            d[i + 1] = du[i] - f * t;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -f * du2[i];
            }
            du[i] = t;
            b.swap(i, i + 1);
            b[i + 1] -= f * b[i];
        }
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = tiny;
    }
    b[n - 1] /= d[n - 1];
    if n >= 2 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
}

fn fix_vector(family: Family, mut c: Vec<f64>) -> Vec<f64> {
    if family == Family::CeEven {
        c[0] *= std::f64::consts::FRAC_1_SQRT_2;
    }
    let anchor: f64 = if family.is_cosine() {
        c.iter().sum()
    } else {
        c.iter().enumerate().map(|(r, x)| family.harmonic(r) as f64 * x).sum()
    };
    if anchor < 0.0 {
        c.iter_mut().for_each(|x| *x = -*x);
    }
    c
}

/// Eigenpairs of the truncated recursion, ascending, each vector mapped back to
/// `c_r` and sign-fixed so that `ce(0) > 0` or `se'(0) > 0`.
fn dense_eigenpairs(family: Family, q: f64, size: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = DMatrix::from_fn(size, size, |i, j| {
        if i == j {
            family.diagonal(i, q)
        } else if i.abs_diff(j) == 1 {
            -family.off_diagonal_sq(i.min(j), q).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| fix_vector(family, eig.eigenvectors.column(i).iter().copied().collect()))
        .collect();
    (values, vectors)
}

fn sturm_count(family: Family, q: f64, size: usize, x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for k in 0..size {
        let e2 = if k == 0 { 0.0 } else { family.off_diagonal_sq(k - 1, q) };
        d = family.diagonal(k, q) - x - e2 / d;
        if d == 0.0 {
            d = -f64::EPSILON * (1.0 + x.abs());
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Lowest `n_max + 1` eigenvalues by Sturm-sequence bisection.
fn sturm_eigenvalues(family: Family, q: f64, size: usize, n_max: usize) -> Vec<f64> {
    let radius = 2.0 * 2f64.sqrt() * q;
    let lo0 = -q - radius;
    let hi0 = (family.harmonic(size - 1) as f64).powi(2) + q + radius;
    (0..=n_max)
        .map(|k| {
            let (mut lo, mut hi) = (lo0, hi0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if sturm_count(family, q, size, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// `ce_m(v,-q)` or `se_m(v,-q)`.
pub fn eval_periodic(sol: &MathieuSolution, v: f64) -> f64 {
    periodic_derivatives(sol, v)[0]
}

/// `d/dv` of `ce_m(v,-q)` or `se_m(v,-q)`, by term-wise differentiation.
pub fn eval_periodic_derivative(sol: &MathieuSolution, v: f64) -> f64 {
    periodic_derivatives(sol, v)[1]
}

/// Value, first and second derivative of the periodic function at `v`.
pub fn periodic_derivatives(sol: &MathieuSolution, v: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    let cosine = sol.family.is_cosine();
    for (r, &c) in sol.direct.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let k = sol.family.harmonic(r) as f64;
        let (s, co) = (k * v).sin_cos();
        if cosine {
            out[0] += c * co;
            out[1] -= c * k * s;
            out[2] -= c * k * k * co;
        } else {
            out[0] += c * s;
            out[1] += c * k * co;
            out[2] -= c * k * k * s;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModifiedMathieuEval {
    pub value: f64,
    pub derivative_u: f64,
    /// `ln|value|`, finite even where `value` under- or overflows.
    pub ln_abs_value: f64,
    pub log_derivative: f64,
    pub u: f64,
    pub q: f64,
    pub order: usize,
    pub family: Radial,
}

struct SeriesEval {
    /// `ln|S| + v1 - v2`, the Bessel-product sum without prefactor.
    ln_abs: f64,
    sign: f64,
    log_derivative: f64,
    /// Sum of absolute terms over the absolute sum.
    cancellation: f64,
}

fn bessel_series(sol: &MathieuSolution, u: f64) -> Result<SeriesEval> {
    let sq = sol.q.sqrt();
    let v1 = sq * (-u).exp();
    let v2 = sq * u.exp();
    let a = &sol.coefficients;
    let len = a.iter().rposition(|x| *x != 0.0).map_or(1, |p| p + 1);
    let (i0e, rho) = specfun::bessel_i_ratios(len + 2, v1);
    let (k0e, _) = specfun::bessel_k01_scaled(v2);
    let sig = specfun::bessel_k_ratios(len + 2, v2);
    let mut p = i0e * k0e;
    let (mut s, mut sd, mut sabs, mut last) = (0.0, 0.0, 0.0, 0.0);
    for r in 0..len {
        let dk = |ia: usize, kb: usize| kb as f64 - ia as f64 - v1 * rho[ia] - v2 * sig[kb];
        let (t, td) = match sol.family {
            Family::CeEven => (p, p * dk(r, r)),
            Family::CeOdd | Family::SeOdd => {
                let sgn = if sol.family == Family::CeOdd { -1.0 } else { 1.0 };
                let x = p * sig[r];
                let y = p * rho[r];
                (x + sgn * y, x * dk(r, r + 1) + sgn * y * dk(r + 1, r))
            }
            Family::SeEven => {
                let x = p * sig[r] * sig[r + 1];
                let y = p * rho[r] * rho[r + 1];
                (x - y, x * dk(r, r + 2) - y * dk(r + 2, r))
            }
        };
        last = a[r] * t;
        s += last;
        sd += a[r] * td;
        sabs += last.abs();
        p *= rho[r] * sig[r];
    }
    if !(s.is_finite() && sd.is_finite()) || s == 0.0 {
        return Err(Error::Overflow(format!(
            "Bessel-product series of order {} at q = {}, u = {u} is not representable",
            sol.order, sol.q
        )));
    }
    if last.abs() > 1e-13 * s.abs() {
        return Err(Error::Truncation(format!(
            "last Bessel-product term {last:e} of order {} is not negligible against {s:e}",
            sol.order
        )));
    }
    Ok(SeriesEval {
        ln_abs: s.abs().ln() + v1 - v2,
        sign: s.signum(),
        log_derivative: sd / s,
        cancellation: sabs / s.abs(),
    })
}

/// The constant `C` (`p'_m` or `s'_m`) fixing the large-`u` behaviour `C e^{-v2}/sqrt(2 pi v2)`.
pub fn radial_prefactor(sol: &MathieuSolution) -> f64 {
    let a = &sol.coefficients;
    let n = sol.index();
    let sign_n = if n % 2 == 0 { 1.0 } else { -1.0 };
    let alt = |w: &dyn Fn(usize) -> f64| -> f64 {
        a.iter()
            .enumerate()
            .map(|(r, x)| if r % 2 == 0 { w(r) * x } else { -w(r) * x })
            .sum()
    };
    let plain = |w: &dyn Fn(usize) -> f64| -> f64 { a.iter().enumerate().map(|(r, x)| w(r) * x).sum() };
    let m = 2.0 * sol.q.sqrt();
    let one = |_: usize| 1.0;
    match sol.family {
        Family::CeEven => sign_n * plain(&one) * alt(&one) / a[0],
        Family::CeOdd => {
            let odd = |r: usize| (2 * r + 1) as f64;
            sign_n * plain(&odd) * alt(&one) / (0.5 * m * a[0])
        }
        Family::SeOdd => {
            let odd = |r: usize| (2 * r + 1) as f64;
            sign_n * plain(&one) * alt(&odd) / (0.5 * m * a[0])
        }
        Family::SeEven => {
            let even = |r: usize| (2 * r + 2) as f64;
            sign_n * plain(&even) * alt(&even) / (0.25 * m * m * a[0])
        }
    }
}

/// Smallest `u` at which the Bessel-product series is free of cancellation.
fn clean_start(sol: &MathieuSolution) -> Result<(f64, SeriesEval)> {
    let mut u = 0.0;
    loop {
        let s = bessel_series(sol, u)?;
        if s.cancellation <= 10.0 {
            return Ok((u, s));
        }
        u += 0.125;
        if u > 8.0 {
            return Err(Error::NonConvergence(format!(
                "Bessel-product series of order {} at q = {} cancels for all u <= 8",
                sol.order, sol.q
            )));
        }
    }
}

/// `Fek_m(u,-q)` for ce families, `Gek_m(u,-q)` for se families, with its `u`-derivative.
pub fn eval_modified(sol: &MathieuSolution, u: f64) -> Result<ModifiedMathieuEval> {
    if !(sol.q > 0.0) {
        return Err(Error::Domain("modified Mathieu functions need q > 0".into()));
    }
    if !(u >= 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("modified Mathieu functions need finite u >= 0, got {u}")));
    }
    let direct = bessel_series(sol, u)?;
    let (ln_s, sign, y) = if direct.cancellation <= 10.0 {
        (direct.ln_abs, direct.sign, direct.log_derivative)
    } else {
        let (us, start) = clean_start(sol)?;
        if us <= u {
            (direct.ln_abs, direct.sign, direct.log_derivative)
        } else {
            let (y, dl) = riccati(sol.char_value, sol.q, us, start.log_derivative, u)?;
            (start.ln_abs + dl, start.sign, y)
        }
    };
    let c = radial_prefactor(sol) / (PI * sol.coefficients[0]);
    let ln_abs_value = ln_s + c.abs().ln();
    let value = sign * c.signum() * ln_abs_value.exp();
    Ok(ModifiedMathieuEval {
        value,
        derivative_u: value * y,
        ln_abs_value,
        log_derivative: y,
        u,
        q: sol.q,
        order: sol.order,
        family: sol.family.radial(),
    })
}

/// `Fek'_m(0,-q)/Fek_m(0,-q)` (or the Gek analogue); the prefactors cancel.
pub fn log_derivative(sol: &MathieuSolution) -> Result<f64> {
    if !(sol.q > 0.0) {
        return Err(Error::Domain("log-derivative needs q > 0".into()));
    }
    let direct = bessel_series(sol, 0.0)?;
    if direct.cancellation <= 10.0 {
        return Ok(direct.log_derivative);
    }
    let (us, start) = clean_start(sol)?;
    Ok(riccati(sol.char_value, sol.q, us, start.log_derivative, 0.0)?.0)
}

/// Integrates `y' = a + 2q cosh 2u - y^2`, `(ln f)' = y` from `u0` to `u1`
/// (Dormand-Prince 5(4)); returns `y(u1)` and `ln f(u1) - ln f(u0)`.
fn riccati(a: f64, q: f64, u0: f64, y0: f64, u1: f64) -> Result<(f64, f64)> {
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let rhs = |u: f64, y: f64| [a + 2.0 * q * (2.0 * u).cosh() - y * y, y];
    let dir = (u1 - u0).signum();
    let mut u = u0;
    let mut y = [y0, 0.0];
    let mut h = dir * (0.01f64).min(0.1 / y0.abs().max(1.0));
    let mut steps = 0usize;
    while (u1 - u) * dir > 0.0 {
        if (u + h - u1) * dir > 0.0 {
            h = u1 - u;
        }
        let mut k = [[0.0; 2]; 7];
        k[0] = rhs(u, y[0]);
        for s in 0..6 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s + 1) {
                ys[0] += h * A[s][j] * kj[0];
                ys[1] += h * A[s][j] * kj[1];
            }
            k[s + 1] = rhs(u + C[s] * h, ys[0]);
        }
        let mut y5 = y;
        for (j, kj) in k.iter().enumerate().take(6) {
            y5[0] += h * A[5][j] * kj[0];
            y5[1] += h * A[5][j] * kj[1];
        }
        let err0: f64 = h * E.iter().zip(&k).map(|(e, kk)| e * kk[0]).sum::<f64>();
        let err1: f64 = h * E.iter().zip(&k).map(|(e, kk)| e * kk[1]).sum::<f64>();
        let tol0 = 1e-13 * (1.0 + y5[0].abs());
        let tol1 = 1e-13 * (1.0 + y5[1].abs());
        let ratio = (err0.abs() / tol0).max(err1.abs() / tol1);
        if ratio <= 1.0 {
            u += h;
            y = y5;
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::NonConvergence("radial continuation exceeded step budget".into()));
        }
    }
    Ok((y[0], y[1]))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LargeQProfile {
    pub value: f64,
    pub alpha: f64,
    /// False when `alpha > q^{1/4}`, outside the range of the expansion.
    pub reliable: bool,
}

/// Two-term large-`q` approximation of the `n`-th member of a family at `v` in `[0, pi]`.
pub fn large_q_mode_profile(family: Family, n: usize, q: f64, v: f64) -> Result<LargeQProfile> {
    if q < 25.0 || !q.is_finite() {
        return Err(Error::Domain(format!("large-q profile needs q >= 25, got {q}")));
    }
    let q4 = q.powf(0.25);
    let sq = q.sqrt();
    let alpha = 2.0 * q4 * v.sin();
    let mirrored = v > 0.5 * PI;
    let d = specfun::parabolic_cylinder_d_seq(2 * n + 6, alpha);
    let dd = |k: i64| if k < 0 { 0.0 } else { d[k as usize] };
    let nf = n as f64;
    let ln_fact = |k: usize| specfun::ln_gamma(k as f64 + 1.0);
    let base = (0.25 * (0.5 * PI * sq).ln()).exp();
    let ni = n as i64;
    let (core, c) = if family.is_cosine() {
        let y1 = -dd(2 * ni + 4) / 16.0 - dd(2 * ni + 2) / 4.0 - nf * (2.0 * nf - 1.0) / 2.0 * dd(2 * ni - 2)
            + nf * (nf - 1.0) * (2.0 * nf - 1.0) * (2.0 * nf - 3.0) / 4.0 * dd(2 * ni - 4);
        let c = base * (-0.5 * ln_fact(2 * n)).exp() * (1.0 - (4.0 * nf + 1.0) / (16.0 * sq));
        (dd(2 * ni) + y1 / (4.0 * sq), c)
    } else {
        let y1 = -dd(2 * ni + 5) / 16.0 - dd(2 * ni + 3) / 4.0 - nf * (2.0 * nf + 1.0) / 2.0 * dd(2 * ni - 1)
            + nf * (nf - 1.0) * (2.0 * nf + 1.0) * (2.0 * nf - 1.0) / 4.0 * dd(2 * ni - 3);
        let c = base * (-0.5 * ln_fact(2 * n + 1)).exp() * (1.0 - (4.0 * nf + 3.0) / (16.0 * sq));
        (dd(2 * ni + 1) + y1 / (4.0 * sq), c)
    };
    let sign_n = if n % 2 == 0 { 1.0 } else { -1.0 };
    let partner_flip = if mirrored && matches!(family, Family::CeOdd | Family::SeEven) { -1.0 } else { 1.0 };
    Ok(LargeQProfile {
        value: sign_n * partner_flip * c * core,
        alpha,
        reliable: alpha <= q4,
    })
}

/// `b_{m+1} - a_m`, resolved in extended precision.
pub fn characteristic_splitting(m: usize, q: f64) -> Result<f64> {
    check_q(q)?;
    let (low, high, n) = if m % 2 == 0 {
        (Family::CeEven, Family::CeOdd, m / 2)
    } else {
        (Family::SeOdd, Family::SeEven, m / 2)
    };
    let prec = 96 + (6.0 * q.sqrt() / std::f64::consts::LN_2).ceil() as u32;
    let size = 2 * n + 40 + (4.0 * q.sqrt()).ceil() as usize;
    let split = |size: usize| {
        let b = mp_eigenvalue(high, q, size, n, prec);
        let a = mp_eigenvalue(low, q, size, n, prec);
        Float::with_val(prec, &b - &a).to_f64()
    };
    let s1 = split(size);
    let s2 = split(size + 24);
    if (s1 - s2).abs() > 1e-8 * s2.abs() {
        return Err(Error::NonConvergence(format!(
            "splitting b_{{m+1}} - a_m at m = {m}, q = {q} depends on truncation"
        )));
    }
    Ok(s2)
}

/// Asymptotic splitting `(1/m!) 2^{4m+5} q^{(m+3/2)/2} e^{-4 sqrt q}`.
pub fn splitting_asymptotic(m: usize, q: f64) -> f64 {
    let mf = m as f64;
    ((4.0 * mf + 5.0) * std::f64::consts::LN_2 + 0.5 * (mf + 1.5) * q.ln() - 4.0 * q.sqrt() - specfun::ln_gamma(mf + 1.0))
        .exp()
}

pub(crate) fn mp_eigenvalue(family: Family, q: f64, size: usize, k: usize, prec: u32) -> Float {
    let qf = Float::with_val(prec, q);
    let diag: Vec<Float> = (0..size)
        .map(|i| {
            let h = family.harmonic(i) as u64;
            let mut d = Float::with_val(prec, h * h);
            match (family, i) {
                (Family::CeOdd, 0) => d -= &qf,
                (Family::SeOdd, 0) => d += &qf,
                _ => {}
            }
            d
        })
        .collect();
    let q2 = Float::with_val(prec, &qf * &qf);
    let off2: Vec<Float> = (0..size.saturating_sub(1))
        .map(|i| {
            if family == Family::CeEven && i == 0 {
                Float::with_val(prec, &q2 * 2u32)
            } else {
                q2.clone()
            }
        })
        .collect();
    let count = |x: &Float| -> usize {
        let mut c = 0;
        let mut d = Float::with_val(prec, &diag[0] - x);
        for i in 0..size {
            if i > 0 {
                let t = Float::with_val(prec, &off2[i - 1] / &d);
                d = Float::with_val(prec, &diag[i] - x);
                d -= t;
            }
            if d.is_zero() {
                d = Float::with_val(prec, -1e-300);
            }
            if d.is_sign_negative() {
                c += 1;
            }
        }
        c
    };
    let guess = sturm_eigenvalues(family, q, size, k)[k];
    let mut width = 1e-8 * (1.0 + guess.abs());
    let (mut lo, mut hi) = loop {
        let lo = Float::with_val(prec, guess - width);
        let hi = Float::with_val(prec, guess + width);
        if count(&lo) <= k && count(&hi) > k {
            break (lo, hi);
        }
        width *= 16.0;
    };
    for _ in 0..(prec + 40) {
        let mid = Float::with_val(prec, &lo + &hi) / 2u32;
        if mid == lo || mid == hi {
            break;
        }
        if count(&mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Float::with_val(prec, &lo + &hi) / 2u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    fn sols(q: f64, family: Family, n_max: usize) -> Vec<MathieuSolution> {
        solve_characteristic(q, family, n_max, n_max + 40).unwrap()
    }

    #[test]
    fn zero_parameter_is_trigonometric() {
        let ce = solve_characteristic(0.0, Family::CeEven, 2, 64).unwrap();
        let vals: Vec<f64> = ce.iter().map(|s| s.char_value).collect();
        assert_eq!(vals, vec![0.0, 4.0, 16.0]);
        assert!((ce[0].coefficients[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(ce[2].coefficients[2], 1.0);
        for fam in Family::ALL {
            for s in solve_characteristic(0.0, fam, 5, 30).unwrap() {
                assert_eq!(s.char_value, (s.order * s.order) as f64);
            }
        }
        let ce1 = &solve_characteristic(0.0, Family::CeOdd, 0, 20).unwrap()[0];
        for v in [0.1, 1.0, 2.5] {
            assert!((eval_periodic(ce1, v) - v.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn truncation_precondition() {
        assert!(matches!(solve_characteristic(1.0, Family::CeEven, 10, 25), Err(Error::Invalid(_))));
        assert!(matches!(solve_characteristic(-1.0, Family::CeEven, 1, 25), Err(Error::Domain(_))));
    }

    #[test]
    fn normalization_and_decay() {
        for q in [0.01, 1.0, 10.0, 100.0] {
            for fam in Family::ALL {
                for s in sols(q, fam, 12) {
                    let c = &s.coefficients;
                    let norm: f64 = c.iter().map(|x| x * x).sum::<f64>()
                        + if fam == Family::CeEven { c[0] * c[0] } else { 0.0 };
                    assert!((norm - 1.0).abs() < 1e-10, "{fam:?} {q} {norm}");
                    let peak = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    assert!(c.last().unwrap().abs() < 1e-14 * peak);
                }
            }
        }
    }

    #[test]
    fn sorted_and_matches_bisection() {
        for fam in Family::ALL {
            let s = sols(3.0, fam, 15);
            let bis = sturm_eigenvalues(fam, 3.0, 80, 15);
            for (k, sol) in s.iter().enumerate() {
                assert!(k == 0 || sol.char_value > s[k - 1].char_value);
                assert!((sol.char_value - bis[k]).abs() < 1e-11 * (1.0 + bis[k].abs()));
            }
        }
    }

    #[test]
    fn banded_solver_matches_dense() {
        for q in [0.3, 30.0] {
            for fam in Family::ALL {
                let dense = solve_characteristic(q, fam, 25, 60).unwrap();
                let fast = solve_spectrum(q, fam, 25, 60).unwrap();
                for (a, b) in dense.iter().zip(&fast) {
                    assert!((a.char_value - b.char_value).abs() < 1e-10 * (1.0 + a.char_value.abs()));
                    let n = a.coefficients.len().min(b.coefficients.len());
                    for r in 0..n {
                        assert!((a.coefficients[r] - b.coefficients[r]).abs() < 1e-10, "{fam:?} q={q} m={} r={r}", a.order);
                    }
                }
            }
        }
    }

    #[test]
    fn orthogonality() {
        let nodes = quad::nodes_on(96, 0.0, 2.0 * PI);
        for q in [0.01, 1.0, 10.0] {
            for cosine in [true, false] {
                let all: Vec<MathieuSolution> = Family::ALL
                    .iter()
                    .filter(|f| f.is_cosine() == cosine)
                    .flat_map(|&f| sols(q, f, 5))
                    .filter(|s| s.order <= 10)
                    .collect();
                let vals: Vec<Vec<f64>> = all
                    .iter()
                    .map(|s| nodes.iter().map(|&(v, _)| eval_periodic(s, v)).collect())
                    .collect();
                for i in 0..all.len() {
                    for j in 0..all.len() {
                        let ip: f64 = nodes.iter().enumerate().map(|(k, &(_, w))| w * vals[i][k] * vals[j][k]).sum();
                        let want = if i == j { PI } else { 0.0 };
                        assert!((ip - want).abs() < 1e-9, "q={q} {} {}: {ip}", all[i].order, all[j].order);
                    }
                }
            }
        }
    }

    #[test]
    fn angular_equation_residual() {
        for q in [0.5, 20.0] {
            for fam in Family::ALL {
                for s in sols(q, fam, 6) {
                    let scale = s.char_value.abs() + 2.0 * q + 1.0;
                    for v in [0.2, 1.1, 2.9, 4.0] {
                        let [g, _, g2] = periodic_derivatives(&s, v);
                        let r = g2 + (s.char_value + 2.0 * q * (2.0 * v).cos()) * g;
                        assert!(r.abs() < 1e-8 * scale, "{fam:?} m={} v={v}: {r}", s.order);
                    }
                }
            }
        }
    }

    #[test]
    fn parity_and_period() {
        for fam in Family::ALL {
            for s in sols(4.0, fam, 4) {
                for v in [0.3, 1.7, 2.2] {
                    let f = eval_periodic(&s, v);
                    let refl = eval_periodic(&s, -v);
                    if fam.is_cosine() {
                        assert!((f - refl).abs() < 1e-12);
                    } else {
                        assert!((f + refl).abs() < 1e-12);
                    }
                    let shifted = eval_periodic(&s, v + PI);
                    let sign = if s.order % 2 == 0 { 1.0 } else { -1.0 };
                    assert!((shifted - sign * f).abs() < 1e-12);
                    assert!((eval_periodic(&s, v + 2.0 * PI) - f).abs() < 1e-12);
                }
                if !fam.is_cosine() {
                    assert!(eval_periodic(&s, 0.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn small_q_expansions() {
        let q = 0.01;
        let ce0 = &sols(q, Family::CeEven, 0)[0];
        let ce1 = &sols(q, Family::CeOdd, 0)[0];
        let se1 = &sols(q, Family::SeOdd, 0)[0];
        let ce4 = &sols(q, Family::CeEven, 2)[2];
        for v in [0.0f64, 0.4, 1.3, 2.8] {
            let want0 = 0.5f64.sqrt() * (1.0 + 0.5 * q * (2.0 * v).cos());
            assert!((eval_periodic(ce0, v) - want0).abs() < 5e-4 * q);
            let want1 = v.cos() + q / 8.0 * (3.0 * v).cos();
            assert!((eval_periodic(ce1, v) - want1).abs() < 2.0 * q * q);
            let want_s1 = v.sin() + q / 8.0 * (3.0 * v).sin();
            assert!((eval_periodic(se1, v) - want_s1).abs() < 2.0 * q * q);
            let want4 = (4.0 * v).cos() + 0.25 * q * ((6.0 * v).cos() / 5.0 - (2.0 * v).cos() / 3.0);
            assert!((eval_periodic(ce4, v) - want4).abs() < 2.0 * q * q);
        }
    }

    #[test]
    fn large_q_characteristic_trend() {
        let dev = |q: f64| {
            let a0 = sols(q, Family::CeEven, 0)[0].char_value;
            let g1 = -0.5 * (0.25 + 0.25);
            ((a0 + 2.0 * q) / (4.0 * q.sqrt()) - (0.5 + g1 / (4.0 * q.sqrt()))).abs()
        };
        let d: Vec<f64> = [25.0, 100.0, 400.0].iter().map(|&q| dev(q)).collect();
        assert!(d[0] > d[1] && d[1] > d[2]);
        for (q, x) in [25.0, 100.0, 400.0].iter().zip(&d) {
            assert!(x * q < 0.05, "q={q} dev={x}");
        }
    }

    #[test]
    fn radial_large_u_asymptote() {
        for (fam, n) in [(Family::CeEven, 0), (Family::CeOdd, 1), (Family::SeOdd, 0), (Family::SeEven, 2)] {
            let s = &sols(1.0, fam, n)[n];
            let c = radial_prefactor(s);
            let ratio = |u: f64| {
                let e = eval_modified(s, u).unwrap();
                let v2 = u.exp();
                (e.ln_abs_value + v2 + 0.5 * (2.0 * PI * v2).ln() - c.abs().ln()).exp()
            };
            let r6 = ratio(6.0);
            let r8 = ratio(8.5);
            assert!((r8 - 1.0).abs() < (r6 - 1.0).abs());
            assert!((r8 - 1.0).abs() < 5e-3, "{fam:?}: {r8}");
        }
    }

    #[test]
    fn radial_small_q_limits() {
        let q = 1e-4;
        let fek1 = &sols(q, Family::CeOdd, 0)[0];
        let gek1 = &sols(q, Family::SeOdd, 0)[0];
        let fek0 = &sols(q, Family::CeEven, 0)[0];
        let gek2 = &sols(q, Family::SeEven, 0)[0];
        let l = 0.5 * q.ln() - 2f64.ln() + specfun::EULER_GAMMA;
        for u in [0.0f64, 0.5, 1.0] {
            let want = (-u).exp() / (PI * q);
            assert!((eval_modified(fek1, u).unwrap().value / want - 1.0).abs() < 1e-2);
            assert!((eval_modified(gek1, u).unwrap().value / want - 1.0).abs() < 1e-2);
            let want2 = 4.0 * 2.0 / (PI * q * q) * (-2.0 * u).exp();
            assert!((eval_modified(gek2, u).unwrap().value / want2 - 1.0).abs() < 1e-2);
            let lead = -(u + l) / (PI * 2f64.sqrt());
            let got0 = eval_modified(fek0, u).unwrap().value;
            assert!((got0 / lead - 1.0).abs() < 1e-3);
            let derived = (-(u + l) * (1.0 + 0.5 * q * (2.0 * u).cosh()) + 0.5 * q * (2.0 * u).sinh()) / (PI * 2f64.sqrt());
            assert!((got0 / derived - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn radial_equation_residual() {
        for q in [0.25, 4.0, 100.0] {
            for fam in Family::ALL {
                for s in sols(q, fam, 3) {
                    for u in [0.1f64, 0.5, 1.0] {
                        let pot = s.char_value + 2.0 * q * (2.0 * u).cosh();
                        let h = 0.006 / (pot.abs() + 1.0).sqrt();
                        let f = |x: f64| eval_modified(&s, x).unwrap();
                        let (fm2, fm, f0, fp, fp2) = (f(u - 2.0 * h), f(u - h), f(u), f(u + h), f(u + 2.0 * h));
                        let d2 = (-fp2.value + 16.0 * fp.value - 30.0 * f0.value + 16.0 * fm.value - fm2.value)
                            / (12.0 * h * h);
                        let scale = (pot.abs() + 1.0) * f0.value.abs();
                        let r = d2 - pot * f0.value;
                        assert!(r.abs() < 1e-8 * scale, "{fam:?} m={} q={q} u={u}: {}", s.order, r / scale);
                        let d1 = (-fp2.value + 8.0 * fp.value - 8.0 * fm.value + fm2.value) / (12.0 * h);
                        assert!((d1 - f0.derivative_u).abs() < 1e-8 * (f0.derivative_u.abs() + f0.value.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn radial_monotone_decay() {
        let s = &sols(9.0, Family::CeEven, 2)[2];
        let mut prev = f64::INFINITY;
        for k in 0..30 {
            let e = eval_modified(s, 0.1 * k as f64).unwrap();
            assert!(e.value.abs() < prev && e.derivative_u * e.value < 0.0);
            prev = e.value.abs();
        }
    }

    #[test]
    fn log_derivative_small_q() {
        let q: f64 = 0.01;
        let l = 0.5 * q.ln() - 2f64.ln() + specfun::EULER_GAMMA;
        let ld0 = log_derivative(&sols(q, Family::CeEven, 0)[0]).unwrap();
        // Expanding the I0 K0 - (q/2) I1 K1 terms gives
        // Fek_0 ~ -(u + L)(1 + (q/2) cosh 2u) + (q/2) sinh 2u, hence (1 - q/2)/((1 + q/2) L).
        let derived = (1.0 - 0.5 * q) / ((1.0 + 0.5 * q) * l);
        assert!((ld0 - derived).abs() < 10.0 * q * q * q.ln().abs());
        assert!((ld0 - 1.0 / l).abs() < 2.0 * q / l.abs());
        let f1 = log_derivative(&sols(q, Family::CeOdd, 0)[0]).unwrap();
        assert!((f1 + 1.0 - q * (l + 0.25)).abs() < 10.0 * q * q * l.abs());
        let g1 = log_derivative(&sols(q, Family::SeOdd, 0)[0]).unwrap();
        assert!((g1 + 1.0 - q * (l - 0.75)).abs() < 10.0 * q * q * l.abs());
        for m in 2..8usize {
            let mf = m as f64;
            let want = -mf * (1.0 + q / (mf * mf - 1.0));
            for cosine in [true, false] {
                let (fam, n) = Family::locate(m, cosine).unwrap();
                let got = log_derivative(&sols(q, fam, n)[n]).unwrap();
                assert!((got - want).abs() < 10.0 * q * q * q.ln().abs(), "m={m} {got} {want}");
            }
        }
    }

    #[test]
    fn log_derivative_large_q_trend() {
        let dev = |q: f64| {
            let got = log_derivative(&sols(q, Family::CeEven, 0)[0]).unwrap();
            let want = -2.0 * 2f64.sqrt() * q.powf(0.25) / PI.sqrt() * (1.0 - 0.25 / (8.0 * q.sqrt()));
            (got / want - 1.0).abs()
        };
        let d: Vec<f64> = [25.0, 100.0, 400.0].iter().map(|&q| dev(q)).collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
        assert!(d[1] * 100.0 < 2.0 * d[0] * 25.0);
    }

    #[test]
    fn continuation_matches_direct_series() {
        let s = &sols(100.0, Family::SeOdd, 1)[1];
        let (us, _) = clean_start(s).unwrap();
        assert!(us > 0.0);
        let below = eval_modified(s, us - 1e-9).unwrap();
        let at = eval_modified(s, us).unwrap();
        assert!((below.log_derivative / at.log_derivative - 1.0).abs() < 1e-7);
        assert!((below.ln_abs_value - at.ln_abs_value).abs() < 1e-7);
    }

    #[test]
    fn large_q_profiles() {
        let q = 100.0;
        let p = large_q_mode_profile(Family::CeEven, 0, q, 0.0).unwrap();
        let c0 = (0.5 * PI * q.sqrt()).powf(0.25) * (1.0 - 1.0 / (16.0 * q.sqrt()));
        let y1 = -1.0 / 16.0 * specfun::parabolic_cylinder_d(4, 0.0).unwrap().value
            - 0.25 * specfun::parabolic_cylinder_d(2, 0.0).unwrap().value;
        assert!((p.value - c0 * (1.0 + y1 / 40.0)).abs() < 1e-12);
        let ce0 = &sols(q, Family::CeEven, 0)[0];
        let series = eval_periodic(ce0, 0.1);
        let asym = large_q_mode_profile(Family::CeEven, 0, q, 0.1).unwrap().value;
        assert!((asym / series - 1.0).abs() < 3.0 / q, "{asym} {series}");
        let ce1 = &sols(q, Family::CeOdd, 0)[0];
        for v in [0.0, 0.05, 0.1] {
            let d = eval_periodic(ce1, v) - eval_periodic(ce0, v);
            assert!(d.abs() < 1.0 / q);
            let dpi = eval_periodic(ce1, PI - v) + eval_periodic(ce0, PI - v);
            assert!(dpi.abs() < 1.0 / q);
        }
        let se1 = &sols(q, Family::SeOdd, 1)[1];
        let s_asym = large_q_mode_profile(Family::SeOdd, 1, q, 0.15).unwrap().value;
        assert!((s_asym / eval_periodic(se1, 0.15) - 1.0).abs() < 5.0 / q);
        assert!(!large_q_mode_profile(Family::CeEven, 0, q, 1.0).unwrap().reliable);
    }

    #[test]
    fn splitting_is_positive_and_tracks_asymptote() {
        for m in [0usize, 1, 2] {
            let mut prev = f64::INFINITY;
            let mut prev_dev = f64::INFINITY;
            for q in [25.0, 49.0, 100.0] {
                let s = characteristic_splitting(m, q).unwrap();
                assert!(s > 0.0 && s < prev);
                let dev = (s / splitting_asymptotic(m, q) - 1.0).abs();
                assert!(dev < prev_dev, "m={m} q={q} dev={dev}");
                prev = s;
                prev_dev = dev;
            }
        }
        let a0 = sols(4.0, Family::CeEven, 0)[0].char_value;
        let b1 = sols(4.0, Family::CeOdd, 0)[0].char_value;
        assert!((characteristic_splitting(0, 4.0).unwrap() - (b1 - a0)).abs() < 1e-10);
    }
}
