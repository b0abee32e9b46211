//! Multiple-precision evaluation of periodic Mathieu modes, their radial
//! log-derivatives at the cut and tanh-sinh quadrature, for quantities that
//! cancel below double precision.

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Assign, Float};

use crate::error::{Error, Result};
use crate::mathieu::{self, Family};

/// Periodic mode `ce_m(v,-q)` or `se_m(v,-q)` with coefficients held at `prec` bits.
#[derive(Debug, Clone)]
pub struct MpMode {
    pub family: Family,
    pub n: usize,
    pub prec: u32,
    pub q: Float,
    pub char_value: Float,
    /// `c_r` of the `-q` function, normalized like [`mathieu::MathieuSolution`].
    pub direct: Vec<Float>,
}

fn diagonal(family: Family, k: usize, q: &Float, prec: u32) -> Float {
    let h = family.harmonic(k) as u64;
    let mut d = Float::with_val(prec, h * h);
    match (family, k) {
        (Family::CeOdd, 0) => d -= q,
        (Family::SeOdd, 0) => d += q,
        _ => {}
    }
    d
}

fn off_diagonal(family: Family, k: usize, q: &Float, prec: u32) -> Float {
    let mut e = Float::with_val(prec, -q);
    if family == Family::CeEven && k == 0 {
        e *= Float::with_val(prec, 2u32).sqrt();
    }
    e
}

/// Truncation large enough that the dropped coefficients sit below `2^-prec`.
pub fn truncation_for(q: f64, prec: u32) -> usize {
    40 + (6.0 * q.sqrt()).ceil() as usize + prec as usize / 6
}

/// `n`-th member of `family` at parameter `-q`, eigenvalue by Sturm bisection,
/// eigenvector by shifted inverse iteration.
pub fn mp_mode(family: Family, n: usize, q: f64, prec: u32) -> Result<MpMode> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Domain(format!("q must be positive and finite, got {q}")));
    }
    let size = truncation_for(q, prec).max(n + 40);
    let qf = Float::with_val(prec, q);
    let lambda = mathieu::mp_eigenvalue(family, q, size, n, prec);
    let mut shift = Float::with_val(prec, &lambda);
    let eps = Float::with_val(prec, Float::with_val(prec, 2u32).pow(-(prec as i32) + 24));
    shift += Float::with_val(prec, &eps * (Float::with_val(prec, lambda.abs_ref()) + 1u32));
    let diag: Vec<Float> = (0..size).map(|k| diagonal(family, k, &qf, prec) - &shift).collect();
    let off: Vec<Float> = (0..size - 1).map(|k| off_diagonal(family, k, &qf, prec)).collect();
    let mut x: Vec<Float> = (0..size).map(|k| Float::with_val(prec, 1.0 + 0.1 * ((k * 7919) % 13) as f64)).collect();
    for _ in 0..3 {
        solve_tridiagonal(&off, &diag, &mut x, prec);
        let norm = x.iter().fold(Float::with_val(prec, 0u32), |acc, v| acc + Float::with_val(prec, v * v)).sqrt();
        x.iter_mut().for_each(|v| *v /= &norm);
    }
    if family == Family::CeEven {
        x[0] /= Float::with_val(prec, 2u32).sqrt();
    }
    let anchor = x.iter().enumerate().fold(Float::with_val(prec, 0u32), |acc, (r, c)| {
        if family.is_cosine() {
            acc + c
        } else {
            acc + Float::with_val(prec, c * family.harmonic(r) as u64)
        }
    });
    if anchor.is_sign_negative() {
        x.iter_mut().for_each(|v| *v = Float::with_val(prec, -&*v));
    }
    let peak = x.iter().map(|c| c.to_f64().abs()).fold(0.0, f64::max);
    let last = x[size - 1].to_f64().abs();
    if last > peak * 2f64.powi(-(prec as i32)) {
        return Err(Error::Truncation(format!(
            "order {} at q = {q}: last coefficient {last:e} at truncation {size}",
            family.order(n)
        )));
    }
    Ok(MpMode { family, n, prec, q: qf, char_value: lambda, direct: x })
}

/// Symmetric tridiagonal solve with partial pivoting; `b` is overwritten.
fn solve_tridiagonal(off: &[Float], diag: &[Float], b: &mut [Float], prec: u32) {
    let n = diag.len();
    let mut d: Vec<Float> = diag.to_vec();
    let mut du: Vec<Float> = off.to_vec();
    let mut du2: Vec<Float> = vec![Float::with_val(prec, 0u32); n.saturating_sub(2)];
    let tiny = Float::with_val(prec, Float::with_val(prec, 2u32).pow(-(prec as i32) * 2));
    for i in 0..n - 1 {
        let dl = off[i].clone();
        if Float::with_val(prec, d[i].abs_ref()) >= Float::with_val(prec, dl.abs_ref()) {
            if d[i].is_zero() {
                d[i] = tiny.clone();
            }
            let f = Float::with_val(prec, &dl / &d[i]);
            let t = Float::with_val(prec, &f * &du[i]);
            d[i + 1] -= t;
            let t = Float::with_val(prec, &f * &b[i]);
            b[i + 1] -= t;
        } else {
            let f = Float::with_val(prec, &d[i] / &dl);
            d[i] = dl;
            let t = d[i + 1].clone();
            d[i + 1] = Float::with_val(prec, &du[i] - Float::with_val(prec, &f * &t));
            if i + 2 < n {
                du2[i] = du[i + 1].clone();
                du[i + 1] = Float::with_val(prec, -Float::with_val(prec, &f * &du2[i]));
            }
            du[i] = t;
            b.swap(i, i + 1);
            let t = Float::with_val(prec, &f * &b[i]);
            b[i + 1] -= t;
        }
    }
    if d[n - 1].is_zero() {
        d[n - 1] = tiny.clone();
    }
    b[n - 1] /= &d[n - 1];
    if n >= 2 {
        let t = Float::with_val(prec, &du[n - 2] * &b[n - 1]);
        b[n - 2] -= t;
        b[n - 2] /= &d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        let t = Float::with_val(prec, &du[i] * &b[i + 1]) + Float::with_val(prec, &du2[i] * &b[i + 2]);
        b[i] -= t;
        b[i] /= &d[i];
    }
}

impl MpMode {
    /// Value and first derivative at `v`.
    pub fn eval(&self, v: &Float) -> [Float; 2] {
        let prec = self.prec;
        let mut val = Float::with_val(prec, 0u32);
        let mut der = Float::with_val(prec, 0u32);
        let cosine = self.family.is_cosine();
        // harmonics step by 2: rotate (cos kv, sin kv) by 2v
        let k0 = self.family.harmonic(0) as u64;
        let (mut s, mut co) = Float::with_val(prec, v * k0).sin_cos(Float::new(prec));
        let (s2, c2) = Float::with_val(prec, v * 2u32).sin_cos(Float::new(prec));
        for (r, c) in self.direct.iter().enumerate() {
            let k = self.family.harmonic(r) as u64;
            if r > 0 {
                let nc = Float::with_val(prec, &co * &c2) - Float::with_val(prec, &s * &s2);
                s = Float::with_val(prec, &s * &c2) + Float::with_val(prec, &co * &s2);
                co = nc;
            }
            if cosine {
                val += Float::with_val(prec, c * &co);
                der -= Float::with_val(prec, c * &s) * k;
            } else {
                val += Float::with_val(prec, c * &s);
                der += Float::with_val(prec, c * &co) * k;
            }
        }
        [val, der]
    }

    /// `Fek'(0)/Fek(0)` or `Gek'(0)/Gek(0)` from the Bessel-product series at the cut.
    pub fn log_derivative(&self) -> Result<Float> {
        let prec = self.prec;
        let len = self.direct.len();
        let x = Float::with_val(prec, self.q.sqrt_ref());
        let bi = bessel_i_seq(len + 3, &x);
        let bk = bessel_k_seq(len + 3, &x);
        // d/du [I_a(v1) K_b(v2)] at u = 0, v1 = sqrt(q) e^{-u}, v2 = sqrt(q) e^{u}
        let pair = |a: usize, b: usize| -> (Float, Float) {
            let t = Float::with_val(prec, &bi[a] * &bk[b]);
            let mut d = Float::with_val(prec, &t * (b as i64 - a as i64));
            d -= Float::with_val(prec, &bi[a + 1] * &bk[b]) * &x;
            d -= Float::with_val(prec, &bi[a] * &bk[b + 1]) * &x;
            (t, d)
        };
        let (mut s, mut sd) = (Float::with_val(prec, 0u32), Float::with_val(prec, 0u32));
        for (r, c) in self.direct.iter().enumerate() {
            // positive-parameter coefficient A_r = (-1)^{n+r} c_r
            let a = if (self.n + r) % 2 == 0 { c.clone() } else { Float::with_val(prec, -c) };
            let (t, td) = match self.family {
                Family::CeEven => pair(r, r),
                Family::CeOdd | Family::SeOdd => {
                    let (x1, d1) = pair(r, r + 1);
                    let (y1, e1) = pair(r + 1, r);
                    if self.family == Family::CeOdd {
                        (x1 - y1, d1 - e1)
                    } else {
                        (x1 + y1, d1 + e1)
                    }
                }
                Family::SeEven => {
                    let (x1, d1) = pair(r, r + 2);
                    let (y1, e1) = pair(r + 2, r);
                    (x1 - y1, d1 - e1)
                }
            };
            s += Float::with_val(prec, &a * &t);
            sd += Float::with_val(prec, &a * &td);
        }
        if s.is_zero() {
            return Err(Error::Overflow(format!("Bessel-product sum of order {} vanishes", self.family.order(self.n))));
        }
        Ok(sd / s)
    }
}

/// `I_0(x) .. I_{n-1}(x)` by the ascending series.
pub fn bessel_i_seq(n: usize, x: &Float) -> Vec<Float> {
    let prec = x.prec();
    let half = Float::with_val(prec, x / 2u32);
    let z = Float::with_val(prec, &half * &half);
    let cutoff = Float::with_val(prec, Float::with_val(prec, 2u32).pow(-(prec as i32) - 8));
    let mut lead = Float::with_val(prec, 1u32);
    (0..n)
        .map(|m| {
            if m > 0 {
                lead *= &half;
                lead /= m as u64;
            }
            let mut term = lead.clone();
            let mut sum = term.clone();
            let mut k = 1u64;
            loop {
                term *= &z;
                term /= k * (k + m as u64);
                sum += &term;
                if Float::with_val(prec, &term / &sum) < cutoff {
                    break;
                }
                k += 1;
            }
            sum
        })
        .collect()
}

/// `K_0(x) .. K_{n-1}(x)`: `K_0`, `K_1` by the trapezoid rule on
/// `int_0^inf e^{-x cosh t} cosh(nu t) dt`, then upward recurrence.
pub fn bessel_k_seq(n: usize, x: &Float) -> Vec<Float> {
    let prec = x.prec();
    let bits = prec as f64 * std::f64::consts::LN_2 + 30.0;
    let h = Float::with_val(prec, std::f64::consts::PI * std::f64::consts::PI / bits);
    let xf = x.to_f64();
    let t_max = (1.0 + bits / xf).acosh() + 1.0;
    let steps = (t_max / h.to_f64()).ceil() as u64;
    let mut k0 = Float::with_val(prec, 0u32);
    let mut k1 = Float::with_val(prec, 0u32);
    for j in 0..=steps {
        let t = Float::with_val(prec, &h * j);
        let (sh, ch) = t.sinh_cosh(Float::new(prec));
        drop(sh);
        let e = Float::with_val(prec, -Float::with_val(prec, x * &ch)).exp();
        let w = if j == 0 { 0.5 } else { 1.0 };
        k0 += Float::with_val(prec, &e * w);
        k1 += Float::with_val(prec, &e * &ch) * w;
    }
    k0 *= &h;
    k1 *= &h;
    let mut out = vec![k0, k1];
    for m in 1..n.saturating_sub(1) {
        let next = Float::with_val(prec, &out[m] * (2 * m) as u64) / x + &out[m - 1];
        out.push(next);
    }
    out.truncate(n);
    out
}

/// Tanh-sinh quadrature on `[a, b]`, refined by halving the step until two
/// levels agree to `tol` absolute.
pub fn tanh_sinh(mut g: impl FnMut(&Float) -> Float, a: &Float, b: &Float, tol: &Float) -> Result<Float> {
    let prec = a.prec();
    let half_pi = Float::with_val(prec, Constant::Pi) / 2u32;
    let c = Float::with_val(prec, a + b) / 2u32;
    let r = Float::with_val(prec, b - a) / 2u32;
    let bits = prec as f64 * std::f64::consts::LN_2;
    // weights fall below 2^-prec beyond this t
    let t_max = (2.0 * bits / std::f64::consts::PI).ln() + 0.5;
    let node = |t: f64| -> (Float, Float) {
        let tf = Float::with_val(prec, t);
        let (sh, ch) = tf.sinh_cosh(Float::new(prec));
        let u = Float::with_val(prec, &half_pi * &sh);
        let (th, chu) = (Float::with_val(prec, u.tanh_ref()), Float::with_val(prec, u.cosh_ref()));
        let x = Float::with_val(prec, &c + Float::with_val(prec, &r * &th));
        let w = Float::with_val(prec, &r * &half_pi) * ch / Float::with_val(prec, &chu * &chu);
        (x, w)
    };
    let mut h = 0.5f64;
    let mut sum = Float::with_val(prec, 0u32);
    // level 0 includes t = 0 and all multiples of h
    let mut k = 0i64;
    while (k as f64) * h <= t_max {
        for t in if k == 0 { vec![0.0] } else { vec![k as f64 * h, -(k as f64) * h] } {
            let (x, w) = node(t);
            if x > *a && x < *b {
                sum += w * g(&x);
            }
        }
        k += 1;
    }
    let mut estimate = Float::with_val(prec, &sum * h);
    for _ in 0..14 {
        h *= 0.5;
        let mut k = 1i64;
        while (k as f64) * h <= t_max {
            for t in [k as f64 * h, -(k as f64) * h] {
                let (x, w) = node(t);
                if x > *a && x < *b {
                    sum += w * g(&x);
                }
            }
            k += 2;
        }
        let next = Float::with_val(prec, &sum * h);
        let diff = Float::with_val(prec, &next - &estimate).abs();
        estimate = next;
        if diff < *tol {
            return Ok(estimate);
        }
    }
    Err(Error::NonConvergence(format!("tanh-sinh did not reach {:e}", tol.to_f64())))
}

/// Dense square matrix of `Float`s, row-major.
#[derive(Debug, Clone)]
pub struct MpMatrix {
    pub n: usize,
    pub prec: u32,
    pub data: Vec<Float>,
}

impl MpMatrix {
    pub fn zeros(n: usize, prec: u32) -> Self {
        MpMatrix { n, prec, data: vec![Float::with_val(prec, 0u32); n * n] }
    }

    pub fn identity(n: usize, prec: u32) -> Self {
        let mut m = Self::zeros(n, prec);
        for i in 0..n {
            m.data[i * n + i] = Float::with_val(prec, 1u32);
        }
        m
    }

    pub fn from_fn(n: usize, prec: u32, f: impl Fn(usize, usize) -> Float) -> Self {
        let data = (0..n * n).map(|k| Float::with_val(prec, f(k / n, k % n))).collect();
        MpMatrix { n, prec, data }
    }

    pub fn from_f64(m: &nalgebra::DMatrix<f64>, prec: u32) -> Self {
        Self::from_fn(m.nrows(), prec, |i, j| Float::with_val(prec, m[(i, j)]))
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.data[i * self.n + j].to_f64())
    }

    pub fn get(&self, i: usize, j: usize) -> &Float {
        &self.data[i * self.n + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut Float {
        &mut self.data[i * self.n + j]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, self.prec, |i, j| self.get(j, i).clone())
    }

    pub fn mul(&self, other: &MpMatrix) -> MpMatrix {
        let n = self.n;
        let prec = self.prec;
        let mut out = Self::zeros(n, prec);
        let mut t = Float::new(prec);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    t.assign(a * other.get(k, j));
                    out.data[i * n + j] += &t;
                }
            }
        }
        out
    }

    /// `self * diag(d) * other^T`.
    pub fn mul_diag_transpose(&self, d: &[Float], other: &MpMatrix) -> MpMatrix {
        let n = self.n;
        let prec = self.prec;
        let scaled = Self::from_fn(n, prec, |i, k| Float::with_val(prec, self.get(i, k) * &d[k]));
        let mut out = Self::zeros(n, prec);
        let mut t = Float::new(prec);
        for i in 0..n {
            for j in 0..n {
                let acc = &mut out.data[i * n + j];
                for k in 0..n {
                    t.assign(scaled.get(i, k) * other.get(j, k));
                    *acc += &t;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.to_f64().abs()).fold(0.0, f64::max)
    }

    /// `max |self - other|`.
    pub fn max_abs_diff(&self, other: &MpMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| Float::with_val(self.prec, a - b).to_f64().abs())
            .fold(0.0, f64::max)
    }

    /// Lower Cholesky factor `L` with `self = L L^T`.
    pub fn cholesky(&self) -> Result<MpMatrix> {
        let n = self.n;
        let prec = self.prec;
        let mut l = Self::zeros(n, prec);
        let mut t = Float::new(prec);
        for j in 0..n {
            let mut d = self.get(j, j).clone();
            for k in 0..j {
                t.assign(l.get(j, k).square_ref());
                d -= &t;
            }
            if !d.is_sign_positive() || d.is_zero() {
                return Err(Error::Invalid(format!("matrix is not positive definite (pivot {j})")));
            }
            let djj = d.sqrt();
            for i in j + 1..n {
                let mut s = self.get(i, j).clone();
                for k in 0..j {
                    t.assign(l.get(i, k) * l.get(j, k));
                    s -= &t;
                }
                *l.get_mut(i, j) = s / &djj;
            }
            *l.get_mut(j, j) = djj;
        }
        Ok(l)
    }

    /// Inverse of a lower-triangular matrix.
    pub fn lower_inverse(&self) -> MpMatrix {
        let n = self.n;
        let prec = self.prec;
        let mut inv = Self::zeros(n, prec);
        let mut t = Float::new(prec);
        for j in 0..n {
            *inv.get_mut(j, j) = Float::with_val(prec, 1u32) / self.get(j, j);
            for i in j + 1..n {
                let mut s = Float::with_val(prec, 0u32);
                for k in j..i {
                    t.assign(self.get(i, k) * inv.get(k, j));
                    s += &t;
                }
                *inv.get_mut(i, j) = -s / self.get(i, i);
            }
        }
        inv
    }

    /// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
    pub fn spd_inverse(&self) -> Result<MpMatrix> {
        let li = self.cholesky()?.lower_inverse();
        Ok(li.transpose().mul(&li))
    }

    /// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a symmetric
    /// matrix by cyclic Jacobi rotations.
    pub fn symmetric_eigen(&self) -> Result<(Vec<Float>, MpMatrix)> {
        let n = self.n;
        let prec = self.prec;
        let mut a = self.clone();
        let mut v = Self::identity(n, prec);
        let scale = Float::with_val(prec, self.max_abs().max(f64::MIN_POSITIVE));
        let floor = Float::with_val(prec, Float::with_val(prec, 2u32).pow(-(prec as i32))) * &scale;
        // rounding keeps the off-diagonal norm near n ulps of the scale
        let settled = Float::with_val(prec, &floor * (16 * n.max(1)) as u32);
        let (mut g, mut h, mut t1, mut t2) = (Float::new(prec), Float::new(prec), Float::new(prec), Float::new(prec));
        for _sweep in 0..60 {
            let mut off = Float::with_val(prec, 0u32);
            for p in 0..n {
                for q in p + 1..n {
                    off += Float::with_val(prec, a.get(p, q).square_ref());
                }
            }
            let off = off.sqrt();
            if off <= settled {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&i, &j| a.get(i, i).partial_cmp(a.get(j, j)).unwrap());
                let vals = order.iter().map(|&i| a.get(i, i).clone()).collect();
                let vecs = Self::from_fn(n, prec, |r, c| v.get(r, order[c]).clone());
                return Ok((vals, vecs));
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q).clone();
                    if Float::with_val(prec, apq.abs_ref()) <= floor {
                        continue;
                    }
                    // tan of the rotation angle, smaller root
                    let theta = Float::with_val(prec, a.get(q, q) - a.get(p, p)) / Float::with_val(prec, &apq * 2u32);
                    let root = (Float::with_val(prec, theta.square_ref()) + 1u32).sqrt();
                    let mut t = Float::with_val(prec, 1u32) / (Float::with_val(prec, theta.abs_ref()) + root);
                    if theta.is_sign_negative() {
                        t = -t;
                    }
                    let c = (Float::with_val(prec, t.square_ref()) + 1u32).sqrt().recip();
                    let s = Float::with_val(prec, &t * &c);
                    let tau = Float::with_val(prec, &s / Float::with_val(prec, &c + 1u32));
                    t1.assign(&t * &apq);
                    *a.get_mut(p, p) -= &t1;
                    *a.get_mut(q, q) += &t1;
                    *a.get_mut(p, q) = Float::with_val(prec, 0u32);
                    *a.get_mut(q, p) = Float::with_val(prec, 0u32);
                    for r in 0..n {
                        if r != p && r != q {
                            g.assign(a.get(r, p));
                            h.assign(a.get(r, q));
                            // a_rp = g - s (h + g tau), a_rq = h + s (g - h tau)
                            t1.assign(&g * &tau);
                            t1 += &h;
                            t1 *= &s;
                            t2.assign(&h * &tau);
                            t2 -= &g;
                            t2 *= &s;
                            let new_p = Float::with_val(prec, &g - &t1);
                            let new_q = Float::with_val(prec, &h - &t2);
                            *a.get_mut(p, r) = new_p.clone();
                            *a.get_mut(r, p) = new_p;
                            *a.get_mut(q, r) = new_q.clone();
                            *a.get_mut(r, q) = new_q;
                        }
                        g.assign(v.get(r, p));
                        h.assign(v.get(r, q));
                        t1.assign(&g * &tau);
                        t1 += &h;
                        t1 *= &s;
                        t2.assign(&h * &tau);
                        t2 -= &g;
                        t2 *= &s;
                        *v.get_mut(r, p) = Float::with_val(prec, &g - &t1);
                        *v.get_mut(r, q) = Float::with_val(prec, &h - &t2);
                    }
                }
            }
        }
        Err(Error::NonConvergence("Jacobi eigenvalue sweeps".into()))
    }
}
