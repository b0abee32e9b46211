//! Quadratic-form kernels of the reduced density matrix on an interval, in the
//! angular variable `v` (with `x = cos v`) or in the linear variable `x`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathieu::{self, Family};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    Kc,
    Ks,
    Q0,
    Q0inv,
    P0,
    P0inv,
    EHpi,
    EHphi,
    DeltaEHpi,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Kc => "Kc",
            KernelKind::Ks => "Ks",
            KernelKind::Q0 => "Q0",
            KernelKind::Q0inv => "Q0inv",
            KernelKind::P0 => "P0",
            KernelKind::P0inv => "P0inv",
            KernelKind::EHpi => "EHpi",
            KernelKind::EHphi => "EHphi",
            KernelKind::DeltaEHpi => "deltaEHpi",
        }
    }

    /// Factor `f` with `linear(x1, x2) = f * angular(v1, v2) / (sin v1 sin v2)^p`, as `(f, p)`.
    fn jacobian(self) -> (f64, i32) {
        match self {
            KernelKind::Kc => (4.0, 1),
            KernelKind::Ks | KernelKind::P0 | KernelKind::Q0inv | KernelKind::EHphi => (1.0, 1),
            KernelKind::Q0 | KernelKind::P0inv | KernelKind::EHpi | KernelKind::DeltaEHpi => (1.0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    Angular,
    Linear,
}

/// Dimensionless mass `M = M_phi l` and the Mathieu parameter `q = M^2/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassParam {
    pub m: f64,
    pub q: f64,
}

impl MassParam {
    pub fn new(m: f64) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::Domain(format!("mass must be finite and >= 0, got {m}")));
        }
        Ok(MassParam { m, q: 0.25 * m * m })
    }

    pub fn massless() -> Self {
        MassParam { m: 0.0, q: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelGrid {
    pub grid: Vec<f64>,
    /// Row-major samples; singular diagonals hold NaN.
    pub values: Vec<f64>,
    pub kind: KernelKind,
    pub coordinate: Coordinate,
    pub mass: MassParam,
    pub singular_diagonal: bool,
    /// Set when the kernel is only defined on the complement of the zero mode.
    pub zero_mode_projected: bool,
    /// Highest harmonic retained by a series evaluation.
    pub truncation: Option<usize>,
}

impl KernelGrid {
    fn from_fn(
        grid: &[f64],
        kind: KernelKind,
        coordinate: Coordinate,
        mass: MassParam,
        singular_diagonal: bool,
        f: impl Fn(usize, usize) -> f64 + Sync,
    ) -> Self {
        let n = grid.len();
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for j in 0..n {
                row[j] = if i == j && singular_diagonal {
                    f64::NAN
                } else if j < i {
                    f64::NAN
                } else {
                    f(i, j)
                };
            }
        });
        for i in 0..n {
            for j in 0..i {
                if !(i == j && singular_diagonal) {
                    values[i * n + j] = values[j * n + i];
                }
            }
        }
        KernelGrid {
            grid: grid.to_vec(),
            values,
            kind,
            coordinate,
            mass,
            singular_diagonal,
            zero_mode_projected: false,
            truncation: None,
        }
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    /// Largest finite off-diagonal magnitude.
    pub fn scale(&self) -> f64 {
        let n = self.n();
        let mut s = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let v = self.get(i, j);
                if i != j && v.is_finite() {
                    s = s.max(v.abs());
                }
            }
        }
        s
    }

    /// Largest `|K_ij - K_ji|` over finite entries.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n();
        let mut s = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (self.get(i, j), self.get(j, i));
                if a.is_finite() && b.is_finite() {
                    s = s.max((a - b).abs());
                }
            }
        }
        s
    }

    /// Largest off-diagonal deviation from another kernel on the same grid.
    pub fn max_deviation(&self, other: &KernelGrid) -> f64 {
        let n = self.n();
        let mut s = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (self.get(i, j), other.get(i, j));
                if i != j && a.is_finite() && b.is_finite() {
                    s = s.max((a - b).abs());
                }
            }
        }
        s
    }

    /// CSV body: `# kind, coordinate, M, N` header and rows `i, j, g_i, g_j, value`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let coord = match self.coordinate {
            Coordinate::Angular => "angular",
            Coordinate::Linear => "linear",
        };
        writeln!(w, "# kind, coordinate, M, N")?;
        writeln!(w, "# {}, {}, {:e}, {}", self.kind.name(), coord, self.mass.m, self.n())?;
        for i in 0..self.n() {
            for j in 0..self.n() {
                let v = self.get(i, j);
                if v.is_finite() {
                    writeln!(w, "{i}, {j}, {:.17e}, {:.17e}, {:.17e}", self.grid[i], self.grid[j], v)?;
                } else {
                    writeln!(w, "{i}, {j}, {:.17e}, {:.17e}, nan", self.grid[i], self.grid[j])?;
                }
            }
        }
        Ok(())
    }
}

/// Midpoint (Chebyshev) nodes `v_j = pi (j + 1/2)/n` in `(0, pi)`.
pub fn chebyshev_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| PI * (j as f64 + 0.5) / n as f64).collect()
}

fn check_distinct(grid: &[f64]) -> Result<()> {
    for i in 0..grid.len() {
        for j in 0..i {
            if grid[i] == grid[j] {
                return Err(Error::SingularPair(j, i));
            }
        }
    }
    Ok(())
}

/// `cos v1 - cos v2` without cancellation for nearby arguments.
fn cos_diff(v1: f64, v2: f64) -> f64 {
    -2.0 * (0.5 * (v1 + v2)).sin() * (0.5 * (v1 - v2)).sin()
}

pub fn kc0_value(v1: f64, v2: f64) -> f64 {
    let d = cos_diff(v1, v2);
    -(1.0 - v1.cos() * v2.cos()) / (2.0 * PI * d * d)
}

pub fn ks0_value(v1: f64, v2: f64) -> f64 {
    let d = cos_diff(v1, v2);
    -v1.sin() * v2.sin() / (2.0 * PI * d * d)
}

/// `Q0 = -(1/4 pi) ln[4 (cos v1 - cos v2)^2]`.
pub fn q0_value(v1: f64, v2: f64) -> f64 {
    let d = cos_diff(v1, v2);
    -(4.0 * d * d).ln() / (4.0 * PI)
}

/// Angular form of the inverse of `Q0`, `4 Kc0`; linear form `-(2/pi)(1 - x1 x2)/((x1 - x2)^2 sqrt((1-x1^2)(1-x2^2)))`.
pub fn q0inv_value(v1: f64, v2: f64) -> f64 {
    4.0 * kc0_value(v1, v2)
}

/// `P0^{-1} = (1/pi) ln[(1 - cos(v1 + v2))/(1 - cos(v1 - v2))]`.
pub fn p0inv_value(v1: f64, v2: f64) -> f64 {
    let a = (0.5 * (v1 - v2)).sin();
    let b = (0.5 * (v1 + v2)).sin();
    ((b * b) / (a * a)).ln() / PI
}

pub fn kernel_kc0(grid: &[f64]) -> Result<KernelGrid> {
    check_distinct(grid)?;
    Ok(KernelGrid::from_fn(grid, KernelKind::Kc, Coordinate::Angular, MassParam::massless(), true, |i, j| {
        kc0_value(grid[i], grid[j])
    }))
}

pub fn kernel_ks0(grid: &[f64]) -> Result<KernelGrid> {
    check_distinct(grid)?;
    Ok(KernelGrid::from_fn(grid, KernelKind::Ks, Coordinate::Angular, MassParam::massless(), true, |i, j| {
        ks0_value(grid[i], grid[j])
    }))
}

pub fn q0_closed(grid: &[f64]) -> Result<KernelGrid> {
    check_distinct(grid)?;
    Ok(KernelGrid::from_fn(grid, KernelKind::Q0, Coordinate::Angular, MassParam::massless(), true, |i, j| {
        q0_value(grid[i], grid[j])
    }))
}

pub fn q0_inverse_closed(grid: &[f64]) -> Result<KernelGrid> {
    check_distinct(grid)?;
    let mut k = KernelGrid::from_fn(grid, KernelKind::Q0inv, Coordinate::Angular, MassParam::massless(), true, |i, j| {
        q0inv_value(grid[i], grid[j])
    });
    k.zero_mode_projected = true;
    Ok(k)
}

pub fn p0_closed(grid: &[f64]) -> Result<KernelGrid> {
    let mut k = kernel_ks0(grid)?;
    k.kind = KernelKind::P0;
    Ok(k)
}

pub fn p0_inverse_closed(grid: &[f64]) -> Result<KernelGrid> {
    check_distinct(grid)?;
    Ok(KernelGrid::from_fn(grid, KernelKind::P0inv, Coordinate::Angular, MassParam::massless(), true, |i, j| {
        p0inv_value(grid[i], grid[j])
    }))
}

/// Default highest harmonic for the series kernels.
pub fn default_truncation(q: f64) -> usize {
    40usize.max((8.0 * q.sqrt()).ceil() as usize + 20)
}

/// `K_c(v1,v2) = -(1/pi) sum_m Fek'_m/Fek_m ce_m(v1) ce_m(v2)`; `m_max = None` doubles the
/// truncation until the widest-separated pair settles.
pub fn kernel_kc(mass: MassParam, grid: &[f64], m_max: Option<usize>) -> Result<KernelGrid> {
    series_kernel(mass, grid, m_max, true)
}

/// `K_s(v1,v2) = -(1/pi) sum_m Gek'_m/Gek_m se_m(v1) se_m(v2)`.
pub fn kernel_ks(mass: MassParam, grid: &[f64], m_max: Option<usize>) -> Result<KernelGrid> {
    series_kernel(mass, grid, m_max, false)
}

fn series_kernel(mass: MassParam, grid: &[f64], m_max: Option<usize>, cosine: bool) -> Result<KernelGrid> {
    check_distinct(grid)?;
    if mass.m == 0.0 {
        return if cosine { kernel_kc0(grid) } else { kernel_ks0(grid) };
    }
    let n = grid.len();
    let (mut lo, mut hi) = (0, n.saturating_sub(1));
    for i in 0..n {
        if grid[i] < grid[lo] {
            lo = i;
        }
        if grid[i] > grid[hi] {
            hi = i;
        }
    }
    let mut k = m_max.unwrap_or_else(|| default_truncation(mass.q));
    let mut prev = series_values(mass.q, grid, k, cosine)?;
    loop {
        let next = series_values(mass.q, grid, 2 * k, cosine)?;
        let d = (next[lo * n + hi] - prev[lo * n + hi]).abs();
        if d <= 1e-8 {
            let mut out = if cosine { kernel_kc0(grid)? } else { kernel_ks0(grid)? };
            out.values = next;
            for i in 0..n {
                for j in 0..i {
                    let avg = 0.5 * (out.values[i * n + j] + out.values[j * n + i]);
                    out.values[i * n + j] = avg;
                    out.values[j * n + i] = avg;
                }
            }
            out.mass = mass;
            out.truncation = Some(2 * k);
            return Ok(out);
        }
        if m_max.is_some() || k >= 4096 {
            return Err(Error::Truncation(format!(
                "kernel series moved by {d:e} at the widest pair when doubling the truncation to {}",
                2 * k
            )));
        }
        k *= 2;
        prev = next;
    }
}

/// Re sum_{k >= k0} e^{i(k theta + beta)}/(k + c), for theta not a multiple of 2 pi.
fn harmonic_tail(theta: f64, beta: f64, c: i64, k0: i64) -> f64 {
    let z = Complex64::from_polar(1.0, theta);
    let mut s = -(Complex64::new(1.0, 0.0) - z).ln();
    let mut zj = Complex64::new(1.0, 0.0);
    for j in 1..(k0 + c) {
        zj *= z;
        s -= zj / j as f64;
    }
    (Complex64::from_polar(1.0, beta - c as f64 * theta) * s).re
}

/// Closed-form sum, over all harmonics `k >= 3`, of the first-order small-`q` part of the
/// kernel: diagonal couplings `(q/pi) k/(k^2-1)`, and `-(q/2pi)/(k+1)` between `k` and `k+2`.
fn first_order_closed(q: f64, v1: f64, v2: f64, cosine: bool) -> f64 {
    let (d, s) = (v1 - v2, v1 + v2);
    let sg = if cosine { 1.0 } else { -1.0 };
    let diag = 0.25 * q / PI
        * (harmonic_tail(d, 0.0, -1, 3) + harmonic_tail(d, 0.0, 1, 3)
            + sg * (harmonic_tail(s, 0.0, -1, 3) + harmonic_tail(s, 0.0, 1, 3)));
    let off = -0.25 * q / PI
        * (harmonic_tail(d, -2.0 * v2, 1, 3)
            + harmonic_tail(d, 2.0 * v1, 1, 3)
            + sg * (harmonic_tail(s, 2.0 * v2, 1, 3) + harmonic_tail(s, 2.0 * v1, 1, 3)));
    diag + off
}

/// Series kernel with all harmonics up to `kmax`: exact mode sums, minus the massless and
/// first-order parts restricted to `k <= kmax`, plus those parts summed in closed form.
fn series_values(q: f64, grid: &[f64], kmax: usize, cosine: bool) -> Result<Vec<f64>> {
    let n = grid.len();
    let families = if cosine { [Family::CeEven, Family::CeOdd] } else { [Family::SeOdd, Family::SeEven] };
    let basis = |k: usize, v: f64| if cosine { (k as f64 * v).cos() } else { (k as f64 * v).sin() };
    let mut acc = vec![0.0; n * n];
    let w = 20 + (4.0 * q.sqrt()).ceil() as usize;
    for fam in families {
        let r_count = (0..).take_while(|&r| fam.harmonic(r) <= kmax).count();
        let n_modes = r_count + w;
        let sols = mathieu::solve_spectrum(q, fam, n_modes, n_modes + w + 20)?;
        let ell: Vec<f64> = sols.par_iter().map(mathieu::log_derivative).collect::<Result<_>>()?;
        let table: Vec<Vec<f64>> = (0..r_count)
            .map(|r| grid.iter().map(|&v| basis(fam.harmonic(r), v)).collect())
            .collect();
        let contrib: Vec<Vec<f64>> = sols
            .par_iter()
            .zip(&ell)
            .map(|(s, &l)| {
                let c = s.direct_coefficients();
                let t: Vec<f64> = (0..n)
                    .map(|i| (0..r_count.min(c.len())).map(|r| c[r] * table[r][i]).sum())
                    .collect();
                let mut out = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = -l / PI * t[i] * t[j];
                    }
                }
                out
            })
            .collect();
        for c in contrib {
            acc.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        }
    }
    let kernel0 = if cosine { kc0_value } else { ks0_value };
    let out: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            if i == j {
                return f64::NAN;
            }
            let (v1, v2) = (grid[i], grid[j]);
            let mut sub = 0.0;
            for k in 1..=kmax {
                let kf = k as f64;
                let (b1, b2) = (basis(k, v1), basis(k, v2));
                sub += kf / PI * b1 * b2;
                if k >= 3 {
                    sub += q / PI * kf / (kf * kf - 1.0) * b1 * b2;
                    if k + 2 <= kmax {
                        sub -= 0.5 * q / (PI * (kf + 1.0)) * (b1 * basis(k + 2, v2) + basis(k + 2, v1) * b2);
                    }
                }
            }
            acc[idx] - sub + kernel0(v1, v2) + first_order_closed(q, v1, v2, cosine)
        })
        .collect();
    Ok(out)
}

pub fn to_linear_coordinates(k: &KernelGrid) -> KernelGrid {
    assert_eq!(k.coordinate, Coordinate::Angular, "kernel already in linear coordinates");
    let n = k.n();
    let (f, p) = k.kind.jacobian();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| k.grid[a].cos().partial_cmp(&k.grid[b].cos()).unwrap());
    let mut values = vec![0.0; n * n];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            let jac = f / (k.grid[i].sin() * k.grid[j].sin()).powi(p);
            values[a * n + b] = jac * k.get(i, j);
        }
    }
    KernelGrid {
        grid: idx.iter().map(|&i| k.grid[i].cos()).collect(),
        values,
        coordinate: Coordinate::Linear,
        ..k.clone()
    }
}

/// Inverse of [`to_linear_coordinates`]; angular grid ascending.
pub fn to_angular_coordinates(k: &KernelGrid) -> KernelGrid {
    assert_eq!(k.coordinate, Coordinate::Linear, "kernel already in angular coordinates");
    let n = k.n();
    let (f, p) = k.kind.jacobian();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| k.grid[a].acos().partial_cmp(&k.grid[b].acos()).unwrap());
    let mut values = vec![0.0; n * n];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            let s = ((1.0 - k.grid[i] * k.grid[i]) * (1.0 - k.grid[j] * k.grid[j])).sqrt();
            values[a * n + b] = k.get(i, j) * s.powi(p) / f;
        }
    }
    KernelGrid {
        grid: idx.iter().map(|&i| k.grid[i].acos()).collect(),
        values,
        coordinate: Coordinate::Angular,
        ..k.clone()
    }
}

/// Hadamard finite part of `int_0^pi a(v') h(v') / (v' - v)^2 dv'` for smooth `a h`,
/// used for row integrals of double-pole kernels. `nodes` is the rule size per panel.
pub fn finite_part_integral(v: f64, g: impl Fn(f64) -> f64, nodes: usize) -> f64 {
    let eps = 1e-4;
    let g0 = g(v);
    let g1 = (8.0 * (g(v + eps) - g(v - eps)) - (g(v + 2.0 * eps) - g(v - 2.0 * eps))) / (12.0 * eps);
    let reg = |x: f64| {
        let d = x - v;
        (g(x) - g0 - g1 * d) / (d * d)
    };
    let panels = |a: f64, b: f64| {
        let k = ((b - a) / 0.1).ceil().max(1.0) as usize;
        let br: Vec<f64> = (0..=k).map(|i| a + (b - a) * i as f64 / k as f64).collect();
        crate::quad::composite_nodes(&br, nodes)
    };
    let body: f64 = panels(0.0, v).into_iter().chain(panels(v, PI)).map(|(x, w)| w * reg(x)).sum();
    body + g0 * (-1.0 / (PI - v) - 1.0 / v) + g1 * ((PI - v) / v).ln()
}

/// Row integral `int_0^pi dv' K(v, v') h(v')` of a kernel with a `1/(2 pi (v' - v)^2)`-type
/// double pole, given as a function of both arguments.
pub fn double_pole_row_integral(v: f64, kernel: impl Fn(f64, f64) -> f64, h: impl Fn(f64) -> f64, nodes: usize) -> f64 {
    let off = |x: f64| {
        let d = x - v;
        kernel(v, x) * d * d * h(x)
    };
    let mid = |e: f64| 0.5 * (off(v + e) + off(v - e));
    // the kernel times (v'-v)^2 is smooth; its value on the pole is extrapolated
    let at_pole = (4.0 * mid(5e-4) - mid(1e-3)) / 3.0;
    let g = |x: f64| if (x - v).abs() < 1e-6 { at_pole } else { off(x) };
    finite_part_integral(v, g, nodes)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockIdentityReport {
    pub purity_defect: f64,
    pub max_deviation: f64,
    pub relative_deviation: f64,
    pub interval: Vec<usize>,
}

/// Checks `K_ll - K_lc K_cc^{-1} K_cl = (Q_ll)^{-1}` for `K = 4 P` of a pure state.
pub fn rdm_block_identity(full_q: &DMatrix<f64>, full_p: &DMatrix<f64>, interval: &[usize]) -> Result<BlockIdentityReport> {
    let n = full_q.nrows();
    if full_q.ncols() != n || full_p.nrows() != n || full_p.ncols() != n {
        return Err(Error::Invalid("Q and P must be square of equal size".into()));
    }
    if interval.is_empty() || interval.len() >= n || interval.iter().any(|&i| i >= n) {
        return Err(Error::Invalid("interval must be a proper non-empty subset of the sites".into()));
    }
    let k = full_p * 4.0;
    let defect = (full_q * &k - DMatrix::identity(n, n)).abs().max();
    if defect > 1e-8 {
        return Err(Error::Purity(defect));
    }
    let rest: Vec<usize> = (0..n).filter(|i| !interval.contains(i)).collect();
    let sub = |m: &DMatrix<f64>, r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| m[(r[i], c[j])]);
    let k_ll = sub(&k, interval, interval);
    let k_lc = sub(&k, interval, &rest);
    let k_cc = sub(&k, &rest, &rest);
    let q_ll = sub(full_q, interval, interval);
    let k_cc_chol = k_cc
        .cholesky()
        .ok_or_else(|| Error::Invalid("complement block of K is not positive definite".into()))?;
    let schur = &k_ll - &k_lc * k_cc_chol.solve(&k_lc.transpose());
    let q_inv = q_ll
        .cholesky()
        .ok_or_else(|| Error::Invalid("interval block of Q is not positive definite".into()))?
        .inverse();
    let dev = (&schur - &q_inv).abs().max();
    Ok(BlockIdentityReport {
        purity_defect: defect,
        max_deviation: dev,
        relative_deviation: dev / q_inv.abs().max(),
        interval: interval.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun;

    #[test]
    fn closed_form_values() {
        let (a, b) = (PI / 3.0, 2.0 * PI / 3.0);
        assert!((ks0_value(a, b) + 3.0 / (8.0 * PI)).abs() < 1e-15);
        assert!((kc0_value(a, b) + 5.0 / (8.0 * PI)).abs() < 1e-15);
        assert!((q0_value(a, b) + 4f64.ln() / (4.0 * PI)).abs() < 1e-15);
        let x1 = 0.5f64;
        let x2 = -0.5f64;
        assert!((q0_value(x1.acos(), x2.acos()) + 4f64.ln() / (4.0 * PI)).abs() < 1e-15);
        assert!(matches!(kernel_kc0(&[0.3, 0.3]), Err(Error::SingularPair(0, 1))));
    }

    #[test]
    fn massless_series_are_abel_sums() {
        // e^{-eps m} regularized harmonic sums approach the closed forms as eps -> 0
        let (v1, v2) = (0.7, 1.9);
        let abel = |cosine: bool, eps: f64| {
            (1..200_000)
                .map(|m| {
                    let mf = m as f64;
                    let b = if cosine { (mf * v1).cos() * (mf * v2).cos() } else { (mf * v1).sin() * (mf * v2).sin() };
                    mf / PI * b * (-eps * mf).exp()
                })
                .sum::<f64>()
        };
        for cosine in [true, false] {
            let want = if cosine { kc0_value(v1, v2) } else { ks0_value(v1, v2) };
            let e1 = abel(cosine, 1e-3);
            let e2 = abel(cosine, 5e-4);
            let extrap = 2.0 * e2 - e1;
            assert!((extrap - want).abs() < 1e-5, "{cosine}: {extrap} vs {want}");
        }
    }

    #[test]
    fn harmonic_tail_matches_direct_sum() {
        let (th, be) = (1.3, 0.4);
        for c in [-1i64, 1] {
            let direct: f64 = (3..2_000_000).map(|k| ((k as f64) * th + be).cos() / (k as f64 + c as f64)).sum();
            assert!((harmonic_tail(th, be, c, 3) - direct).abs() < 1e-5);
        }
    }

    #[test]
    fn symmetric_and_flagged() {
        let grid = chebyshev_grid(12);
        let k = kernel_kc(MassParam::new(0.5).unwrap(), &grid, None).unwrap();
        assert_eq!(k.asymmetry(), 0.0);
        assert!(k.get(3, 3).is_nan());
        assert!(k.singular_diagonal);
    }

    #[test]
    fn small_mass_kc_approaches_massless_plus_constant() {
        let m = 0.02;
        let mass = MassParam::new(m).unwrap();
        let (a, b) = (PI / 3.0, 2.0 * PI / 3.0);
        let k = kernel_kc(mass, &[a, b], None).unwrap();
        let lambda = (4.0 / mass.q).ln() - 2.0 * specfun::EULER_GAMMA;
        let want = kc0_value(a, b) + 1.0 / (PI * lambda);
        assert!((k.get(0, 1) - want).abs() < 5.0 * m * m * m.ln().abs(), "{} vs {want}", k.get(0, 1));
        let ks = kernel_ks(MassParam::new(1e-3).unwrap(), &[a, b], None).unwrap();
        assert!((ks.get(0, 1) + 3.0 / (8.0 * PI)).abs() < 1e-5);
        let anti = kernel_ks(MassParam::new(1e-3).unwrap(), &[0.4, PI - 0.4], None).unwrap();
        assert!((anti.get(0, 1) - ks0_value(0.4, PI - 0.4)).abs() < 1e-5);
    }

    #[test]
    fn series_self_convergence_at_unit_mass() {
        let mass = MassParam::new(1.0).unwrap();
        let grid = [0.3, 1.0, 1.7, 2.6];
        for cosine in [true, false] {
            let k = if cosine { kernel_kc(mass, &grid, None) } else { kernel_ks(mass, &grid, None) }.unwrap();
            let t = k.truncation.unwrap();
            let hi = series_values(mass.q, &grid, 2 * t, cosine).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        assert!((hi[i * 4 + j] - k.get(i, j)).abs() < 1e-8, "{cosine} {i} {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn ks_matches_translation_invariant_bessel_form() {
        let m = 0.1;
        let mass = MassParam::new(m).unwrap();
        let grid = chebyshev_grid(10);
        let lin = to_linear_coordinates(&kernel_ks(mass, &grid, None).unwrap());
        for i in 0..10 {
            for j in 0..10 {
                if i == j {
                    continue;
                }
                let r = (lin.grid[i] - lin.grid[j]).abs();
                let want = -(m * m / (2.0 * PI)) * specfun::modified_bessel_k(1, m * r).unwrap().value / (m * r);
                assert!((lin.get(i, j) / want - 1.0).abs() < 1e-5, "{i} {j}: {} {want}", lin.get(i, j));
            }
        }
    }

    #[test]
    fn zero_mode_row_integrals_vanish() {
        for &v in &chebyshev_grid(7) {
            let r = double_pole_row_integral(v, kc0_value, |_| 1.0, 24);
            assert!(r.abs() < 1e-6, "v={v}: {r}");
            let r = double_pole_row_integral(v, q0inv_value, |_| 1.0, 24);
            assert!(r.abs() < 1e-6, "q0inv v={v}: {r}");
        }
    }

    #[test]
    fn q0_inverse_composition_is_projector() {
        // f has zero mean on (0, pi)
        let f = |v: f64| (2.0 * v).cos() + 0.3 * (3.0 * v).cos() * v.sin();
        let mean = crate::quad::fixed(f, 0.0, PI, 64) / PI;
        let h = |v: f64| {
            let mut br = vec![0.0, v, PI];
            br.dedup();
            crate::quad::adaptive_breaks(&mut |w: f64| q0_value(v, w) * f(w), &br, 1e-13, 1e-13, 4000).unwrap().0
        };
        for v in [0.5, 1.2, 2.0] {
            let got = double_pole_row_integral(v, q0inv_value, h, 16);
            assert!((got - (f(v) - mean)).abs() < 1e-4, "v={v}: {got} vs {}", f(v) - mean);
        }
    }

    #[test]
    fn linear_map_and_round_trip() {
        let grid = chebyshev_grid(9);
        let ks0 = kernel_ks0(&grid).unwrap();
        let lin = to_linear_coordinates(&ks0);
        assert!(lin.grid.windows(2).all(|w| w[0] < w[1]));
        for i in 0..9 {
            for j in 0..9 {
                if i != j {
                    let d = lin.grid[i] - lin.grid[j];
                    assert!((lin.get(i, j) + 1.0 / (2.0 * PI * d * d)).abs() < 1e-12 * lin.get(i, j).abs());
                }
            }
        }
        let q0i = to_linear_coordinates(&q0_inverse_closed(&grid).unwrap());
        let (x1, x2) = (q0i.grid[2], q0i.grid[6]);
        let want = -2.0 / PI * (1.0 - x1 * x2) / ((x1 - x2).powi(2) * ((1.0 - x1 * x1) * (1.0 - x2 * x2)).sqrt());
        assert!((q0i.get(2, 6) - want).abs() < 1e-12 * want.abs());
        let back = to_angular_coordinates(&lin);
        for i in 0..9 {
            assert!((back.grid[i] - grid[i]).abs() < 1e-12);
            for j in 0..9 {
                if i != j {
                    assert!((back.get(i, j) - ks0.get(i, j)).abs() < 1e-12 * ks0.get(i, j).abs());
                }
            }
        }
        let mut c = ks0.clone();
        c.values.iter_mut().for_each(|v| *v = 2.5);
        let lc = to_linear_coordinates(&c);
        let s = (grid[8].sin() * grid[0].sin()).recip();
        assert!((lc.get(0, 8) - 2.5 * s).abs() < 1e-12);
    }

    #[test]
    fn block_identity_small_states() {
        // two coupled oscillators, ground state
        let w = nalgebra::Matrix2::new(2.0, -0.7, -0.7, 1.5);
        let eig = w.symmetric_eigen();
        let sq = eig.eigenvectors * nalgebra::Matrix2::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
        let q = DMatrix::from_iterator(2, 2, (sq.try_inverse().unwrap() * 0.5).iter().copied());
        let p = DMatrix::from_iterator(2, 2, (sq * 0.5).iter().copied());
        let r = rdm_block_identity(&q, &p, &[0]).unwrap();
        assert!(r.max_deviation < 1e-12);
        let k = &p * 4.0;
        let scalar = k[(0, 0)] - k[(0, 1)] * k[(1, 0)] / k[(1, 1)];
        assert!((scalar - 1.0 / q[(0, 0)]).abs() < 1e-12);
        let bad = &p * 1.1;
        assert!(matches!(rdm_block_identity(&q, &bad, &[0]), Err(Error::Purity(_))));
    }
}
