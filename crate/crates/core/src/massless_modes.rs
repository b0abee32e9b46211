//! Analytic Williamson modes of the massless interval and the spectral
//! integrals built from them.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{self, KernelGrid, KernelKind, MassParam};
use crate::quad;
use crate::specfun::cos_integral;

/// `omega(x) = ln((1+x)/(1-x))`, the conformal coordinate of the interval.
pub fn omega(x: f64) -> Result<f64> {
    if !(x.abs() < 1.0) {
        return Err(Error::Domain(format!("omega needs |x| < 1, got {x}")));
    }
    Ok(2.0 * x.atanh())
}

/// The same coordinate through `x = cos v`: `-2 ln tan(v/2)`.
pub fn omega_angular(v: f64) -> f64 {
    -2.0 * (0.5 * v).tan().ln()
}

fn ln_tan_half(v: f64) -> f64 {
    (0.5 * v).tan().ln()
}

/// `Omega(v1, v2) = 2 (ln tan(v2/2) - ln tan(v1/2))`.
pub fn spectral_phase(v1: f64, v2: f64) -> f64 {
    2.0 * (ln_tan_half(v2) - ln_tan_half(v1))
}

pub fn lambda(s: f64) -> f64 {
    1.0 / (PI * s.abs()).tanh()
}

pub fn epsilon(s: f64) -> f64 {
    2.0 * PI * s.abs()
}

#[derive(Debug, Clone, Serialize)]
pub struct WilliamsonMode {
    pub s: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub grid: Vec<f64>,
    /// Canonical pair with `P psi_bar = (lambda/2) phi_bar`.
    pub psi_bar: Vec<Complex64>,
    pub phi_bar: Vec<Complex64>,
    /// Rescaled pair `psi = sqrt(2/lambda) psi_bar`, `phi = sqrt(lambda/2) phi_bar`.
    pub psi: Vec<Complex64>,
    pub phi: Vec<Complex64>,
}

pub fn psi_bar(s: f64, v: f64) -> Complex64 {
    Complex64::from_polar(s.abs().powf(-0.5), 2.0 * s * ln_tan_half(v))
}

pub fn phi_bar(s: f64, v: f64) -> Complex64 {
    Complex64::from_polar(2.0 * s.abs().sqrt() / v.sin(), 2.0 * s * ln_tan_half(v))
}

pub fn mode(s: f64, grid: &[f64]) -> Result<WilliamsonMode> {
    if s == 0.0 || !s.is_finite() {
        return Err(Error::Domain(format!("mode label must be finite and nonzero, got {s}")));
    }
    if grid.iter().any(|&v| !(v > 0.0 && v < PI)) {
        return Err(Error::Domain("mode grid must lie inside (0, pi)".into()));
    }
    let lam = lambda(s);
    let psi_bar: Vec<Complex64> = grid.iter().map(|&v| psi_bar(s, v)).collect();
    let phi_bar: Vec<Complex64> = grid.iter().map(|&v| phi_bar(s, v)).collect();
    let (a, b) = ((2.0 / lam).sqrt(), (0.5 * lam).sqrt());
    Ok(WilliamsonMode {
        s,
        lambda: lam,
        epsilon: epsilon(s),
        grid: grid.to_vec(),
        psi: psi_bar.iter().map(|z| z * a).collect(),
        phi: phi_bar.iter().map(|z| z * b).collect(),
        psi_bar,
        phi_bar,
    })
}

/// `s -> 0` limits of the rescaled pair: `psi = sqrt(2 pi)`, `phi = sqrt(2/pi)/sin v`.
pub fn zero_mode(v: f64) -> (f64, f64) {
    ((2.0 * PI).sqrt(), (2.0 / PI).sqrt() / v.sin())
}

/// Quadrature over the spectral label, with panels refined towards `s = 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SQuadrature {
    pub s_max: f64,
    pub nodes: usize,
}

impl Default for SQuadrature {
    fn default() -> Self {
        SQuadrature { s_max: 8.0, nodes: 600 }
    }
}

impl SQuadrature {
    /// Nodes and weights on `(0, s_max)`.
    pub fn half_line(&self) -> Vec<(f64, f64)> {
        let mut br = vec![0.0];
        br.extend((1..=6).rev().map(|j| 0.5f64.powi(j)));
        let mut x = 1.0;
        while x < self.s_max {
            br.push(x);
            x += 1.0;
        }
        br.push(self.s_max);
        br.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let per = (self.nodes / (br.len() - 1)).max(8);
        quad::composite_nodes(&br, per)
    }
}

/// `1 - sech x` without cancellation.
fn one_minus_sech(x: f64) -> f64 {
    let h = (0.5 * x).sinh();
    2.0 * h * h / x.cosh()
}

/// `e^{i theta} - sech(pi s)` without cancellation.
fn shifted_phase(theta: f64, s: f64) -> Complex64 {
    Complex64::from_polar(2.0 * (0.5 * theta).sin(), 0.5 * theta) * Complex64::i() + one_minus_sech(PI * s)
}

/// Real part of the `Q0` spectral integrand at `s > 0`, including the symmetric `-s` half.
fn q0_integrand(s: f64, l1: f64, l2: f64) -> f64 {
    let b1 = shifted_phase(-2.0 * s * l1, s);
    let b2 = shifted_phase(2.0 * s * l2, s);
    (b1 * b2).re / ((PI * s).tanh() * 2.0 * s) / PI
}

/// Spectral value of one massless kernel at an off-diagonal pair (angular coordinates).
pub fn reconstruct_pair(kind: KernelKind, v1: f64, v2: f64, quad: &SQuadrature) -> Result<f64> {
    if v1 == v2 {
        return Err(Error::SingularPair(0, 0));
    }
    let om = spectral_phase(v1, v2);
    let nodes = quad.half_line();
    let cos_sum = |f: &dyn Fn(f64) -> f64| nodes.iter().map(|&(s, w)| w * f(s) * (s * om).cos()).sum::<f64>() / PI;
    let ss = v1.sin() * v2.sin();
    let smax = quad.s_max;
    Ok(match kind {
        KernelKind::P0 => {
            let bose = cos_sum(&|s| 4.0 * s / (2.0 * PI * s).exp_m1());
            (-2.0 / (PI * om * om) + bose) / ss
        }
        KernelKind::Q0inv => {
            let fermi = cos_sum(&|s| 16.0 * s / ((2.0 * PI * s).exp() + 1.0));
            (-8.0 / (PI * om * om) - fermi) / ss
        }
        KernelKind::P0inv => {
            let body = cos_sum(&|s| 2.0 * (PI * s).tanh() / s);
            body - 2.0 * cos_integral(smax * om.abs()) / PI
        }
        KernelKind::Q0 => {
            let (l1, l2) = (ln_tan_half(v1), ln_tan_half(v2));
            let body: f64 = nodes.iter().map(|&(s, w)| w * q0_integrand(s, l1, l2)).sum();
            body - cos_integral(smax * om.abs()) / (2.0 * PI)
        }
        other => return Err(Error::Invalid(format!("no massless spectral form for {}", other.name()))),
    })
}

/// Spectral reconstruction of `P0`, `P0^{-1}`, `Q0^{-1}` or `Q0` on a grid; diagonal left singular.
pub fn reconstruct(kind: KernelKind, grid: &[f64], quad: &SQuadrature) -> Result<KernelGrid> {
    let mut out = closed_form(kind, grid)?;
    let n = grid.len();
    let vals: Vec<Result<f64>> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            if i == j {
                Ok(f64::NAN)
            } else {
                reconstruct_pair(kind, grid[i], grid[j], quad)
            }
        })
        .collect();
    out.values = vals.into_iter().collect::<Result<_>>()?;
    Ok(out)
}

/// Closed-form counterpart of [`reconstruct`].
pub fn closed_form(kind: KernelKind, grid: &[f64]) -> Result<KernelGrid> {
    match kind {
        KernelKind::P0 => kernels::p0_closed(grid),
        KernelKind::P0inv => kernels::p0_inverse_closed(grid),
        KernelKind::Q0inv => kernels::q0_inverse_closed(grid),
        KernelKind::Q0 => kernels::q0_closed(grid),
        other => Err(Error::Invalid(format!("no massless spectral form for {}", other.name()))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairDeviation {
    pub i: usize,
    pub j: usize,
    pub v_i: f64,
    pub v_j: f64,
    pub value: f64,
    pub closed_form: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionReport {
    pub kind: KernelKind,
    pub pairs: Vec<PairDeviation>,
    pub max_relative_deviation: f64,
}

pub fn reconstruction_report(kind: KernelKind, grid: &[f64], quad: &SQuadrature) -> Result<ReconstructionReport> {
    let rec = reconstruct(kind, grid, quad)?;
    let cf = closed_form(kind, grid)?;
    let n = grid.len();
    let mut pairs = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (rec.get(i, j), cf.get(i, j));
            worst = worst.max((a - b).abs() / b.abs().max(1e-300));
            pairs.push(PairDeviation { i, j, v_i: grid[i], v_j: grid[j], value: a, closed_form: b, deviation: a - b });
        }
    }
    Ok(ReconstructionReport { kind, pairs, max_relative_deviation: worst })
}

impl ReconstructionReport {
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# kind, coordinate, M, N")?;
        let n = (1.0 + (1.0 + 4.0 * self.pairs.len() as f64).sqrt()) / 2.0;
        writeln!(w, "# {}, angular, 0e0, {}", self.kind.name(), n.round() as usize)?;
        writeln!(w, "# i, j, v_i, v_j, value, closed_form, deviation")?;
        for p in &self.pairs {
            writeln!(
                w,
                "{}, {}, {:.17e}, {:.17e}, {:.17e}, {:.17e}, {:.17e}",
                p.i, p.j, p.v_i, p.v_j, p.value, p.closed_form, p.deviation
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CutIntegralReport {
    pub s: f64,
    pub x: f64,
    pub quadrature: Complex64,
    pub closed_form: Complex64,
    pub deviation: f64,
    pub radii: Vec<f64>,
}

/// Principal value of `int_{-1}^{1} dy f_+(y,s)/(x - y)` with `f_+ = exp(-i s omega(y))`,
/// by symmetric excision and Richardson extrapolation in the radius, against
/// `pi i coth(pi s) [f_+(x,s) - sech(pi s)]`.
pub fn cut_integral_check(s: f64, x: f64) -> Result<CutIntegralReport> {
    if s == 0.0 || !s.is_finite() {
        return Err(Error::Domain(format!("cut integral needs finite s != 0, got {s}")));
    }
    let wx = omega(x)?;
    // y = tanh(w/2) maps the interval to the line with omega(y) = w
    let integrand = |w: f64| {
        let y = (0.5 * w).tanh();
        let c = (0.5 * w).cosh();
        Complex64::from_polar(0.5 / (c * c) / (x - y), -s * w)
    };
    let excised = |rho: f64| -> Result<Complex64> {
        if x - rho <= -1.0 || x + rho >= 1.0 {
            return Err(Error::Quadrature("excision radius reaches the interval end".into()));
        }
        let (lo, hi) = (omega(x - rho)?, omega(x + rho)?);
        let wmax = 80.0f64.max(wx.abs() + 80.0);
        let left: Vec<f64> = edge_breaks(-wmax, lo);
        let right: Vec<f64> = edge_breaks(hi, wmax).into_iter().collect();
        let mut f = integrand;
        let a = quad::adaptive_breaks(&mut f, &left, 1e-14, 1e-14, 20_000)?.0;
        let b = quad::adaptive_breaks(&mut f, &right, 1e-14, 1e-14, 20_000)?.0;
        Ok(a + b)
    };
    // the excision error is odd in the radius
    let mut radii = vec![1e-2, 5e-3, 2.5e-3];
    let mut table: Vec<Vec<Complex64>> = Vec::new();
    let mut prev_best: Option<Complex64> = None;
    let mut best;
    let mut i = 0;
    loop {
        if i == radii.len() {
            radii.push(radii[i - 1] * 0.5);
        }
        let mut row = vec![excised(radii[i])?];
        for k in 1..=i {
            let p = 2f64.powi(2 * k as i32 - 1);
            let r = (row[k - 1] * p - table[i - 1][k - 1]) / (p - 1.0);
            row.push(r);
        }
        best = row[i];
        table.push(row);
        i += 1;
        if i >= 3 {
            let change = (best - prev_best.unwrap()).norm();
            if change < 1e-10 * best.norm().max(1.0) {
                break;
            }
            if i >= 7 {
                return Err(Error::Quadrature(format!(
                    "excision extrapolation still moving by {change:e} at radius {:e}",
                    radii[i - 1]
                )));
            }
        }
        prev_best = Some(best);
    }
    let cf = cut_integral_closed_form(s, x)?;
    Ok(CutIntegralReport { s, x, quadrature: best, closed_form: cf, deviation: (best - cf).norm(), radii })
}

/// Breakpoints from `a` to `b`, dense near the excision edge of the inner end.
fn edge_breaks(a: f64, b: f64) -> Vec<f64> {
    let mut br: Vec<f64> = (0..=((b - a) / 0.5).ceil() as usize)
        .map(|k| (a + 0.5 * k as f64).min(b))
        .collect();
    br.dedup();
    if *br.last().unwrap() < b {
        br.push(b);
    }
    br
}

pub fn cut_integral_closed_form(s: f64, x: f64) -> Result<Complex64> {
    let f = Complex64::from_polar(1.0, -s * omega(x)?);
    Ok(Complex64::i() * PI / (PI * s).tanh() * (f - 1.0 / (PI * s).cosh()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Q0ContourReport {
    pub v1: f64,
    pub v2: f64,
    pub quadrature: f64,
    pub closed_form: f64,
    pub deviation: f64,
    pub relative_deviation: f64,
    /// Bound on the part of the tail not captured by the cosine-integral term.
    pub tail_bound: f64,
}

/// Adaptive evaluation of the `Q0` spectral integral with its zero-mode subtraction.
pub fn q0_contour_check(v1: f64, v2: f64) -> Result<Q0ContourReport> {
    if !(v1 > 0.0 && v1 < PI && v2 > 0.0 && v2 < PI) {
        return Err(Error::Domain("angles must lie in (0, pi)".into()));
    }
    if v1 == v2 {
        return Err(Error::SingularPair(0, 1));
    }
    let smax = 12.0;
    let (l1, l2) = (ln_tan_half(v1), ln_tan_half(v2));
    let om = spectral_phase(v1, v2);
    let mut br: Vec<f64> = vec![0.0, 1e-3, 1e-2, 0.1];
    br.extend((1..=(2.0 * smax) as usize).map(|k| 0.5 * k as f64));
    let mut f = |s: f64| if s == 0.0 { 0.0 } else { q0_integrand(s, l1, l2) };
    let (body, _) = quad::adaptive_breaks(&mut f, &br, 1e-14, 1e-14, 20_000)?;
    let value = body - cos_integral(smax * om.abs()) / (2.0 * PI);
    // neglected beyond smax: coth - 1 and the sech terms, each O(e^{-pi s}/s)
    let tail_bound = 2.0 * (-PI * smax).exp() / (PI * PI * smax);
    if tail_bound > 1e-8 {
        return Err(Error::Truncation(format!("spectral tail bound {tail_bound:e}")));
    }
    let cf = kernels::q0_value(v1, v2);
    Ok(Q0ContourReport {
        v1,
        v2,
        quadrature: value,
        closed_form: cf,
        deviation: value - cf,
        relative_deviation: (value - cf).abs() / cf.abs(),
        tail_bound,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Comparison {
    pub computed: f64,
    pub expected: f64,
    pub deviation: f64,
}

impl Comparison {
    pub fn new(computed: f64, expected: f64) -> Self {
        Comparison { computed, expected, deviation: (computed - expected).abs() }
    }

    pub fn relative(&self) -> f64 {
        self.deviation / self.expected.abs().max(1e-300)
    }
}

/// Gaussian packets `g_c(s) = exp(-(s-c)^2/(2 w^2))` in the spectral label: checks
/// `int dv Psi_a^* Phi_b = 2 pi int ds g_a g_b` with `Psi_a = int ds g_a psi_bar_s`.
pub fn biorthogonality_smeared(center_a: f64, center_b: f64, width: f64) -> Result<Comparison> {
    let lo = center_a.min(center_b) - 6.0 * width;
    if lo <= 0.0 {
        return Err(Error::Domain("packets must stay away from s = 0".into()));
    }
    let hi = center_a.max(center_b) + 6.0 * width;
    let snodes = quad::composite_nodes(&[lo, 0.5 * (lo + hi), hi], 60);
    let g = |c: f64, s: f64| (-(s - c).powi(2) / (2.0 * width * width)).exp();
    // in t = ln tan(v/2), dv / sin v = dt; the packets decay like exp(-2 w^2 t^2)
    let tmax = 12.0 / width;
    let tb: Vec<f64> = (0..=200).map(|k| -tmax + 2.0 * tmax * k as f64 / 200.0).collect();
    let tnodes = quad::composite_nodes(&tb, 16);
    let total: Complex64 = tnodes
        .par_iter()
        .map(|&(t, wt)| {
            let v = 2.0 * t.exp().atan();
            let mut psi = Complex64::new(0.0, 0.0);
            let mut phi = Complex64::new(0.0, 0.0);
            for &(s, ws) in &snodes {
                psi += psi_bar(s, v) * (ws * g(center_a, s));
                phi += phi_bar(s, v) * (ws * g(center_b, s));
            }
            // dv = sin v dt
            psi.conj() * phi * (wt * v.sin())
        })
        .sum();
    let expected = 2.0 * PI * PI.sqrt() * width * (-(center_a - center_b).powi(2) / (4.0 * width * width)).exp();
    Ok(Comparison::new(total.re, expected))
}

/// Relative L2 error on `(0, pi)` of the mode resolution applied to `h`, with `|s| <= s_max`.
pub fn completeness_residual(h: impl Fn(f64) -> f64 + Sync, s_max: f64, nodes: usize) -> f64 {
    let snodes = quad::nodes_on(nodes, -s_max, s_max);
    let tb: Vec<f64> = (0..=160).map(|k| -12.0 + 24.0 * k as f64 / 160.0).collect();
    let tnodes = quad::composite_nodes(&tb, 16);
    // int_0^pi dw phi_bar_s^*(w) h(w) = 2 sqrt|s| int dt e^{-2ist} h
    let coeff: Vec<Complex64> = snodes
        .par_iter()
        .map(|&(s, _)| {
            tnodes
                .iter()
                .map(|&(t, wt)| Complex64::from_polar(2.0 * s.abs().sqrt() * wt * h(2.0 * t.exp().atan()), -2.0 * s * t))
                .sum()
        })
        .collect();
    let vnodes = quad::composite_nodes(&[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, PI], 24);
    let (num, den): (f64, f64) = vnodes
        .par_iter()
        .map(|&(v, wv)| {
            let rec: Complex64 = snodes
                .iter()
                .zip(&coeff)
                .map(|(&(s, ws), c)| psi_bar(s, v) * c * (ws / (2.0 * PI)))
                .sum();
            let hv = h(v);
            (wv * (rec - hv).norm_sqr(), wv * hv * hv)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (num / den).sqrt()
}

/// Weight of the local massless entanglement Hamiltonian, `1 - x^2`.
pub fn eh_weight_massless(x: f64) -> f64 {
    1.0 - x * x
}

/// Coefficient of `(1 - x^2) delta(x - y)` in `H_E_pi` under `H_E = -(2 pi)^{-1} ln rho`.
pub const EH_DELTA_COEFFICIENT: f64 = 0.25;

/// The same coefficient for `2 pi H_E_pi`.
pub const EH_DELTA_COEFFICIENT_TWO_PI: f64 = PI / 2.0;

pub fn massless() -> MassParam {
    MassParam::massless()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::chebyshev_grid;

    #[test]
    fn omega_forms_agree() {
        assert_eq!(omega(0.0).unwrap(), 0.0);
        let v = PI / 4.0;
        assert!((omega(v.cos()).unwrap() + 2.0 * (PI / 8.0).tan().ln()).abs() < 1e-12);
        for v in [0.1, 0.7, 1.5, 2.9] {
            assert!((omega(f64::cos(v)).unwrap() - omega_angular(v)).abs() < 1e-12);
        }
        let near = omega(1.0 - 1e-8).unwrap();
        assert!((near - (2e8f64).ln()).abs() < 1e-6);
        assert!(omega(1.0 - 1e-9).unwrap() > near);
        assert!(matches!(omega(1.0), Err(Error::Domain(_))));
        assert!(matches!(omega(-1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn mode_parameters() {
        let m = mode(1.0, &[0.5, 1.5]).unwrap();
        assert!((m.lambda - 1.003742).abs() < 1e-6);
        assert_eq!(m.epsilon, 2.0 * PI);
        assert!((m.lambda - 1.0 / (0.5 * m.epsilon).tanh()).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for s in [0.01, 0.1, 0.5, 1.0, 3.0] {
            let l = lambda(s);
            assert!(l >= 1.0 && l < prev);
            prev = l;
        }
        let tiny = mode(1e-9, &[0.4, 2.0]).unwrap();
        for z in &tiny.psi {
            assert!((z - Complex64::new((2.0 * PI).sqrt(), 0.0)).norm() < 1e-6);
        }
        assert!(mode(0.0, &[1.0]).is_err());
    }

    #[test]
    fn phi_is_derivative_of_psi() {
        for s in [-1.3, 0.4, 2.0] {
            for v in [0.3, 1.1, 2.4] {
                let h = 1e-4;
                let d = (psi_bar(s, v - 2.0 * h) - psi_bar(s, v + 2.0 * h) + (psi_bar(s, v + h) - psi_bar(s, v - h)) * 8.0)
                    / (12.0 * h);
                let want = -Complex64::i() * s.signum() * d;
                assert!((phi_bar(s, v) - want).norm() < 1e-8 * phi_bar(s, v).norm());
            }
        }
    }

    #[test]
    fn cut_integral_matches() {
        let r = cut_integral_check(0.5, 0.3).unwrap();
        assert!(r.deviation < 1e-6, "{r:?}");
        let r = cut_integral_check(3.0, 0.3).unwrap();
        assert!(r.deviation < 1e-5);
        let z = cut_integral_closed_form(1.0, 0.0).unwrap();
        let want = Complex64::i() * PI / PI.tanh() * (1.0 - 1.0 / PI.cosh());
        assert!((z - want).norm() < 1e-15);
    }

    #[test]
    fn q0_contour() {
        let r = q0_contour_check(PI / 3.0, 2.0 * PI / 3.0).unwrap();
        assert!((r.closed_form + 4f64.ln() / (4.0 * PI)).abs() < 1e-15);
        assert!(r.relative_deviation < 1e-8, "{r:?}");
        let a = q0_contour_check(0.7, PI - 0.7).unwrap();
        assert!(a.relative_deviation < 1e-8);
        let n = q0_contour_check(1.0, 1.05).unwrap();
        assert!(n.relative_deviation < 1e-5);
        assert!(n.tail_bound < 1e-8);
    }

    #[test]
    fn reconstructions_match_closed_forms() {
        let grid = chebyshev_grid(6);
        let q = SQuadrature::default();
        for kind in [KernelKind::P0, KernelKind::P0inv, KernelKind::Q0inv, KernelKind::Q0] {
            let r = reconstruction_report(kind, &grid, &q).unwrap();
            assert!(r.max_relative_deviation < 1e-5, "{kind:?}: {}", r.max_relative_deviation);
        }
        let p = reconstruct_pair(KernelKind::P0, PI / 3.0, 2.0 * PI / 3.0, &q).unwrap();
        assert!((p + 3.0 / (8.0 * PI)).abs() < 1e-9);
        let a = reconstruct_pair(KernelKind::P0inv, 0.4, 1.9, &q).unwrap();
        let b = reconstruct_pair(KernelKind::P0inv, 1.9, 0.4, &q).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn smeared_biorthogonality_and_completeness() {
        for (a, b) in [(1.0, 1.0), (1.0, 1.3), (2.0, 1.6)] {
            let c = biorthogonality_smeared(a, b, 0.15).unwrap();
            assert!(c.deviation < 1e-4 * c.expected.abs().max(1.0), "{a} {b}: {c:?}");
        }
        let bump = |v: f64| {
            let t = (v - 0.5 * PI) / (0.5 * PI - 0.1);
            if t.abs() < 1.0 { (-1.0 / (1.0 - t * t)).exp() } else { 0.0 }
        };
        let r = completeness_residual(bump, 6.0, 400);
        assert!(r < 1e-4, "{r}");
    }

    #[test]
    fn weight() {
        assert_eq!(eh_weight_massless(1.0), 0.0);
        assert_eq!(eh_weight_massless(-1.0), 0.0);
        assert_eq!(eh_weight_massless(0.0), 1.0);
        assert!((EH_DELTA_COEFFICIENT - EH_DELTA_COEFFICIENT_TWO_PI / (2.0 * PI)).abs() < 1e-16);
    }
}
