//! First-order small-mass corrections: the `Lambda` parameter, the constant
//! shift of `K_c`, the `delta H_E` kernels and their spectral and
//! perturbative evaluations.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::MassParam;
use crate::massless_modes::{self, SQuadrature};
use crate::quad;
use crate::specfun::{cos_integral, sin_integral, EULER_GAMMA};

/// Largest mass for which the correction kernels are produced.
pub const SMALL_MASS_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, Serialize)]
pub struct CorrectionParams {
    pub mass: MassParam,
    /// `L = ln(M/4) + gamma`.
    pub l_param: f64,
    /// `Lambda = -2 L`.
    pub lambda: f64,
    pub warnings: Vec<String>,
}

pub fn correction_params(m: f64) -> Result<CorrectionParams> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::Domain(format!("small-mass corrections need 0 < M < 1, got {m}")));
    }
    let mass = MassParam::new(m)?;
    let l_param = (0.25 * m).ln() + EULER_GAMMA;
    let lambda = -2.0 * l_param;
    let mut warnings = Vec::new();
    let coupling = 1.0 / (PI * lambda);
    if coupling > 0.1 {
        warnings.push(format!("1/(pi Lambda) = {coupling:.3} > 0.1, first order is unreliable"));
    }
    Ok(CorrectionParams { mass, l_param, lambda, warnings })
}

impl CorrectionParams {
    /// Constant shift of `K_c`, `1/(pi Lambda)`, the same in every coordinate.
    pub fn delta_kc(&self) -> f64 {
        1.0 / (PI * self.lambda)
    }

    pub fn require_small_mass(&self) -> Result<()> {
        if self.mass.m > SMALL_MASS_LIMIT {
            return Err(Error::Domain(format!(
                "corrections are only produced for M <= {SMALL_MASS_LIMIT}, got {}",
                self.mass.m
            )));
        }
        Ok(())
    }
}

/// `Psi_s = int_0^pi psi_s = sqrt(2/(|s| lambda_s)) pi / cosh(pi s)`; finite at `s = 0`.
pub fn psi_overlap(s: f64) -> f64 {
    let x = PI * s.abs();
    // |s| lambda_s = x coth(x) / pi
    let s_lambda = if x < 1e-8 { (1.0 + x * x / 3.0) / PI } else { x / x.tanh() / PI };
    (2.0 / s_lambda).sqrt() * PI / x.cosh()
}

fn check_unit(x: f64) -> Result<()> {
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!("linear coordinate must lie in [-1, 1], got {x}")));
    }
    Ok(())
}

/// `delta H_Epi(x, y) = (1/(16 Lambda)) (1 - max(|x|, |y|))`.
pub fn delta_eh_pi(x: f64, y: f64, params: &CorrectionParams) -> Result<f64> {
    check_unit(x)?;
    check_unit(y)?;
    Ok((1.0 - x.abs().max(y.abs())) / (16.0 * params.lambda))
}

/// Angular form `2 pi delta H_Epi(u, v) = (pi/(8 Lambda)) (1 - max(|cos u|, |cos v|))`.
pub fn delta_eh_pi_angular(u: f64, v: f64, params: &CorrectionParams) -> f64 {
    PI / (8.0 * params.lambda) * (1.0 - u.cos().abs().max(v.cos().abs()))
}

/// The two couplings of `delta H_Ephi`: `local * phi_x^2 + antidiagonal * phi_x phi_{-x}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EhPhiTerms {
    pub local: f64,
    pub antidiagonal: f64,
}

pub fn delta_eh_phi_terms(params: &CorrectionParams) -> EhPhiTerms {
    let c = 1.0 / (16.0 * params.lambda);
    EhPhiTerms { local: c, antidiagonal: c }
}

impl EhPhiTerms {
    /// Midpoint lattice on `[-1, 1]` with `n` sites: diagonal plus antidiagonal bands.
    pub fn lattice(&self, n: usize) -> DMatrix<f64> {
        let h = 2.0 / n as f64;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] += h * self.local;
            m[(i, n - 1 - i)] += h * self.antidiagonal;
        }
        m
    }

    /// The same couplings written as `(local/2) int (phi_x + phi_{-x})^2`.
    pub fn symmetrized_lattice(&self, n: usize) -> DMatrix<f64> {
        let h = 2.0 / n as f64;
        let mut b = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            b[(i, n - 1 - i)] += 1.0;
        }
        (b.transpose() * b) * (0.5 * h * self.local)
    }
}

/// `x coth x - 1` without cancellation.
fn x_coth_minus_one(x: f64) -> f64 {
    if x < 1e-2 {
        let z = x * x;
        z / 3.0 - z * z / 45.0 + 2.0 * z * z * z / 945.0
    } else {
        x / x.tanh() - 1.0
    }
}

/// `d(x coth x)/dx = (sinh 2x - 2x) / (2 sinh^2 x)`.
fn x_coth_prime(x: f64) -> f64 {
    if x > 20.0 {
        return 1.0;
    }
    let y = 2.0 * x;
    let shm = if y < 0.5 {
        let z = y * y;
        y * z / 6.0 * (1.0 + z / 20.0 * (1.0 + z / 42.0 * (1.0 + z / 72.0 * (1.0 + z / 110.0))))
    } else {
        y.sinh() - y
    };
    let sh = x.sinh();
    shm / (2.0 * sh * sh)
}

/// `dF/dE` with `F = eps lambda / 2 = pi|s| coth(pi|s|)` and `E = (2/lambda)^2`; `1/12` at `s = 0`.
pub fn deriv_pi_factor(s: f64) -> f64 {
    let x = PI * s.abs();
    if x < 1e-7 {
        return 1.0 / 12.0;
    }
    let c = x.cosh();
    x_coth_prime(x) * c * c / (8.0 * x.tanh())
}

/// `d[eps (2/lambda)]/dE = eps lambda/4 + lambda^2/(2(lambda^2 - 1))`; `1` at `s = 0`.
pub fn deriv_phi_factor(s: f64) -> f64 {
    let x = PI * s.abs();
    let f = if x < 1e-8 { 1.0 } else { x / x.tanh() };
    let c = x.cosh();
    0.5 * f + 0.5 * c * c
}

/// `E_s = (2/lambda_s)^2 = 4 tanh^2(pi s)`.
pub fn unperturbed_energy(s: f64) -> f64 {
    let t = (PI * s).tanh();
    4.0 * t * t
}

/// `(F(a) - F(b)) / ((E(a) - E(b)) cosh(pi a) cosh(pi b))` for `a, b >= 0`,
/// with the derivative on `a = b`.
pub fn pi_difference_quotient(a: f64, b: f64) -> f64 {
    let (a, b) = (a.abs(), b.abs());
    let (xa, xb) = (PI * a, PI * b);
    if (xa - xb).abs() < 1e-5 {
        let x = 0.5 * (xa + xb);
        if x < 1e-7 {
            return 1.0 / 12.0;
        }
        return x_coth_prime(x) / (8.0 * x.tanh());
    }
    let df = x_coth_minus_one(xa) - x_coth_minus_one(xb);
    df / (4.0 * (xa.tanh() + xb.tanh()) * (xa - xb).sinh())
}

/// `tanh(pi s)/|s|`, equal to `pi` at `s = 0`.
fn tanh_over(s: f64) -> f64 {
    let a = s.abs();
    if a < 1e-8 {
        PI
    } else {
        (PI * a).tanh() / a
    }
}

/// Amplitude of the `(s1, s2)` double integral for `2 pi delta H_Epi`, measure
/// `ds1 ds2` on the full plane; the phase `exp(-2 i s1 ln tan(u/2) + 2 i s2 ln tan(v/2))`
/// is applied by the caller. The term at `|s1| = |s2|` is the derivative.
pub fn direct_integrand(s1: f64, s2: f64, params: &CorrectionParams) -> f64 {
    let pre = 1.0 / (2.0 * PI * params.lambda) / (4.0 * PI * PI);
    // 4/(lambda lambda |s||s|) = 4 tanh tanh / (|s||s|); the cosh factors sit in the quotient.
    pre * 4.0 * tanh_over(s1) * tanh_over(s2) * PI * PI * pi_difference_quotient(s1, s2)
}

/// `x / sinh(pi x)`.
fn g_fn(x: f64) -> f64 {
    let z = PI * x.abs();
    if z < 1e-4 {
        (1.0 - z * z / 6.0) / PI
    } else {
        x.abs() / z.sinh()
    }
}

/// `dg/d(x^2)`.
fn g_fn_dx2(x: f64) -> f64 {
    let z = PI * x.abs();
    if z < 1e-2 {
        let zz = z * z;
        return PI * (-1.0 / 6.0 + 14.0 * zz / 360.0 - 93.0 * zz * zz / 15120.0);
    }
    let (sh, ch) = (z.sinh(), z.cosh());
    (sh - z * ch) / (sh * sh) / (2.0 * x.abs())
}

/// Rotated amplitude `(g(x) - g(y)) / (y^2 - x^2)` with `y = s_+`, `x = s_-`.
pub fn rotated_amplitude(y: f64, x: f64) -> f64 {
    let (yy, xx) = (y * y, x * x);
    if (yy - xx).abs() <= 1e-7 * (yy + xx) + 1e-14 {
        return -g_fn_dx2((0.5 * (xx + yy)).sqrt());
    }
    (g_fn(x) - g_fn(y)) / (yy - xx)
}

/// `int_S^inf cos(a y) / (y^2 - c^2) dy` for `0 <= c < S`.
fn cos_tail(a: f64, c: f64, s: f64) -> f64 {
    let a = a.abs();
    let c = c.abs();
    if c < 0.05 {
        // sum_k c^{2k} int_S^inf cos(a y) / y^{2k+2}
        let mut i_n = vec![0.0; 9];
        if a * s < 1e-300 {
            for (n, v) in i_n.iter_mut().enumerate().skip(2) {
                *v = 1.0 / ((n - 1) as f64 * s.powi(n as i32 - 1));
            }
        } else {
            let (sn, cs) = (a * s).sin_cos();
            let mut j = 0.5 * PI - sin_integral(a * s);
            i_n[1] = -cos_integral(a * s);
            for n in 2..9 {
                let m = (n - 1) as f64;
                let sp = s.powi(n as i32 - 1);
                i_n[n] = cs / (m * sp) - a / m * j;
                j = sn / (m * sp) + a / m * i_n[n - 1];
            }
            // the loop leaves j one order behind, which is all it needs
        }
        let c2 = c * c;
        return i_n[2] + c2 * (i_n[4] + c2 * (i_n[6] + c2 * i_n[8]));
    }
    if a * (s - c) < 1e-300 {
        return ((s + c) / (s - c)).ln() / (2.0 * c);
    }
    // int_{s0}^inf cos(a (t + shift)) / t dt
    let shifted = |s0: f64, shift: f64| {
        let (sn, cs) = (a * shift).sin_cos();
        -cs * cos_integral(a * s0) - sn * (0.5 * PI - sin_integral(a * s0))
    };
    (shifted(s - c, c) - shifted(s + c, -c)) / (2.0 * c)
}

/// Quadrature layout for [`DeltaPiSpectral`]: the integrand concentrates on the
/// bands `|s_-| <= core` and `|s_+| <= core`, integrated numerically out to
/// `cutoff`, with the `1/s^2` band tails beyond added in closed form.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeltaPiQuadrature {
    pub core: f64,
    pub cutoff: f64,
    pub per_panel: usize,
}

impl Default for DeltaPiQuadrature {
    fn default() -> Self {
        DeltaPiQuadrature { core: 8.0, cutoff: 40.0, per_panel: 16 }
    }
}

struct CrossLayout {
    y: Vec<(f64, f64)>,
    x: Vec<(f64, f64)>,
    /// `w_y w_x R(y, x)` on the strip `y <= cutoff`, `x <= core`.
    amp: DMatrix<f64>,
    first_outer: usize,
}

impl CrossLayout {
    fn new(q: &DeltaPiQuadrature, params: &CorrectionParams, per_panel: usize) -> Self {
        let breaks = |hi: f64| {
            let mut b: Vec<f64> = (0..).map(|k| k as f64).take_while(|&k| k < hi).collect();
            b.push(hi);
            b
        };
        let y = quad::composite_nodes(&breaks(q.cutoff), per_panel);
        let x = quad::composite_nodes(&breaks(q.core), per_panel);
        let rows: Vec<Vec<f64>> = y
            .par_iter()
            .map(|&(yy, wy)| {
                // evaluate the direct amplitude at s1 = (y + x)/2, s2 = (y - x)/2
                x.iter()
                    .map(|&(xx, wx)| {
                        let amp = direct_integrand(0.5 * (yy + xx), 0.5 * (yy - xx), params);
                        // ds1 ds2 = ds+ ds- / 2 on the full plane, quadrant symmetry gives 4
                        wy * wx * 2.0 * amp
                    })
                    .collect()
            })
            .collect();
        let amp = DMatrix::from_fn(y.len(), x.len(), |i, j| rows[i][j]);
        let first_outer = y.iter().position(|p| p.0 > q.core).unwrap_or(y.len());
        CrossLayout { y, x, amp, first_outer }
    }

    fn numeric(&self, a: f64, b: f64) -> f64 {
        let cy_a: Vec<f64> = self.y.iter().map(|p| (p.0 * a).cos()).collect();
        let cy_b: Vec<f64> = self.y.iter().map(|p| (p.0 * b).cos()).collect();
        let cx_a: Vec<f64> = self.x.iter().map(|p| (p.0 * a).cos()).collect();
        let cx_b: Vec<f64> = self.x.iter().map(|p| (p.0 * b).cos()).collect();
        let mut total = 0.0;
        for i in 0..self.y.len() {
            let row = self.amp.row(i);
            let inner: f64 = row.iter().zip(&cx_b).map(|(m, c)| m * c).sum();
            total += cy_a[i] * inner;
            if i >= self.first_outer {
                // s+ <= core, core < s- <= cutoff, by the y <-> x symmetry of the amplitude
                let inner: f64 = row.iter().zip(&cx_a).map(|(m, c)| m * c).sum();
                total += cy_b[i] * inner;
            }
        }
        total
    }
}

/// Spectral evaluation of `2 pi delta H_Epi(u, v)` from the `(s1, s2)` double
/// integral, reusable across many `(u, v)`.
pub struct DeltaPiSpectral {
    quad: DeltaPiQuadrature,
    lambda: f64,
    fine: CrossLayout,
    coarse: CrossLayout,
}

impl DeltaPiSpectral {
    pub fn new(params: &CorrectionParams, quad: DeltaPiQuadrature) -> Result<Self> {
        params.require_small_mass()?;
        if !(quad.cutoff > quad.core && quad.core >= 4.0 && quad.per_panel >= 8) {
            return Err(Error::Invalid("delta H spectral quadrature needs cutoff > core >= 4 and >= 8 nodes".into()));
        }
        Ok(DeltaPiSpectral {
            quad,
            lambda: params.lambda,
            fine: CrossLayout::new(&quad, params, quad.per_panel),
            coarse: CrossLayout::new(&quad, params, quad.per_panel - 4),
        })
    }

    fn tails(&self, a: f64, b: f64) -> f64 {
        let s = self.quad.cutoff;
        // 4 * (pi^2/(2 Lambda)) / (4 pi^2) over the quadrant tails
        let pre = 0.5 / self.lambda;
        let mut t = 0.0;
        for &(x, w) in &self.fine.x {
            let gx = g_fn(x);
            t += w * gx * ((x * b).cos() * cos_tail(a, x, s) + (x * a).cos() * cos_tail(b, x, s));
        }
        pre * t
    }

    pub fn evaluate(&self, u: f64, v: f64) -> Result<f64> {
        if !(u > 0.0 && u < PI && v > 0.0 && v < PI) {
            return Err(Error::Domain(format!("angles must lie in (0, pi), got ({u}, {v})")));
        }
        let (lu, lv) = ((0.5 * u).tan().ln(), (0.5 * v).tan().ln());
        // phase -s1 2 lu + s2 2 lv = -s+ (lu - lv) - s- (lu + lv)
        let (a, b) = (lu - lv, lu + lv);
        let tail = self.tails(a, b);
        let fine = self.fine.numeric(a, b) + tail;
        let coarse = self.coarse.numeric(a, b) + tail;
        let scale = fine.abs().max(1e-3 / self.lambda);
        if (fine - coarse).abs() > 1e-9 * scale {
            return Err(Error::NonConvergence(format!(
                "delta H_Epi double integral at ({u}, {v}): refinements differ by {:e}",
                (fine - coarse).abs()
            )));
        }
        Ok(fine)
    }
}

pub fn delta_eh_pi_spectral(u: f64, v: f64, params: &CorrectionParams, quad: DeltaPiQuadrature) -> Result<f64> {
    DeltaPiSpectral::new(params, quad)?.evaluate(u, v)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralPair {
    pub u: f64,
    pub v: f64,
    pub closed_form: f64,
    pub spectral_value: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "PascalCase")]
pub struct SpectralReport {
    #[serde(rename = "M")]
    pub m: f64,
    pub lambda: f64,
    #[serde(rename = "grid")]
    pub grid: Vec<f64>,
    #[serde(rename = "pairs")]
    pub pairs: Vec<SpectralPair>,
    #[serde(rename = "max_relative_deviation")]
    pub max_relative_deviation: f64,
}

/// Spectral vs closed-form `2 pi delta H_Epi` on every pair of `grid`.
pub fn delta_eh_pi_spectral_report(grid: &[f64], params: &CorrectionParams, quad: DeltaPiQuadrature) -> Result<SpectralReport> {
    let sp = DeltaPiSpectral::new(params, quad)?;
    let pairs: Vec<SpectralPair> = grid
        .iter()
        .flat_map(|&u| grid.iter().map(move |&v| (u, v)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(u, v)| {
            let spectral_value = sp.evaluate(u, v)?;
            let closed_form = delta_eh_pi_angular(u, v, params);
            Ok(SpectralPair { u, v, closed_form, spectral_value, deviation: (spectral_value - closed_form) / closed_form })
        })
        .collect::<Result<_>>()?;
    let max_relative_deviation = pairs.iter().map(|p| p.deviation.abs()).fold(0.0, f64::max);
    Ok(SpectralReport { m: params.mass.m, lambda: params.lambda, grid: grid.to_vec(), pairs, max_relative_deviation })
}

#[derive(Debug, Clone, Serialize)]
pub struct FourierPoint {
    pub l: f64,
    pub computed: f64,
    pub expected: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FourierIdentityReport {
    pub points: Vec<FourierPoint>,
    pub max_deviation: f64,
}

/// `int ds/(2 pi) s/sinh(pi s) e^{2 i s L} = 1/(4 pi cosh^2 L)` at `L = 0, 0.5, 1, 2`.
pub fn delta_eh_phi_spectral_identity() -> Result<FourierIdentityReport> {
    fourier_identity_at(&[0.0, 0.5, 1.0, 2.0])
}

pub fn fourier_identity_at(ls: &[f64]) -> Result<FourierIdentityReport> {
    let mut points = Vec::new();
    for &l in ls {
        let mut f = |s: f64| g_fn(s) * (2.0 * s * l).cos() / PI;
        let breaks: Vec<f64> = (0..=40).map(|k| k as f64).collect();
        let (computed, _) = quad::adaptive_breaks(&mut f, &breaks, 1e-15, 1e-13, 4000)?;
        let ch = l.cosh();
        let expected = 1.0 / (4.0 * PI * ch * ch);
        points.push(FourierPoint { l, computed, expected, deviation: (computed - expected).abs() });
    }
    let max_deviation = points.iter().map(|p| p.deviation).fold(0.0, f64::max);
    Ok(FourierIdentityReport { points, max_deviation })
}

/// Symmetric label grid on `[-s_max, s_max]` built from the half-line panels.
pub fn symmetric_s_grid(quad: &SQuadrature) -> Vec<(f64, f64)> {
    let half = quad.half_line();
    let mut g: Vec<(f64, f64)> = half.iter().rev().map(|&(s, w)| (-s, w)).collect();
    g.extend(half);
    g
}

/// First-order corrected Williamson data on a discrete label grid.
///
/// Sums over labels carry the measure `w/(2 pi)`. Labels whose unperturbed
/// energies coincide (the mirror pairs `+-s`) form degenerate clusters, and
/// the perturbation is diagonalised inside each cluster.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationModes {
    pub s: Vec<f64>,
    pub weights: Vec<f64>,
    pub e0: Vec<f64>,
    /// `E^(1)_s = |Psi_s|^2 / (pi Lambda)`.
    pub e1: Vec<f64>,
    pub overlap: Vec<f64>,
    pub clusters: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
    coupling: f64,
    #[serde(skip)]
    mixing: DMatrix<f64>,
}

/// Energy gap below which distinct labels are reported as near-degenerate.
pub const DEGENERACY_WINDOW: f64 = 1e-10;

pub fn perturbation_modes(s_grid: &[(f64, f64)], params: &CorrectionParams) -> Result<PerturbationModes> {
    params.require_small_mass()?;
    if s_grid.iter().any(|p| p.0 == 0.0 || !p.0.is_finite() || !(p.1 > 0.0)) {
        return Err(Error::Domain("label grid needs finite nonzero labels with positive weights".into()));
    }
    let n = s_grid.len();
    let coupling = 1.0 / (PI * params.lambda);
    let s: Vec<f64> = s_grid.iter().map(|p| p.0).collect();
    let weights: Vec<f64> = s_grid.iter().map(|p| p.1).collect();
    let e0: Vec<f64> = s.iter().map(|&x| unperturbed_energy(x)).collect();
    let overlap: Vec<f64> = s.iter().map(|&x| psi_overlap(x)).collect();
    let e1: Vec<f64> = overlap.iter().map(|p| coupling * p * p).collect();

    // E_s - E_q = 4 (t_s + t_q) sinh(pi(|s| - |q|)) / (cosh cosh), stable near coincidence
    let gap = |i: usize, j: usize| {
        let (a, b) = (PI * s[i].abs(), PI * s[j].abs());
        4.0 * (a.tanh() + b.tanh()) * (a - b).sinh() / (a.cosh() * b.cosh())
    };
    let mut cluster_of = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut warnings = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].abs().partial_cmp(&s[j].abs()).unwrap());
    for w in order.windows(2) {
        let (i, j) = (w[0], w[1]);
        if gap(j, i).abs() < DEGENERACY_WINDOW && s[i].abs() != s[j].abs() {
            warnings.push(format!("near-degenerate labels {} and {}: |E_s - E_q| = {:e}", s[i], s[j], gap(j, i).abs()));
        }
        if s[i].abs() == s[j].abs() {
            let c = if cluster_of[i] != usize::MAX {
                cluster_of[i]
            } else {
                clusters.push(vec![i]);
                cluster_of[i] = clusters.len() - 1;
                clusters.len() - 1
            };
            clusters[c].push(j);
            cluster_of[j] = c;
        }
    }
    for i in 0..n {
        if cluster_of[i] == usize::MAX {
            clusters.push(vec![i]);
            cluster_of[i] = clusters.len() - 1;
        }
    }

    // S_ij = (1/(pi Lambda)) (w_j/2pi) Psi_j Psi_i / (E_i - E_j) outside the cluster of i
    let mixing = DMatrix::from_fn(n, n, |i, j| {
        if cluster_of[i] == cluster_of[j] {
            0.0
        } else {
            coupling * weights[j] / (2.0 * PI) * overlap[i] * overlap[j] / gap(i, j)
        }
    });
    Ok(PerturbationModes { s, weights, e0, e1, overlap, clusters, warnings, coupling, mixing })
}

impl PerturbationModes {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    fn psi0(&self, v: f64) -> Vec<Complex64> {
        self.s
            .iter()
            .map(|&s| massless_modes::psi_bar(s, v) * (2.0 / massless_modes::lambda(s)).sqrt())
            .collect()
    }

    fn phi0(&self, v: f64) -> Vec<Complex64> {
        self.s
            .iter()
            .map(|&s| massless_modes::phi_bar(s, v) * (0.5 * massless_modes::lambda(s)).sqrt())
            .collect()
    }

    fn rotate(&self, base: &[Complex64]) -> Vec<Complex64> {
        (0..self.len())
            .map(|i| {
                self.mixing
                    .row(i)
                    .iter()
                    .zip(base)
                    .fold(Complex64::new(0.0, 0.0), |acc, (m, z)| acc + z * *m)
            })
            .collect()
    }

    /// `psi^(1)_s(v)` for every label.
    pub fn psi_first_order(&self, v: f64) -> Vec<Complex64> {
        self.rotate(&self.psi0(v))
    }

    /// `phi^(1)_s(v)` for every label.
    pub fn phi_first_order(&self, v: f64) -> Vec<Complex64> {
        self.rotate(&self.phi0(v))
    }

    /// `2 pi delta H_Epi(u, v)` assembled from the corrected eigendata over the label box.
    pub fn delta_eh_pi(&self, u: f64, v: f64) -> f64 {
        let rho: Vec<f64> = self.weights.iter().map(|w| w / (2.0 * PI)).collect();
        let (pu, pv) = (self.psi0(u), self.psi0(v));
        let (p1u, p1v) = (self.rotate(&pu), self.rotate(&pv));
        let mut total = Complex64::new(0.0, 0.0);
        for i in 0..self.len() {
            let f = PI * self.s[i].abs() * massless_modes::lambda(self.s[i]);
            total += 0.5 * rho[i] * f * (p1u[i].conj() * pv[i] + pu[i].conj() * p1v[i]);
        }
        // derivative term, with the perturbation diagonalised inside each degenerate cluster
        for c in &self.clusters {
            let fp = deriv_pi_factor(self.s[c[0]]);
            for &i in c {
                for &j in c {
                    let vij = self.coupling * rho[i] * rho[j] * self.overlap[i] * self.overlap[j];
                    total += 0.5 * fp * vij * pu[i].conj() * pv[j];
                }
            }
        }
        total.re
    }
}

/// Direct tensor-product sum of the direct amplitude over the same label grid.
pub fn direct_box_sum(u: f64, v: f64, s_grid: &[(f64, f64)], params: &CorrectionParams) -> f64 {
    let (lu, lv) = ((0.5 * u).tan().ln(), (0.5 * v).tan().ln());
    let mut total = 0.0;
    for &(s1, w1) in s_grid {
        let c1 = (2.0 * s1 * lu).cos();
        let sn1 = (2.0 * s1 * lu).sin();
        for &(s2, w2) in s_grid {
            let phase_re = c1 * (2.0 * s2 * lv).cos() + sn1 * (2.0 * s2 * lv).sin();
            total += w1 * w2 * direct_integrand(s1, s2, params) * phase_re;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> CorrectionParams {
        correction_params(0.01).unwrap()
    }

    #[test]
    fn lambda_at_small_mass() {
        let p = params();
        let oracle = (4.0 / 2.5e-5f64).ln() - 2.0 * EULER_GAMMA;
        assert!((p.lambda - oracle).abs() < 1e-12);
        assert!((p.lambda - 10.828).abs() < 1e-3);
        assert_eq!(p.lambda, -2.0 * p.l_param);
        assert!(p.warnings.is_empty());
        assert!(correction_params(0.0).is_err());
        assert!(correction_params(1.0).is_err());
        let big = correction_params(0.6).unwrap();
        assert_eq!(big.warnings.len(), 1);
        assert!(big.require_small_mass().is_err());
        assert!(correction_params(1e-6).unwrap().delta_kc() < params().delta_kc());
    }

    #[test]
    fn overlap_values() {
        let direct = (2.0 / (1.0 / PI.tanh())).sqrt() * PI / PI.cosh();
        assert!((psi_overlap(1.0) - direct).abs() < 1e-15);
        assert!((psi_overlap(1.0) - 0.38255).abs() < 1e-4);
        assert_eq!(psi_overlap(-1.3), psi_overlap(1.3));
        assert!(psi_overlap(3.0) / psi_overlap(0.5) < 1e-3);
        // continuum check: int_0^pi psi_s du
        let s = 0.7;
        let lam = massless_modes::lambda(s);
        let num = quad::adaptive(|u: f64| massless_modes::psi_bar(s, u).re, 1e-9, PI - 1e-9, 1e-13, 1e-12).unwrap().0;
        assert!(((2.0 / lam).sqrt() * num - psi_overlap(s)).abs() < 1e-7);
    }

    #[test]
    fn closed_pi_kernel() {
        let p = params();
        let c = 1.0 / (16.0 * p.lambda);
        assert_eq!(delta_eh_pi(0.0, 0.0, &p).unwrap(), c);
        assert_eq!(delta_eh_pi(1.0, 0.2, &p).unwrap(), 0.0);
        assert!((delta_eh_pi(0.3, -0.7, &p).unwrap() - 0.3 * c).abs() < 1e-16);
        assert!(delta_eh_pi(1.2, 0.0, &p).is_err());
        assert!((delta_eh_pi_angular(0.5 * PI, 0.5 * PI, &p) - PI / (8.0 * p.lambda)).abs() < 1e-16);
    }

    #[test]
    fn phi_terms_forms_agree() {
        let t = delta_eh_phi_terms(&params());
        assert!((t.local - 5.77e-3).abs() < 1e-5);
        assert_eq!(t.antidiagonal, t.local);
        for n in [1usize, 7, 8, 33] {
            let (a, b) = (t.lattice(n), t.symmetrized_lattice(n));
            assert!((a.clone() - b).abs().max() < 1e-12 * a.abs().max());
            // the antidiagonal reaches the end sites
            assert!(a[(0, n - 1)] > 0.0);
        }
    }

    #[test]
    fn derivative_factors() {
        let fd = |f: &dyn Fn(f64) -> f64, s: f64| {
            let h = 1e-5;
            (f(s + h) - f(s - h)) / (unperturbed_energy(s + h) - unperturbed_energy(s - h))
        };
        let pi_part = |s: f64| PI * s * massless_modes::lambda(s);
        let phi_part = |s: f64| massless_modes::epsilon(s) * 2.0 / massless_modes::lambda(s);
        for s in [0.05, 0.3, 1.0, 2.0] {
            assert!((deriv_pi_factor(s) - fd(&pi_part, s)).abs() < 1e-6 * deriv_pi_factor(s));
            assert!((deriv_phi_factor(s) - fd(&phi_part, s)).abs() < 1e-6 * deriv_phi_factor(s));
        }
        assert!((deriv_pi_factor(1e-6) - 1.0 / 12.0).abs() < 1e-10);
        assert!((deriv_phi_factor(1e-9) - 1.0).abs() < 1e-12);
        // the other closed expression for the pi factor
        let s = 0.8;
        let (e, f) = (unperturbed_energy(s), pi_part(s));
        assert!((deriv_pi_factor(s) + (f - 1.0 / (1.0 - 0.25 * e)) / (2.0 * e)).abs() < 1e-12);
    }

    #[test]
    fn quotient_limit_matches_finite_difference() {
        for a in [0.01, 0.4, 1.5, 3.0] {
            let h = 1e-4;
            let sym = 0.5 * (pi_difference_quotient(a + h, a) + pi_difference_quotient(a - h, a));
            let lim = pi_difference_quotient(a, a);
            assert!((sym - lim).abs() < 1e-6 * lim, "a = {a}");
        }
        assert!((pi_difference_quotient(0.0, 0.0) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn direct_matches_rotated_form() {
        let p = params();
        for &(s1, s2) in &[(0.3, 0.7), (1.2, -0.5), (-2.0, 2.5), (0.9, 0.9), (0.01, -0.02)] {
            let (yp, ym) = (s1 + s2, s1 - s2);
            let rotated = PI * PI / p.lambda * rotated_amplitude(yp, ym) / (4.0 * PI * PI);
            let direct = direct_integrand(s1, s2, &p);
            assert!((direct - rotated).abs() < 1e-9 * direct.abs(), "{s1} {s2}: {direct} vs {rotated}");
        }
    }

    #[test]
    fn cos_tail_branches() {
        let s = 40.0;
        for a in [0.0, 0.7, 3.4] {
            for c in [0.0, 0.03, 0.2, 5.0] {
                let v = cos_tail(a, c, s);
                let mut f = |y: f64| (a * y).cos() / (y * y - c * c);
                // integrate to 4000 and bound the rest by the alternating tail
                let breaks: Vec<f64> = (0..=400).map(|k| s + 10.0 * k as f64).collect();
                let (head, _) = quad::adaptive_breaks(&mut f, &breaks, 1e-14, 1e-12, 20_000).unwrap();
                let end = s + 4000.0;
                let rest = if a == 0.0 { 1.0 / end } else { -(a * end).sin() / (a * end * end) };
                assert!((v - head - rest).abs() < 1e-6 * v.abs().max(1e-3), "a={a} c={c}: {v} vs {}", head + rest);
            }
        }
        // the two branches meet
        for a in [1e-3, 1.3] {
            assert!((cos_tail(a, 0.0499999, s) - cos_tail(a, 0.05, s)).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_identity() {
        let r = delta_eh_phi_spectral_identity().unwrap();
        assert!(r.max_deviation < 1e-8, "{}", r.max_deviation);
        assert!((r.points[0].expected - 1.0 / (4.0 * PI)).abs() < 1e-16);
        let even = fourier_identity_at(&[-1.0, 1.0]).unwrap();
        assert!((even.points[0].computed - even.points[1].computed).abs() < 1e-15);
    }

    #[test]
    fn spectral_matches_closed_form() {
        let p = params();
        let sp = DeltaPiSpectral::new(&p, DeltaPiQuadrature::default()).unwrap();
        for &(u, v) in &[(0.5 * PI, 0.5 * PI), (PI / 3.0, 2.0 * PI / 3.0), (0.4, 1.1), (2.9, 0.7), (1.0, 1.0)] {
            let got = sp.evaluate(u, v).unwrap();
            let want = delta_eh_pi_angular(u, v, &p);
            assert!(((got - want) / want).abs() < 1e-5, "({u}, {v}): {got} vs {want}");
        }
        let a = sp.evaluate(0.4, 1.1).unwrap();
        assert!((a - sp.evaluate(1.1, 0.4).unwrap()).abs() < 1e-13);
        assert!((a - sp.evaluate(PI - 0.4, 1.1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn perturbation_assembly_matches_box_sum() {
        let p = params();
        let grid = symmetric_s_grid(&SQuadrature { s_max: 3.0, nodes: 160 });
        let modes = perturbation_modes(&grid, &p).unwrap();
        assert!(modes.warnings.is_empty());
        assert_eq!(modes.clusters.len(), grid.len() / 2);
        assert!((modes.e0[grid.len() / 2 + 1] - unperturbed_energy(modes.s[grid.len() / 2 + 1])).abs() < 1e-15);
        for &(u, v) in &[(0.6, 2.0), (1.3, 1.3), (PI / 3.0, 2.0 * PI / 3.0)] {
            let pert = modes.delta_eh_pi(u, v);
            let direct = direct_box_sum(u, v, &grid, &p);
            assert!((pert - direct).abs() < 1e-10 * direct.abs(), "({u},{v}): {pert} vs {direct}");
        }
    }

    #[test]
    fn energy_limits() {
        assert_eq!(unperturbed_energy(0.0), 0.0);
        assert!((unperturbed_energy(1.0) - 4.0 * PI.tanh().powi(2)).abs() < 1e-15);
        let s = 1e-7;
        assert!((massless_modes::epsilon(s) * massless_modes::lambda(s) / 2.0 - 1.0).abs() < 1e-10);
        assert!(massless_modes::epsilon(s) * 2.0 / massless_modes::lambda(s) < 1e-10);
    }

    proptest! {
        #[test]
        fn pi_kernel_is_symmetric_and_bounded(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let p = params();
            let a = delta_eh_pi(x, y, &p).unwrap();
            prop_assert_eq!(a, delta_eh_pi(y, x, &p).unwrap());
            prop_assert_eq!(a, delta_eh_pi(-x, y, &p).unwrap());
            prop_assert!(a >= 0.0 && a <= 1.0 / (16.0 * p.lambda));
        }

        #[test]
        fn rotated_amplitude_is_symmetric(y in -6.0f64..6.0, x in -6.0f64..6.0) {
            prop_assert!((rotated_amplitude(y, x) - rotated_amplitude(x, y)).abs() < 1e-9);
        }
    }
}
