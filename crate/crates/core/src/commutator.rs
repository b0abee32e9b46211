//! Matrix elements of the commutator between the reduced density matrix and
//! the modulated Hamiltonian `O_f = (1/2) int dv f(v) [pi^2 + (d phi)^2 + M^2 sin^2 v phi^2]`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{default_truncation, MassParam};
use crate::mathieu::{self, Family, MathieuSolution};
use crate::quad;
use crate::precise;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    ParabolicF1,
    TriangularF2,
    Custom,
}

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type MpCurve = fn(&Float) -> Float;

/// Modulation `f(v)` on `(0, pi)` with its edge exponents: `f''/f -> beta` and
/// `f(v)/cos v = c s (1 + delta s^2/2 + ...)` in `s = sin v`.
#[derive(Clone)]
pub struct ModulationProfile {
    pub name: ProfileName,
    pub beta: f64,
    pub delta: f64,
    f: Curve,
    f2: Option<Curve>,
    /// Multiple-precision form on `(0, pi/2]`.
    mp: Option<MpCurve>,
}

impl fmt::Debug for ModulationProfile {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.debug_struct("ModulationProfile")
            .field("name", &self.name)
            .field("beta", &self.beta)
            .field("delta", &self.delta)
            .finish()
    }
}

/// `(beta, delta)` from `r = F''(1)/F'(1)` of the linear-coordinate profile `F(x) = sin v f(v)`.
pub fn edge_exponents(r: f64) -> (f64, f64) {
    (0.5 * (1.0 - 3.0 * r), 0.5 * (3.0 - r))
}

impl ModulationProfile {
    /// `f1(v) = sin v`, i.e. `1 - x^2`.
    pub fn parabolic() -> Self {
        ModulationProfile {
            name: ProfileName::ParabolicF1,
            beta: -1.0,
            delta: 1.0,
            f: Arc::new(|v: f64| v.sin()),
            f2: Some(Arc::new(|v: f64| -v.sin())),
            mp: Some(|v: &Float| Float::with_val(v.prec(), v.sin_ref())),
        }
    }

    /// `f2(v) = 2(1 - |cos v|)/sin v = 2 tan(w/2)`, `w = min(v, pi - v)`; `2(1 - |x|)` in `x`.
    pub fn triangular() -> Self {
        let w = |v: f64| v.min(PI - v);
        ModulationProfile {
            name: ProfileName::TriangularF2,
            beta: 0.5,
            delta: 1.5,
            f: Arc::new(move |v: f64| 2.0 * (0.5 * w(v)).tan()),
            f2: Some(Arc::new(move |v: f64| {
                let c = (0.5 * w(v)).cos();
                (0.5 * w(v)).tan() / (c * c)
            })),
            mp: Some(|v: &Float| Float::with_val(v.prec(), v / 2u32).tan() * 2u32),
        }
    }

    /// Arbitrary `f(v)`; the edge exponents are extracted numerically near `v = 0`.
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let f: Curve = Arc::new(f);
        let (beta, delta) = measure_edge_exponents(&*f);
        ModulationProfile { name: ProfileName::Custom, beta, delta, f, f2: None, mp: None }
    }

    /// Attach a closed-form `f''`, used by the reduced form instead of differences.
    pub fn with_second_derivative(mut self, f2: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.f2 = Some(Arc::new(f2));
        self
    }

    /// Profile given in the linear coordinate, `f(v) = F(cos v)/sin v`.
    pub fn from_linear(big_f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::custom(move |v: f64| big_f(v.cos()) / v.sin())
    }

    pub fn eval(&self, v: f64) -> f64 {
        (self.f)(v)
    }

    /// `f''(v)`, closed form where known, otherwise a central difference.
    pub fn second_derivative(&self, v: f64) -> f64 {
        match &self.f2 {
            Some(g) => g(v),
            None => {
                let h = 1e-4 * v.min(PI - v).clamp(1e-3, 1.0);
                ((self.f)(v + h) - 2.0 * (self.f)(v) + (self.f)(v - h)) / (h * h)
            }
        }
    }

    /// `max |f(v) - f(pi - v)|` on a sample of `(0, pi/2)`, scaled by `max |f|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        let mut scale = 0.0f64;
        for k in 1..200 {
            let v = 0.5 * PI * k as f64 / 200.0;
            defect = defect.max((self.eval(v) - self.eval(PI - v)).abs());
            scale = scale.max(self.eval(v).abs());
        }
        defect / scale.max(f64::MIN_POSITIVE)
    }
}

/// Fit `beta = lim f''/f` and `delta` from samples near `v = 0`, removing the
/// next order by a quadratic fit in `sin^2 v`.
fn measure_edge_exponents(f: &(dyn Fn(f64) -> f64 + Send + Sync)) -> (f64, f64) {
    let b = |v: f64| {
        let h = 1e-3;
        (f(v + h) - 2.0 * f(v) + f(v - h)) / (h * h) / f(v)
    };
    let v0 = 0.02;
    let beta = (4.0 * b(v0) - b(2.0 * v0)) / 3.0;
    let pts: Vec<(f64, f64)> = [1.0, 2.0, 3.0]
        .iter()
        .map(|k| {
            let v: f64 = 0.02 * k;
            let s = v.sin();
            (s * s, f(v) / (v.cos() * s))
        })
        .collect();
    // R = c0 + c1 X + c2 X^2 through the three points
    let (x1, y1) = pts[0];
    let (x2, y2) = pts[1];
    let (x3, y3) = pts[2];
    let d12 = (y2 - y1) / (x2 - x1);
    let d23 = (y3 - y2) / (x3 - x2);
    let c2 = (d23 - d12) / (x3 - x1);
    let c1 = d12 - c2 * (x1 + x2);
    let c0 = y1 - c1 * x1 - c2 * x1 * x1;
    (beta, 2.0 * c1 / c0)
}

fn check_pair(m1: usize, m2: usize) -> Result<(Family, Family)> {
    if m2 == 0 {
        return Err(Error::Invalid("se_m starts at m = 1".into()));
    }
    if (m1 + m2) % 2 == 0 {
        return Err(Error::Parity(m1, m2));
    }
    Ok(if m1 % 2 == 0 { (Family::CeEven, Family::SeOdd) } else { (Family::CeOdd, Family::SeEven) })
}

struct ModePair {
    ce: MathieuSolution,
    se: MathieuSolution,
    ell: f64,
}

fn mode_pair(m1: usize, m2: usize, q: f64) -> Result<ModePair> {
    let (fc, fs) = check_pair(m1, m2)?;
    let (_, n1) = Family::locate(m1, true).unwrap();
    let (_, n2) = Family::locate(m2, false).unwrap();
    let t = default_truncation(q).max(n1.max(n2) + 40);
    let ce = mathieu::solve_spectrum(q, fc, n1, t)?.swap_remove(n1);
    let se = mathieu::solve_spectrum(q, fs, n2, t)?.swap_remove(n2);
    let ell = mathieu::log_derivative(&ce)? * mathieu::log_derivative(&se)?;
    Ok(ModePair { ce, se, ell })
}

fn breaks_for(q: f64) -> Vec<f64> {
    let w = if q > 1.0 { 0.5 * q.powf(-0.25) } else { 0.25 };
    let mut left: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0].iter().map(|k| k * w).filter(|&x| x < 0.45 * PI).collect();
    left.push(0.5 * PI);
    let mut all = left.clone();
    all.extend(left.iter().rev().skip(1).map(|x| PI - x));
    all
}

fn integrate(mut g: impl FnMut(f64) -> f64, q: f64, scale: f64) -> Result<f64> {
    let (v, _) = quad::adaptive_breaks(&mut g, &breaks_for(q), 1e-14 * scale, 1e-12, 4000)?;
    Ok(v)
}

/// Factor multiplying `rho_{phi1 phi2}` in `<phi1|[rho, O_f]|phi2>` for
/// `phi_+ = ce_{m1}`, `phi_- = se_{m2}`:
/// `(1/2) int dv f {[l1 l2 - M^2 sin^2 v] ce se - ce' se'}`.
pub fn commutator_element(m1: usize, m2: usize, profile: &ModulationProfile, mass: MassParam) -> Result<f64> {
    check_pair(m1, m2)?;
    if mass.m == 0.0 {
        return massless_element(m1, m2, profile);
    }
    let p = mode_pair(m1, m2, mass.q)?;
    let m_sq = mass.m * mass.m;
    let g = |v: f64| {
        let c = mathieu::periodic_derivatives(&p.ce, v);
        let s = mathieu::periodic_derivatives(&p.se, v);
        let sv = v.sin();
        profile.eval(v) * ((p.ell - m_sq * sv * sv) * c[0] * s[0] - c[1] * s[1])
    };
    Ok(0.5 * integrate(g, mass.q, 1.0 + p.ell.abs() + m_sq)?)
}

/// Massless path with `ce_0 = 1/sqrt 2`, `ce_m = cos mv`, `se_m = sin mv` and log-derivatives `-m`.
fn massless_element(m1: usize, m2: usize, profile: &ModulationProfile) -> Result<f64> {
    let (k1, k2) = (m1 as f64, m2 as f64);
    let n0 = if m1 == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
    let g = |v: f64| {
        let (s1, c1) = (k1 * v).sin_cos();
        let (s2, c2) = (k2 * v).sin_cos();
        profile.eval(v) * n0 * (k1 * k2 * c1 * s2 - (-k1 * s1) * (k2 * c2))
    };
    Ok(0.5 * integrate(g, 0.0, 1.0 + k1 * k2)?)
}

/// The same element after integrating the derivative term by parts:
/// `(1/2) int dv ce se {f l1 l2 - (1/2)[f'' + f (lambda1 + lambda2 + 4q)]}`. Needs smooth `f`.
pub fn commutator_element_reduced(m1: usize, m2: usize, profile: &ModulationProfile, mass: MassParam) -> Result<f64> {
    if !(mass.q > 0.0) {
        return Err(Error::Domain("reduced form needs q > 0".into()));
    }
    let p = mode_pair(m1, m2, mass.q)?;
    let eig = p.ce.char_value + p.se.char_value + 4.0 * mass.q;
    let g = |v: f64| {
        let c = mathieu::eval_periodic(&p.ce, v);
        let s = mathieu::eval_periodic(&p.se, v);
        let f = profile.eval(v);
        c * s * (f * p.ell - 0.5 * (profile.second_derivative(v) + f * eig))
    };
    Ok(0.5 * integrate(g, mass.q, 1.0 + p.ell.abs() + eig.abs())?)
}

/// Working precisions of [`commutator_element_precise`]; the result is checked across both.
pub const PRECISE_BITS: [u32; 2] = [256, 384];

/// [`commutator_element`] for `M > 0` with modes, log-derivatives and quadrature carried at
/// multiple precision, for elements that cancel below double precision. Needs a named profile.
pub fn commutator_element_precise(m1: usize, m2: usize, profile: &ModulationProfile, mass: MassParam) -> Result<f64> {
    let (fc, fs) = check_pair(m1, m2)?;
    let fm = profile
        .mp
        .ok_or_else(|| Error::Invalid("profile has no multiple-precision form".into()))?;
    if !(mass.q > 0.0) {
        return Err(Error::Domain("multiple-precision path needs q > 0".into()));
    }
    let (_, n1) = Family::locate(m1, true).unwrap();
    let (_, n2) = Family::locate(m2, false).unwrap();
    let mut values = Vec::with_capacity(PRECISE_BITS.len());
    for prec in PRECISE_BITS {
        let ce = precise::mp_mode(fc, n1, mass.q, prec)?;
        let se = precise::mp_mode(fs, n2, mass.q, prec)?;
        let ell = ce.log_derivative()? * se.log_derivative()?;
        let m_sq = Float::with_val(prec, mass.q * 4.0);
        // the integrand is symmetric under v -> pi - v for opposite parities
        let g = |v: &Float| {
            let [c0, c1] = ce.eval(v);
            let [s0, s1] = se.eval(v);
            let sv = Float::with_val(prec, v.sin_ref());
            let pot = Float::with_val(prec, &ell - Float::with_val(prec, &m_sq * &sv) * &sv);
            let body = Float::with_val(prec, &pot * Float::with_val(prec, &c0 * &s0)) - Float::with_val(prec, &c1 * &s1);
            fm(v) * body
        };
        let half_pi = Float::with_val(prec, Constant::Pi) / 2u32;
        let w = 0.5 * mass.q.powf(-0.25).min(1.0);
        let mut edges: Vec<Float> = [0.0, w, 2.0 * w, 4.0 * w]
            .iter()
            .filter(|&&x| x < 1.4)
            .map(|&x| Float::with_val(prec, x))
            .collect();
        edges.push(half_pi);
        let tol = Float::with_val(prec, Float::with_val(prec, 2u32).pow(-(prec as i32) + 64));
        let mut total = Float::with_val(prec, 0u32);
        for pair in edges.windows(2) {
            total += precise::tanh_sinh(g, &pair[0], &pair[1], &tol)?;
        }
        values.push(total.to_f64());
    }
    let (lo, hi) = (values[0], values[1]);
    if (lo - hi).abs() > 1e-10 * hi.abs() {
        return Err(Error::NonConvergence(format!(
            "({m1}, {m2}) at q = {}: {lo:e} at {} bits vs {hi:e} at {} bits",
            mass.q, PRECISE_BITS[0], PRECISE_BITS[1]
        )));
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LeadingOrder {
    pub n1: usize,
    pub n2: usize,
    pub bracket: f64,
    pub selector: f64,
    pub product: f64,
}

/// `O(q^{1/2})` bracket `G(n1+1)/G(n1+1/2) G(n2+3/2)/G(n2+1) - (n1+n2+1)/2` and the overlap
/// selector `sqrt(2n1+1) d_{n1,n2} - sqrt(2n2+2) d_{n1,n2+1}`. Independent of `q`.
pub fn leading_order_bracket(n1: usize, n2: usize) -> LeadingOrder {
    let (a, b) = (n1 as f64, n2 as f64);
    let bracket = half_step_ratio(n1) * (b + 0.5) / half_step_ratio(n2) - 0.5 * (a + b + 1.0);
    let mut selector = 0.0;
    if n1 == n2 {
        selector += (2.0 * a + 1.0).sqrt();
    }
    if n1 == n2 + 1 {
        selector -= (2.0 * b + 2.0).sqrt();
    }
    LeadingOrder { n1, n2, bracket, selector, product: bracket * selector }
}

/// `G(n+1)/G(n+1/2)` by the upward product from `1/sqrt(pi)`.
fn half_step_ratio(n: usize) -> f64 {
    (1..=n).fold(1.0 / PI.sqrt(), |r, k| r * k as f64 / (k as f64 - 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SubleadingCase {
    A,
    B,
    C,
    D,
    E,
    F,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CaseEntry {
    pub n1: usize,
    pub n2: usize,
    pub case: Option<SubleadingCase>,
    /// `beta - 1/2` for (a), (b); `delta/2 - 3/4` for (c), (e); zero otherwise.
    pub factor: f64,
}

pub fn subleading_case_table(n1: usize, n2: usize, profile: &ModulationProfile) -> CaseEntry {
    use SubleadingCase::*;
    let case = if n1 == n2 {
        Some(A)
    } else if n1 == n2 + 1 {
        Some(B)
    } else if n1 == n2 + 2 {
        Some(C)
    } else if n1 == n2 + 3 {
        Some(D)
    } else if n2 == n1 + 1 {
        Some(E)
    } else if n2 == n1 + 2 {
        Some(F)
    } else {
        None
    };
    let factor = match case {
        Some(A) | Some(B) => profile.beta - 0.5,
        Some(C) | Some(E) => 0.5 * profile.delta - 0.75,
        _ => 0.0,
    };
    CaseEntry { n1, n2, case, factor }
}

pub fn case_table(profile: &ModulationProfile, n_max: usize) -> Vec<CaseEntry> {
    (0..=n_max)
        .flat_map(|n1| (0..=n_max).map(move |n2| (n1, n2)))
        .map(|(n1, n2)| subleading_case_table(n1, n2, profile))
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RatioPoint {
    pub q: f64,
    pub parabolic: f64,
    pub triangular: f64,
    pub ratio: f64,
}

/// `|element(f2)| / |element(f1)|` at `(m1, m2) = (0, 1)` for each `q`, at multiple precision.
pub fn profile_ratio_trend(qs: &[f64]) -> Result<Vec<RatioPoint>> {
    let (f1, f2) = (ModulationProfile::parabolic(), ModulationProfile::triangular());
    qs.iter()
        .map(|&q| {
            if !(q > 0.0) {
                return Err(Error::Domain(format!("q must be positive, got {q}")));
            }
            let mass = MassParam::new(2.0 * q.sqrt())?;
            let parabolic = commutator_element_precise(0, 1, &f1, mass)?;
            let triangular = commutator_element_precise(0, 1, &f2, mass)?;
            Ok(RatioPoint { q, parabolic, triangular, ratio: triangular.abs() / parabolic.abs() })
        })
        .collect()
}
