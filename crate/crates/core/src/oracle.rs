//! Lattice Gaussian-state oracle: ground-state covariances of a periodic
//! harmonic chain, interval reduction, Williamson decomposition and
//! entanglement-Hamiltonian matrices, plus profile comparisons against the
//! continuum predictions.
//!
//! Symplectic eigenvalues of interval reductions approach 1/2 exponentially
//! (`nu - 1/2 ~ e^{-epsilon}` with `epsilon` in the hundreds for a few dozen
//! sites), so the decomposition runs in MPFR arithmetic.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::MassParam;
use crate::precise::MpMatrix;

/// Regulated massless chain: `M_phys N_total a`.
pub const MASSLESS_REGULATOR: f64 = 1e-4;
/// Sites dropped at each interval edge in profile comparisons.
pub const EDGE_SITES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainParams {
    pub n_total: usize,
    pub spacing: f64,
    pub m_phys: f64,
    pub regulated: bool,
}

impl ChainParams {
    fn frequencies_mp(&self, prec: u32) -> Vec<Float> {
        let n = self.n_total;
        let m2 = Float::with_val(prec, self.m_phys) * self.m_phys;
        let a = Float::with_val(prec, self.spacing);
        let two_pi = Float::with_val(prec, Constant::Pi) * 2u32;
        (0..n)
            .map(|j| {
                let s = (Float::with_val(prec, &two_pi * j as u64) / (2 * n) as u64).sin() * 2u32 / &a;
                (Float::with_val(prec, s.square_ref()) + &m2).sqrt()
            })
            .collect()
    }

    /// `Q(d)` and `P(d)` for separations `d = 0..len` at `prec` bits.
    fn toeplitz_mp(&self, len: usize, prec: u32) -> (Vec<Float>, Vec<Float>) {
        let n = self.n_total;
        let omega = self.frequencies_mp(prec);
        let two_pi = Float::with_val(prec, Constant::Pi) * 2u32;
        let cos: Vec<Float> = (0..n).map(|m| (Float::with_val(prec, &two_pi * m as u64) / n as u64).cos()).collect();
        let mut q = Vec::with_capacity(len);
        let mut p = Vec::with_capacity(len);
        for d in 0..len {
            let mut sq = Float::with_val(prec, 0u32);
            let mut sp = Float::with_val(prec, 0u32);
            for (j, w) in omega.iter().enumerate() {
                let c = &cos[(j * d) % n];
                sq += Float::with_val(prec, c / w);
                sp += Float::with_val(prec, c * w);
            }
            q.push(sq / (2 * n) as u64);
            p.push(sp / (2 * n) as u64);
        }
        (q, p)
    }
}

/// Field-field and momentum-momentum covariances of a Gaussian state.
#[derive(Debug, Clone)]
pub struct CovariancePair {
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub spacing: f64,
    /// `M = M_phys l`, `l` half the length of the sites held.
    pub interval_mass: MassParam,
    /// Chain sites held (consecutive), empty for pairs given directly.
    pub sites: Vec<usize>,
    pub chain: Option<ChainParams>,
}

impl CovariancePair {
    /// Pair from explicit matrices; both must be symmetric to 1e-12 of their scale.
    pub fn from_matrices(q: DMatrix<f64>, p: DMatrix<f64>, spacing: f64, interval_mass: MassParam) -> Result<Self> {
        let n = q.nrows();
        if n == 0 || q.ncols() != n || p.nrows() != n || p.ncols() != n {
            return Err(Error::Invalid("Q and P must be square of equal, non-zero size".into()));
        }
        for (name, m) in [("Q", &q), ("P", &p)] {
            let scale = m.abs().max();
            if (m - m.transpose()).abs().max() > 1e-12 * scale {
                return Err(Error::Invalid(format!("{name} is not symmetric")));
            }
        }
        Ok(CovariancePair { q, p, spacing, interval_mass, sites: Vec::new(), chain: None })
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    /// Eigenvalues `nu^2` of `Q P`, ascending, from the symmetric product `sqrt(Q) P sqrt(Q)`.
    pub fn symplectic_spectrum(&self) -> Vec<f64> {
        let eq = nalgebra::SymmetricEigen::new(self.q.clone());
        let root = &eq.eigenvectors
            * DMatrix::from_diagonal(&eq.eigenvalues.map(|e| e.max(0.0).sqrt()))
            * eq.eigenvectors.transpose();
        let m = &root * &self.p * &root;
        let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(0.5 * (&m + m.transpose())).eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// The pair at `prec` bits: chain pairs are regenerated from the mode sums,
    /// others converted exactly from their double entries.
    fn mp_matrices(&self, prec: u32) -> (MpMatrix, MpMatrix) {
        match &self.chain {
            Some(c) if !self.sites.is_empty() => {
                let n = self.n();
                let (q, p) = c.toeplitz_mp(c.n_total, prec);
                let sep = |i: usize, j: usize| {
                    let d = self.sites[i].abs_diff(self.sites[j]);
                    d.min(c.n_total - d)
                };
                (
                    MpMatrix::from_fn(n, prec, |i, j| q[sep(i, j)].clone()),
                    MpMatrix::from_fn(n, prec, |i, j| p[sep(i, j)].clone()),
                )
            }
            _ => (MpMatrix::from_f64(&self.q, prec), MpMatrix::from_f64(&self.p, prec)),
        }
    }
}

/// Ground state of `H = sum a [pi^2/2 + (d phi)^2/2 + M^2 phi^2/2]` on a ring of `n_total` sites:
/// `Q_ij = (1/N) sum_k cos(k d)/(2 w_k)`, `P_ij = (1/N) sum_k w_k cos(k d)/2`,
/// `w_k^2 = M^2 + (4/a^2) sin^2(k a/2)`.
pub fn build_chain(n_total: usize, spacing: f64, m_phys: f64, boundary: Boundary) -> Result<CovariancePair> {
    let Boundary::Periodic = boundary;
    if n_total == 0 {
        return Err(Error::Invalid("chain needs at least one site".into()));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::Domain(format!("spacing must be positive, got {spacing}")));
    }
    if !(m_phys >= 0.0) || !m_phys.is_finite() {
        return Err(Error::Domain(format!("mass must be finite and >= 0, got {m_phys}")));
    }
    if m_phys == 0.0 {
        return Err(Error::Domain("the k = 0 mode diverges at zero mass; use build_regulated_chain".into()));
    }
    Ok(chain_pair(ChainParams { n_total, spacing, m_phys, regulated: false }))
}

/// Massless chain with the regulator `M_phys N_total a = MASSLESS_REGULATOR`.
pub fn build_regulated_chain(n_total: usize, spacing: f64) -> Result<CovariancePair> {
    let m = MASSLESS_REGULATOR / (n_total.max(1) as f64 * spacing);
    let mut pair = build_chain(n_total, spacing, m, Boundary::Periodic)?;
    pair.chain.as_mut().unwrap().regulated = true;
    Ok(pair)
}

fn chain_pair(c: ChainParams) -> CovariancePair {
    let n = c.n_total;
    let omega: Vec<f64> = (0..n)
        .map(|j| (c.m_phys * c.m_phys + (2.0 / c.spacing * (PI * j as f64 / n as f64).sin()).powi(2)).sqrt())
        .collect();
    let cos: Vec<f64> = (0..n).map(|m| (2.0 * PI * m as f64 / n as f64).cos()).collect();
    let (mut qd, mut pd) = (vec![0.0; n], vec![0.0; n]);
    for d in 0..n {
        for (j, w) in omega.iter().enumerate() {
            let cv = cos[(j * d) % n];
            qd[d] += cv / w;
            pd[d] += cv * w;
        }
        qd[d] /= 2.0 * n as f64;
        pd[d] /= 2.0 * n as f64;
    }
    let q = DMatrix::from_fn(n, n, |i, j| qd[i.abs_diff(j)]);
    let p = DMatrix::from_fn(n, n, |i, j| pd[i.abs_diff(j)]);
    CovariancePair {
        q,
        p,
        spacing: c.spacing,
        interval_mass: MassParam::new(c.m_phys * 0.5 * n as f64 * c.spacing).expect("validated mass"),
        sites: (0..n).collect(),
        chain: Some(c),
    }
}

/// Restriction to consecutive sites.
pub fn reduce(pair: &CovariancePair, interval: &[usize]) -> Result<CovariancePair> {
    let n = pair.n();
    if interval.is_empty() || interval.iter().any(|&i| i >= n) || interval.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Invalid("interval must be a non-empty run of consecutive sites".into()));
    }
    let sub = |m: &DMatrix<f64>| DMatrix::from_fn(interval.len(), interval.len(), |i, j| m[(interval[i], interval[j])]);
    let len = interval.len() as f64;
    let interval_mass = match &pair.chain {
        Some(c) => MassParam::new(c.m_phys * 0.5 * len * c.spacing)?,
        None => MassParam::new(pair.interval_mass.m * len / n as f64)?,
    };
    Ok(CovariancePair {
        q: sub(&pair.q),
        p: sub(&pair.p),
        spacing: pair.spacing,
        interval_mass,
        sites: if pair.sites.is_empty() { Vec::new() } else { interval.iter().map(|&i| pair.sites[i]).collect() },
        chain: pair.chain,
    })
}

/// One effective oscillator of a Gaussian state.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteMode {
    pub index: usize,
    /// Symplectic eigenvalue `nu = lambda/2`.
    pub nu: f64,
    /// `nu - 1/2`, resolved below double precision.
    pub nu_minus_half: f64,
    pub lambda: f64,
    /// `ln((nu + 1/2)/(nu - 1/2))`; infinite for modes pure at working precision.
    pub epsilon: f64,
    /// `Q = sum nu^2 psi psi^T`, `P psi = phi`.
    pub psi: Vec<f64>,
    /// `P = sum phi phi^T`, `psi . phi' = delta`.
    pub phi: Vec<f64>,
}

/// Bits used for an `n`-site reduction unless overridden.
pub fn default_precision(n: usize) -> u32 {
    192 + 6 * n as u32
}

#[derive(Debug, Clone)]
pub struct Williamson {
    pub modes: Vec<DiscreteMode>,
    pub precision: u32,
    pub warnings: Vec<String>,
    nu_sq: Vec<Float>,
    psi: MpMatrix,
    phi: MpMatrix,
    q: MpMatrix,
    p: MpMatrix,
    epsilon: Vec<Option<Float>>,
}

/// Relative defects of the spectral reconstructions of `Q`, `P`, `Q^{-1}`, `P^{-1}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReconstructionDefects {
    pub q: f64,
    pub p: f64,
    pub q_inverse: f64,
    pub p_inverse: f64,
}

impl ReconstructionDefects {
    pub fn max(&self) -> f64 {
        self.q.max(self.p).max(self.q_inverse).max(self.p_inverse)
    }
}

fn near_pure_floor(prec: u32) -> Float {
    Float::with_val(prec, Float::with_val(prec, 2u32).pow(-(prec as i32) + 80))
}

fn epsilon_of(nu: &Float, floor: &Float) -> (Float, Option<Float>) {
    let prec = nu.prec();
    let gap = Float::with_val(prec, nu - 0.5f64);
    if gap <= *floor {
        return (gap, None);
    }
    let eps = (Float::with_val(prec, nu + 0.5f64) / &gap).ln();
    (gap, Some(eps))
}

pub fn williamson(pair: &CovariancePair) -> Result<Williamson> {
    williamson_with_precision(pair, default_precision(pair.n()))
}

/// Decomposition through the eigenproblem of `sqrt(Q) P sqrt(Q)`:
/// with `sqrt(Q) P sqrt(Q) = V nu^2 V^T`, `psi = sqrt(Q) v / nu` and `phi = sqrt(Q)^{-1} v nu`.
pub fn williamson_with_precision(pair: &CovariancePair, prec: u32) -> Result<Williamson> {
    let n = pair.n();
    let (q, p) = pair.mp_matrices(prec);
    let (eq, uq) = q.symmetric_eigen()?;
    if eq.iter().any(|e| !e.is_sign_positive() || e.is_zero()) {
        return Err(Error::Invalid("Q is not positive definite".into()));
    }
    let root: Vec<Float> = eq.iter().map(|e| Float::with_val(prec, e.sqrt_ref())).collect();
    let inv_root: Vec<Float> = root.iter().map(|r| Float::with_val(prec, r.recip_ref())).collect();
    let x = uq.mul_diag_transpose(&root, &uq);
    let xi = uq.mul_diag_transpose(&inv_root, &uq);
    let m = x.mul(&p).mul(&x);
    let m = MpMatrix::from_fn(n, prec, |i, j| Float::with_val(prec, m.get(i, j) + m.get(j, i)) / 2u32);
    let (nu_sq, v) = m.symmetric_eigen()?;
    let quarter = Float::with_val(prec, 0.25f64);
    let slack = Float::with_val(prec, 1e-10f64);
    if let Some(bad) = nu_sq.iter().find(|e| Float::with_val(prec, *e - &quarter) < -Float::with_val(prec, &slack)) {
        return Err(Error::Invalid(format!("uncertainty bound violated: nu^2 = {}", bad.to_f64())));
    }
    let nu: Vec<Float> = nu_sq.iter().map(|e| Float::with_val(prec, e.sqrt_ref())).collect();
    let psi = MpMatrix::from_fn(n, prec, |i, j| {
        let mut s = Float::with_val(prec, 0u32);
        for k in 0..n {
            s += Float::with_val(prec, x.get(i, k) * v.get(k, j));
        }
        s / &nu[j]
    });
    let phi = MpMatrix::from_fn(n, prec, |i, j| {
        let mut s = Float::with_val(prec, 0u32);
        for k in 0..n {
            s += Float::with_val(prec, xi.get(i, k) * v.get(k, j));
        }
        s * &nu[j]
    });
    let floor = near_pure_floor(prec);
    let mut warnings = Vec::new();
    let mut epsilon = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    for j in 0..n {
        let (gap, eps) = epsilon_of(&nu[j], &floor);
        if eps.is_none() {
            warnings.push(format!("mode {j} is pure at {prec} bits: nu - 1/2 = {:e}", gap.to_f64()));
        }
        let nuf = nu[j].to_f64();
        modes.push(DiscreteMode {
            index: j,
            nu: nuf,
            nu_minus_half: gap.to_f64(),
            lambda: 2.0 * nuf,
            epsilon: eps.as_ref().map_or(f64::INFINITY, |e| e.to_f64()),
            psi: (0..n).map(|i| psi.get(i, j).to_f64()).collect(),
            phi: (0..n).map(|i| phi.get(i, j).to_f64()).collect(),
        });
        epsilon.push(eps);
    }
    Ok(Williamson { modes, precision: prec, warnings, nu_sq, psi, phi, q, p, epsilon })
}

fn relative(a: &MpMatrix, b: &MpMatrix) -> f64 {
    a.max_abs_diff(b) / b.max_abs().max(f64::MIN_POSITIVE)
}

impl Williamson {
    /// `Q = sum nu^2 psi psi^T`, `P = sum phi phi^T`, `Q^{-1} = sum nu^{-2} phi phi^T`, `P^{-1} = sum psi psi^T`.
    pub fn reconstruction(&self) -> Result<ReconstructionDefects> {
        let prec = self.precision;
        let n = self.nu_sq.len();
        let ones = vec![Float::with_val(prec, 1u32); n];
        let inv: Vec<Float> = self.nu_sq.iter().map(|e| Float::with_val(prec, e.recip_ref())).collect();
        Ok(ReconstructionDefects {
            q: relative(&self.psi.mul_diag_transpose(&self.nu_sq, &self.psi), &self.q),
            p: relative(&self.phi.mul_diag_transpose(&ones, &self.phi), &self.p),
            q_inverse: relative(&self.phi.mul_diag_transpose(&inv, &self.phi), &self.q.spd_inverse()?),
            p_inverse: relative(&self.psi.mul_diag_transpose(&ones, &self.psi), &self.p.spd_inverse()?),
        })
    }

    /// `max |psi_j . phi_k - delta_jk|`.
    pub fn biorthogonality_defect(&self) -> f64 {
        let prec = self.precision;
        let g = self.psi.transpose().mul(&self.phi);
        g.max_abs_diff(&MpMatrix::identity(g.n, prec))
    }
}

/// Entanglement-Hamiltonian kernels `2 pi H = (1/2) pi.Hpi.pi + (1/2) phi.Hphi.phi`.
#[derive(Debug, Clone, Serialize)]
pub struct LatticeEH {
    pub n_total: Option<usize>,
    pub n_int: usize,
    pub mass: MassParam,
    /// Site positions mapped to `(-1, 1)`.
    pub x: Vec<f64>,
    #[serde(skip)]
    pub hpi: DMatrix<f64>,
    #[serde(skip)]
    pub hphi: DMatrix<f64>,
    pub modes: Vec<DiscreteMode>,
    pub precision: u32,
    /// Relative deviation of the operator-function kernels from the mode sums.
    pub route_deviation: f64,
    /// Largest `|epsilon|` difference between the two routes.
    pub epsilon_deviation: f64,
}

/// `x_i = (2i - N + 1)/N`.
pub fn site_positions(n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * i as f64 - n as f64 + 1.0) / n as f64).collect()
}

/// `L = 2 g ln((1 + g)/(1 - g))` at `g = 1/(2 sqrt(mu))`, `mu = nu^2`.
fn l_function(mu: &Float, floor: &Float) -> Result<Float> {
    let prec = mu.prec();
    let nu = Float::with_val(prec, mu.sqrt_ref());
    let (gap, eps) = epsilon_of(&nu, floor);
    let eps = eps.ok_or_else(|| Error::NearPure(gap.to_f64()))?;
    Ok(eps / nu)
}

pub fn entanglement_hamiltonian(pair: &CovariancePair) -> Result<LatticeEH> {
    entanglement_hamiltonian_with_precision(pair, default_precision(pair.n()))
}

/// Mode sums `Hpi = (1/2) sum eps nu psi psi^T`, `Hphi = (1/2) sum (eps/nu) phi phi^T`, cross-checked
/// against `Hpi = (1/2) L Q`, `Hphi = (1/2) P L` with `L = F(QP)` built through the Cholesky factor of `P`.
pub fn entanglement_hamiltonian_with_precision(pair: &CovariancePair, prec: u32) -> Result<LatticeEH> {
    let w = williamson_with_precision(pair, prec)?;
    let n = pair.n();
    let floor = near_pure_floor(prec);
    let mut a_pi = Vec::with_capacity(n);
    let mut a_phi = Vec::with_capacity(n);
    for (j, e) in w.epsilon.iter().enumerate() {
        let e = e.as_ref().ok_or_else(|| Error::NearPure(w.modes[j].nu_minus_half))?;
        let nu = Float::with_val(prec, w.nu_sq[j].sqrt_ref());
        a_pi.push(Float::with_val(prec, e * &nu) / 2u32);
        a_phi.push(Float::with_val(prec, e / &nu) / 2u32);
    }
    let hpi = w.psi.mul_diag_transpose(&a_pi, &w.psi);
    let hphi = w.phi.mul_diag_transpose(&a_phi, &w.phi);

    // operator-function route: QP = R^{-T} (R^T Q R) R^T for P = R R^T
    let r = w.p.cholesky()?;
    let rt = r.transpose();
    let core = rt.mul(&w.q).mul(&r);
    let core = MpMatrix::from_fn(n, prec, |i, j| Float::with_val(prec, core.get(i, j) + core.get(j, i)) / 2u32);
    let (mu, wv) = core.symmetric_eigen()?;
    let fl: Vec<Float> = mu.iter().map(|m| l_function(m, &floor)).collect::<Result<_>>()?;
    let l_core = wv.mul_diag_transpose(&fl, &wv);
    let rt_inv = r.lower_inverse().transpose();
    let l = rt_inv.mul(&l_core).mul(&rt);
    let half = |m: MpMatrix| MpMatrix::from_fn(n, prec, |i, j| Float::with_val(prec, m.get(i, j) / 2u32));
    let hpi_b = half(l.mul(&w.q));
    let hphi_b = half(w.p.mul(&l));
    let sym = |m: &MpMatrix| MpMatrix::from_fn(n, prec, |i, j| Float::with_val(prec, m.get(i, j) + m.get(j, i)) / 2u32);
    let route_deviation = relative(&sym(&hpi_b), &hpi).max(relative(&sym(&hphi_b), &hphi));
    let mut eps_a: Vec<f64> = w.epsilon.iter().map(|e| e.as_ref().unwrap().to_f64()).collect();
    let mut eps_b: Vec<f64> = mu
        .iter()
        .map(|m| {
            let nu = Float::with_val(prec, m.sqrt_ref());
            epsilon_of(&nu, &floor).1.map_or(f64::INFINITY, |e| e.to_f64())
        })
        .collect();
    eps_a.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eps_b.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let epsilon_deviation = eps_a.iter().zip(&eps_b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if route_deviation > 1e-9 || epsilon_deviation > 1e-10 {
        return Err(Error::NonConvergence(format!(
            "entanglement Hamiltonian routes disagree: kernels {route_deviation:e}, epsilon {epsilon_deviation:e}"
        )));
    }
    Ok(LatticeEH {
        n_total: pair.chain.map(|c| c.n_total),
        n_int: n,
        mass: pair.interval_mass,
        x: site_positions(n),
        hpi: hpi.to_f64(),
        hphi: hphi.to_f64(),
        modes: w.modes,
        precision: prec,
        route_deviation,
        epsilon_deviation,
    })
}

/// `(nu + 1/2) ln(nu + 1/2) - (nu - 1/2) ln(nu - 1/2)`, zero at `nu = 1/2`.
pub fn entropy_term(nu_minus_half: f64) -> f64 {
    let g = nu_minus_half.max(0.0);
    let upper = (g + 1.0) * (g + 1.0).ln();
    if g == 0.0 {
        upper
    } else {
        upper - g * g.ln()
    }
}

pub fn entanglement_entropy(modes: &[DiscreteMode]) -> f64 {
    modes.iter().map(|m| entropy_term(m.nu_minus_half)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtLeast,
    AtMost,
}

/// One comparison metric, the record written to JSON reports.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRecord {
    #[serde(rename = "N_total")]
    pub n_total: Option<usize>,
    #[serde(rename = "N_int")]
    pub n_int: usize,
    #[serde(rename = "M")]
    pub mass: f64,
    pub metric_name: String,
    pub value: f64,
    pub threshold: Option<f64>,
    pub bound: Option<Bound>,
    /// `None` for informational metrics.
    pub pass: Option<bool>,
}

pub enum Prediction<'a> {
    /// Weight `1 - x^2` of the massless interval.
    MasslessWeight,
    /// `1 - max(|x|, |y|)` excess of `Hpi` and the flat antidiagonal of `Hphi` over a massless reference.
    SmallMassDelta { massless: &'a LatticeEH },
    /// Weight `1 - |x|` at large `M l`, the central `2/(M l)` fraction excluded.
    LargeMassTriangle,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn overlap(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// RMS distance between `profile / max(profile)` and `reference`.
fn rms_distance(profile: &[f64], reference: &[f64]) -> f64 {
    let peak = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = profile.iter().zip(reference).map(|(p, r)| (p / peak - r).powi(2)).sum();
    (s / profile.len() as f64).sqrt()
}

impl LatticeEH {
    /// `sum_j Hpi_ij`: the weight of `pi_i^2` seen by fields smooth on the kernel's range.
    pub fn weight_profile(&self) -> Vec<f64> {
        (0..self.n_int).map(|i| self.hpi.row(i).sum()).collect()
    }

    pub fn diagonal_profile(&self) -> Vec<f64> {
        (0..self.n_int).map(|i| self.hpi[(i, i)]).collect()
    }

    fn interior(&self) -> std::ops::Range<usize> {
        EDGE_SITES..self.n_int.saturating_sub(EDGE_SITES)
    }

    fn record(&self, name: &str, value: f64, threshold: Option<(f64, Bound)>) -> ComparisonRecord {
        let pass = match threshold {
            Some((t, Bound::AtLeast)) => Some(value >= t),
            Some((t, Bound::AtMost)) => Some(value <= t),
            None => None,
        };
        ComparisonRecord {
            n_total: self.n_total,
            n_int: self.n_int,
            mass: self.mass.m,
            metric_name: name.into(),
            value,
            threshold: threshold.map(|t| t.0),
            bound: threshold.map(|t| t.1),
            pass,
        }
    }
}

pub fn compare_continuum(lattice: &LatticeEH, prediction: Prediction<'_>) -> Result<Vec<ComparisonRecord>> {
    let x = &lattice.x;
    let inner = lattice.interior();
    if inner.len() < 4 {
        return Err(Error::Invalid("interval too short for an interior profile".into()));
    }
    match prediction {
        Prediction::MasslessWeight => {
            let parabola: Vec<f64> = x[inner.clone()].iter().map(|x| 1.0 - x * x).collect();
            let mut out = Vec::new();
            for (name, profile) in [("weight", lattice.weight_profile()), ("diagonal", lattice.diagonal_profile())] {
                let p = &profile[inner.clone()];
                out.push(lattice.record(&format!("{name}_parabola_correlation"), pearson(p, &parabola), Some((0.98, Bound::AtLeast))));
                out.push(lattice.record(&format!("{name}_parabola_rms"), rms_distance(p, &parabola), None));
            }
            Ok(out)
        }
        Prediction::LargeMassTriangle => {
            let cut = 2.0 / lattice.mass.m;
            let keep: Vec<usize> = inner.filter(|&i| x[i].abs() >= cut).collect();
            if keep.len() < 4 {
                return Err(Error::Invalid(format!("M l = {} leaves no sites outside the central exclusion", lattice.mass.m)));
            }
            let tri: Vec<f64> = keep.iter().map(|&i| 1.0 - x[i].abs()).collect();
            let par: Vec<f64> = keep.iter().map(|&i| 1.0 - x[i] * x[i]).collect();
            let mut out = Vec::new();
            for (name, profile) in [("weight", lattice.weight_profile()), ("diagonal", lattice.diagonal_profile())] {
                // peak taken over the whole interior, not just the kept flanks
                let peak = lattice.interior().map(|i| profile[i]).fold(f64::NEG_INFINITY, f64::max);
                let mut p: Vec<f64> = keep.iter().map(|&i| profile[i] / peak).collect();
                p.push(1.0);
                let mut t = tri.clone();
                t.push(1.0);
                let mut q = par.clone();
                q.push(1.0);
                let (dt, dp) = (rms_distance(&p, &t), rms_distance(&p, &q));
                out.push(lattice.record(&format!("{name}_triangle_rms"), dt, None));
                out.push(lattice.record(&format!("{name}_parabola_rms"), dp, None));
                let bound = (name == "weight").then_some((0.0, Bound::AtLeast));
                out.push(lattice.record(&format!("{name}_triangle_margin"), dp - dt, bound));
            }
            Ok(out)
        }
        Prediction::SmallMassDelta { massless } => {
            if massless.n_int != lattice.n_int {
                return Err(Error::Invalid("reference and lattice intervals differ in size".into()));
            }
            let mut excess = Vec::new();
            let mut shape = Vec::new();
            for i in inner.clone() {
                for j in inner.clone() {
                    if i != j {
                        excess.push(lattice.hpi[(i, j)] - massless.hpi[(i, j)]);
                        shape.push(1.0 - x[i].abs().max(x[j].abs()));
                    }
                }
            }
            let n = lattice.n_int;
            let anti: Vec<f64> = inner
                .clone()
                .filter(|&i| i != n - 1 - i)
                .map(|i| lattice.hphi[(i, n - 1 - i)] - massless.hphi[(i, n - 1 - i)])
                .collect();
            let mean = anti.iter().sum::<f64>() / anti.len() as f64;
            let sd = (anti.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / anti.len() as f64).sqrt();
            Ok(vec![
                lattice.record("offdiagonal_excess_overlap", overlap(&excess, &shape), Some((0.9, Bound::AtLeast))),
                lattice.record("antidiagonal_excess_mean", mean, None),
                lattice.record("antidiagonal_excess_spread", sd / mean.abs(), Some((0.1, Bound::AtMost))),
            ])
        }
    }
}

/// Consecutive sites of length `n_int` centred on a chain of `n_total`.
pub fn centred_interval(n_total: usize, n_int: usize) -> Vec<usize> {
    let start = (n_total - n_int.min(n_total)) / 2;
    (start..start + n_int).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels;
    use proptest::prelude::*;

    #[test]
    fn chain_is_pure_and_translation_invariant() {
        let pair = build_chain(32, 1.0, 0.3, Boundary::Periodic).unwrap();
        let defect = (&pair.q * (&pair.p * 4.0) - DMatrix::identity(32, 32)).abs().max();
        assert!(defect < 1e-10, "{defect:e}");
        for i in 0..31 {
            assert!((pair.q[(i, i + 1)] - pair.q[(0, 1)]).abs() < 1e-12);
            assert!((pair.p[(i, 0)] - pair.p[(31 - i, 31)]).abs() < 1e-12);
        }
        for nu2 in pair.symplectic_spectrum() {
            assert!((nu2 - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn single_site_is_the_lone_oscillator() {
        let pair = build_chain(1, 1.0, 0.7, Boundary::Periodic).unwrap();
        assert!((pair.q[(0, 0)] - 1.0 / 1.4).abs() < 1e-15);
        assert!((pair.p[(0, 0)] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_needs_the_regulator() {
        assert!(matches!(build_chain(16, 1.0, 0.0, Boundary::Periodic), Err(Error::Domain(_))));
        let r = build_regulated_chain(16, 1.0).unwrap();
        assert!(r.chain.unwrap().regulated);
        assert!((r.chain.unwrap().m_phys * 16.0 - MASSLESS_REGULATOR).abs() < 1e-18);
    }

    #[test]
    fn reductions() {
        let pair = build_chain(12, 1.0, 0.5, Boundary::Periodic).unwrap();
        let all: Vec<usize> = (0..12).collect();
        let full = reduce(&pair, &all).unwrap();
        assert!(full.symplectic_spectrum().iter().all(|v| (v - 0.25).abs() < 1e-10));
        let two = build_chain(2, 1.0, 0.5, Boundary::Periodic).unwrap();
        let half = reduce(&two, &[0]).unwrap();
        // 2x2 dense algebra: nu^2 = Q_00 P_00
        let nu2 = two.q[(0, 0)] * two.p[(0, 0)];
        assert!(nu2 > 0.25 + 1e-6);
        assert!((half.symplectic_spectrum()[0] - nu2).abs() < 1e-14);
        assert!(reduce(&pair, &[1, 3]).is_err());
        assert!(reduce(&pair, &[]).is_err());
        assert!((reduce(&pair, &[2, 3, 4, 5]).unwrap().interval_mass.m - 0.5 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn schur_complement_identity_on_chain() {
        let pair = build_chain(64, 1.0, 0.2, Boundary::Periodic).unwrap();
        let report = kernels::rdm_block_identity(&pair.q, &pair.p, &centred_interval(64, 8)).unwrap();
        assert!(report.relative_deviation < 1e-10, "{report:?}");
    }

    #[test]
    fn pure_vacuum_modes_are_flagged() {
        let half = DMatrix::identity(3, 3) * 0.5;
        let pair = CovariancePair::from_matrices(half.clone(), half, 1.0, MassParam::massless()).unwrap();
        let w = williamson(&pair).unwrap();
        assert_eq!(w.warnings.len(), 3);
        assert!(w.modes.iter().all(|m| m.epsilon.is_infinite() && (m.nu - 0.5).abs() < 1e-15));
        assert!(matches!(entanglement_hamiltonian(&pair), Err(Error::NearPure(_))));
        assert_eq!(entanglement_entropy(&w.modes), 0.0);
    }

    #[test]
    fn thermal_oscillator_at_two_pi() {
        let omega = 0.37;
        let coth = 1.0 / (PI * omega).tanh();
        let pair = CovariancePair::from_matrices(
            DMatrix::from_element(1, 1, coth / (2.0 * omega)),
            DMatrix::from_element(1, 1, omega * coth / 2.0),
            1.0,
            MassParam::massless(),
        )
        .unwrap();
        let m = &williamson(&pair).unwrap().modes[0];
        assert!((m.lambda - coth).abs() < 1e-14);
        assert!((m.epsilon - 2.0 * PI * omega).abs() < 1e-13);
        // lambda = coth(eps/2) inverts back
        assert!((1.0 / (0.5 * m.epsilon).tanh() - m.lambda).abs() < 1e-13);
    }

    fn random_pair(seed: u64, n: usize) -> (CovariancePair, Vec<f64>) {
        let mut s = seed;
        let mut uniform = move |lo: f64, hi: f64| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            lo + (hi - lo) * (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.0 } + uniform(-0.5, 0.5));
        let nus: Vec<f64> = (0..n).map(|_| uniform(0.6, 3.0)).collect();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, nus.iter().map(|v| v * v)));
        let ai = a.clone().try_inverse().unwrap();
        let q = &a * d * a.transpose();
        let p = ai.transpose() * &ai;
        let q = 0.5 * (&q + q.transpose());
        let p = 0.5 * (&p + p.transpose());
        (CovariancePair::from_matrices(q, p, 1.0, MassParam::massless()).unwrap(), nus)
    }

    #[test]
    fn random_pair_reconstructs() {
        let (pair, nus) = random_pair(7, 6);
        let w = williamson(&pair).unwrap();
        let mut got: Vec<f64> = w.modes.iter().map(|m| m.nu).collect();
        let mut want = nus.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, v) in got.iter().zip(&want) {
            assert!((g - v).abs() < 1e-12 * v);
        }
        assert!(w.reconstruction().unwrap().max() < 1e-9);
        assert!(w.biorthogonality_defect() < 1e-12);
        // double-precision reconstruction from the rounded modes
        let n = pair.n();
        let q = DMatrix::from_fn(n, n, |i, j| w.modes.iter().map(|m| m.nu * m.nu * m.psi[i] * m.psi[j]).sum::<f64>());
        assert!((q - &pair.q).abs().max() < 1e-9 * pair.q.abs().max());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_term(0.0), 0.0);
        let s = entropy_term(0.5);
        assert!((s - (1.5 * 1.5f64.ln() - 0.5 * 0.5f64.ln())).abs() < 1e-15);
        assert!((s - 0.954_78).abs() < 1e-5);
    }

    #[test]
    fn routes_agree_on_a_short_reduction() {
        let pair = build_chain(64, 1.0, 0.1, Boundary::Periodic).unwrap();
        let sub = reduce(&pair, &centred_interval(64, 6)).unwrap();
        let eh = entanglement_hamiltonian(&sub).unwrap();
        assert!(eh.route_deviation < 1e-9 && eh.epsilon_deviation < 1e-10, "{} {}", eh.route_deviation, eh.epsilon_deviation);
        let w = williamson(&sub).unwrap();
        assert!(w.reconstruction().unwrap().max() < 1e-9);
        // positive semidefinite kernels
        for h in [&eh.hpi, &eh.hphi] {
            let min = nalgebra::SymmetricEigen::new(h.clone()).eigenvalues.min();
            assert!(min > -1e-8 * h.abs().max());
        }
        // nu from epsilon through lambda = coth(eps/2)
        for m in &eh.modes {
            let nu = 0.5 / (0.5 * m.epsilon).tanh();
            assert!((nu - m.nu).abs() < 1e-10);
        }
    }

    #[test]
    fn site_map() {
        assert_eq!(site_positions(4), vec![-0.75, -0.25, 0.25, 0.75]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn entropy_increases_with_nu(a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(entropy_term(hi) > entropy_term(lo));
        }

        #[test]
        fn reduced_chains_satisfy_uncertainty(m in 0.05f64..2.0, len in 2usize..8) {
            let pair = build_chain(32, 1.0, m, Boundary::Periodic).unwrap();
            let sub = reduce(&pair, &centred_interval(32, len)).unwrap();
            for nu2 in sub.symplectic_spectrum() {
                prop_assert!(nu2 >= 0.25 - 1e-10);
            }
        }
    }
}
