//! C ABI over `scalar_eh`. Results come back through out-pointers; every call returns a
//! [`SehStatus`], and the message of the last failure on the calling thread is available
//! from [`seh_last_error`]. Handles are opaque and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use scalar_eh::commutator::{self, ModulationProfile};
use scalar_eh::kernels::{self, KernelGrid, MassParam};
use scalar_eh::mathieu::{self, Family, MathieuSolution};
use scalar_eh::oracle::{self, Boundary, CovariancePair, LatticeEH};
use scalar_eh::{corrections, specfun, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SehStatus {
    Ok = 0,
    Domain = 1,
    Overflow = 2,
    NonConvergence = 3,
    Truncation = 4,
    SingularPair = 5,
    Parity = 6,
    Purity = 7,
    NearPure = 8,
    Quadrature = 9,
    Invalid = 10,
    Io = 11,
    NullPointer = 12,
    OutOfRange = 13,
    Panic = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SehFamily {
    CeEven = 0,
    CeOdd = 1,
    SeOdd = 2,
    SeEven = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SehKernel {
    Kc = 0,
    Ks = 1,
    Q0 = 2,
    Q0inv = 3,
    P0 = 4,
    P0inv = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SehProfile {
    Parabolic = 0,
    Triangular = 1,
}

/// Kernel samples on a Chebyshev grid.
pub struct SehKernelGrid(KernelGrid);
/// Characteristic values and functions of one Mathieu family.
pub struct SehMathieu(Vec<MathieuSolution>);
/// Gaussian covariance pair of a chain or an interval of it.
pub struct SehChain(CovariancePair);
/// Lattice entanglement-Hamiltonian matrices with their modes.
pub struct SehLatticeEh(LatticeEH);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SehStatus {
    match err {
        Error::Domain(_) => SehStatus::Domain,
        Error::Overflow(_) => SehStatus::Overflow,
        Error::NonConvergence(_) => SehStatus::NonConvergence,
        Error::Truncation(_) => SehStatus::Truncation,
        Error::SingularPair(..) => SehStatus::SingularPair,
        Error::Parity(..) => SehStatus::Parity,
        Error::Purity(_) => SehStatus::Purity,
        Error::NearPure(_) => SehStatus::NearPure,
        Error::Quadrature(_) => SehStatus::Quadrature,
        Error::Invalid(_) => SehStatus::Invalid,
        Error::Io(_) | Error::Json(_) => SehStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Null,
    Range(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SehStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SehStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null)) => {
            set_error("null pointer argument".into());
            SehStatus::NullPointer
        }
        Ok(Err(Fail::Range(m))) => {
            set_error(m);
            SehStatus::OutOfRange
        }
        Err(_) => {
            set_error("internal panic".into());
            SehStatus::Panic
        }
    }
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null);
    }
    out.write(v);
    Ok(())
}

unsafe fn get<'a, T>(h: *const T) -> Result<&'a T, Fail> {
    h.as_ref().ok_or(Fail::Null)
}

unsafe fn fill(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if buf.is_null() {
        return Err(Fail::Null);
    }
    if len < src.len() {
        return Err(Fail::Range(format!("buffer holds {len} values, {} needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

fn index(i: usize, n: usize) -> Result<(), Fail> {
    if i < n {
        Ok(())
    } else {
        Err(Fail::Range(format!("index {i} out of range for size {n}")))
    }
}

/// Message of the last failed call on this thread, or null. Valid until the next failure.
#[no_mangle]
pub extern "C" fn seh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_bessel_i(n: usize, x: f64, out: *mut f64) -> SehStatus {
    guard(|| put(out, specfun::modified_bessel_i(n, x)?.value))
}

/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_bessel_k(n: usize, x: f64, out: *mut f64) -> SehStatus {
    guard(|| put(out, specfun::modified_bessel_k(n, x)?.value))
}

/// `K_c`/`K_s` series kernels (closed forms at `mass = 0`) or the massless `Q0`, `P0` and inverses,
/// on the `n`-point Chebyshev grid in angular coordinates. `truncation = 0` picks the default.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_kernel_new(kind: SehKernel, mass: f64, n: usize, truncation: usize, out: *mut *mut SehKernelGrid) -> SehStatus {
    guard(|| {
        let grid = kernels::chebyshev_grid(n);
        let m = MassParam::new(mass)?;
        let trunc = (truncation > 0).then_some(truncation);
        let k = match kind {
            SehKernel::Kc if mass == 0.0 => kernels::kernel_kc0(&grid)?,
            SehKernel::Ks if mass == 0.0 => kernels::kernel_ks0(&grid)?,
            SehKernel::Kc => kernels::kernel_kc(m, &grid, trunc)?,
            SehKernel::Ks => kernels::kernel_ks(m, &grid, trunc)?,
            _ if mass != 0.0 => return Err(Error::Invalid("Q0, P0 and inverses are massless only".into()).into()),
            SehKernel::Q0 => kernels::q0_closed(&grid)?,
            SehKernel::Q0inv => kernels::q0_inverse_closed(&grid)?,
            SehKernel::P0 => kernels::p0_closed(&grid)?,
            SehKernel::P0inv => kernels::p0_inverse_closed(&grid)?,
        };
        put(out, Box::into_raw(Box::new(SehKernelGrid(k))))
    })
}

/// # Safety
/// `h` must come from [`seh_kernel_new`]; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_kernel_size(h: *const SehKernelGrid, out: *mut usize) -> SehStatus {
    guard(|| put(out, get(h)?.0.n()))
}

/// Grid node `v_i`.
///
/// # Safety
/// `h` must come from [`seh_kernel_new`]; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_kernel_node(h: *const SehKernelGrid, i: usize, out: *mut f64) -> SehStatus {
    guard(|| {
        let k = &get(h)?.0;
        index(i, k.n())?;
        put(out, k.grid[i])
    })
}

/// Sample `(i, j)`; singular diagonals read as NaN.
///
/// # Safety
/// `h` must come from [`seh_kernel_new`]; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_kernel_value(h: *const SehKernelGrid, i: usize, j: usize, out: *mut f64) -> SehStatus {
    guard(|| {
        let k = &get(h)?.0;
        index(i, k.n())?;
        index(j, k.n())?;
        put(out, k.get(i, j))
    })
}

/// Row-major copy of all `n * n` samples.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn seh_kernel_values(h: *const SehKernelGrid, buf: *mut f64, len: usize) -> SehStatus {
    guard(|| fill(&get(h)?.0.values, buf, len))
}

/// # Safety
/// `h` must come from [`seh_kernel_new`] or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn seh_kernel_free(h: *mut SehKernelGrid) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Orders `n = 0..=n_max` of one family at parameter `q` (the `-q` angular equation).
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_mathieu_solve(family: SehFamily, q: f64, n_max: usize, truncation: usize, out: *mut *mut SehMathieu) -> SehStatus {
    guard(|| {
        let fam = match family {
            SehFamily::CeEven => Family::CeEven,
            SehFamily::CeOdd => Family::CeOdd,
            SehFamily::SeOdd => Family::SeOdd,
            SehFamily::SeEven => Family::SeEven,
        };
        let trunc = if truncation > 0 { truncation } else { kernels::default_truncation(q) + 2 * n_max };
        let sols = mathieu::solve_characteristic(q, fam, n_max, trunc)?;
        put(out, Box::into_raw(Box::new(SehMathieu(sols))))
    })
}

unsafe fn solution<'a>(h: *const SehMathieu, n: usize) -> Result<&'a MathieuSolution, Fail> {
    let s = &get(h)?.0;
    index(n, s.len())?;
    Ok(&s[n])
}

/// # Safety
/// `h` must come from [`seh_mathieu_solve`]; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_mathieu_char_value(h: *const SehMathieu, n: usize, out: *mut f64) -> SehStatus {
    guard(|| put(out, solution(h, n)?.char_value))
}

/// `ce/se_m(v, -q)`.
///
/// # Safety
/// `h` must come from [`seh_mathieu_solve`]; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_mathieu_eval(h: *const SehMathieu, n: usize, v: f64, out: *mut f64) -> SehStatus {
    guard(|| put(out, mathieu::eval_periodic(solution(h, n)?, v)))
}

/// Log-derivative of the decaying radial function at the cut, `u = 0`.
///
/// # Safety
/// `h` must come from [`seh_mathieu_solve`]; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_mathieu_log_derivative(h: *const SehMathieu, n: usize, out: *mut f64) -> SehStatus {
    guard(|| put(out, mathieu::log_derivative(solution(h, n)?)?))
}

/// # Safety
/// `h` must come from [`seh_mathieu_solve`] or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn seh_mathieu_free(h: *mut SehMathieu) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Commutator element `(m1, m2)` of the entanglement Hamiltonian with the modulated Hamiltonian.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_commutator_element(m1: usize, m2: usize, profile: SehProfile, mass: f64, out: *mut f64) -> SehStatus {
    guard(|| {
        let p = match profile {
            SehProfile::Parabolic => ModulationProfile::parabolic(),
            SehProfile::Triangular => ModulationProfile::triangular(),
        };
        put(out, commutator::commutator_element(m1, m2, &p, MassParam::new(mass)?)?)
    })
}

/// First-order mass correction `2 pi delta H_Epi(x, y)` on `[-1, 1]^2`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_delta_eh_pi(x: f64, y: f64, mass: f64, out: *mut f64) -> SehStatus {
    guard(|| {
        let p = corrections::correction_params(mass)?;
        put(out, corrections::delta_eh_pi(x, y, &p)?)
    })
}

/// Ground state of a periodic chain; `m_phys = 0` selects the regulated massless chain.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_chain_new(n_total: usize, spacing: f64, m_phys: f64, out: *mut *mut SehChain) -> SehStatus {
    guard(|| {
        let c = if m_phys == 0.0 {
            oracle::build_regulated_chain(n_total, spacing)?
        } else {
            oracle::build_chain(n_total, spacing, m_phys, Boundary::Periodic)?
        };
        put(out, Box::into_raw(Box::new(SehChain(c))))
    })
}

/// Restriction to `len` consecutive sites starting at `start`.
///
/// # Safety
/// `h` must come from this library; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_chain_reduce(h: *const SehChain, start: usize, len: usize, out: *mut *mut SehChain) -> SehStatus {
    guard(|| {
        let sites: Vec<usize> = (start..start.saturating_add(len)).collect();
        let r = oracle::reduce(&get(h)?.0, &sites)?;
        put(out, Box::into_raw(Box::new(SehChain(r))))
    })
}

/// # Safety
/// `h` must come from this library; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_chain_size(h: *const SehChain, out: *mut usize) -> SehStatus {
    guard(|| put(out, get(h)?.0.n()))
}

/// Row-major `Q` (`which = 0`) or `P` (`which = 1`).
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn seh_chain_covariance(h: *const SehChain, which: u32, buf: *mut f64, len: usize) -> SehStatus {
    guard(|| {
        let c = &get(h)?.0;
        let m = match which {
            0 => &c.q,
            1 => &c.p,
            _ => return Err(Fail::Range(format!("covariance selector {which} is not 0 or 1"))),
        };
        fill(m.transpose().as_slice(), buf, len)
    })
}

/// # Safety
/// `h` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn seh_chain_free(h: *mut SehChain) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Entanglement-Hamiltonian matrices of a (mixed) reduction. `precision = 0` picks the default.
///
/// # Safety
/// `h` must come from this library; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_lattice_eh_new(h: *const SehChain, precision: u32, out: *mut *mut SehLatticeEh) -> SehStatus {
    guard(|| {
        let pair = &get(h)?.0;
        let prec = if precision > 0 { precision } else { oracle::default_precision(pair.n()) };
        let eh = oracle::entanglement_hamiltonian_with_precision(pair, prec)?;
        put(out, Box::into_raw(Box::new(SehLatticeEh(eh))))
    })
}

/// # Safety
/// `h` must come from [`seh_lattice_eh_new`]; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_lattice_eh_size(h: *const SehLatticeEh, out: *mut usize) -> SehStatus {
    guard(|| put(out, get(h)?.0.n_int))
}

/// Row-major `Hpi` (`which = 0`) or `Hphi` (`which = 1`).
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn seh_lattice_eh_matrix(h: *const SehLatticeEh, which: u32, buf: *mut f64, len: usize) -> SehStatus {
    guard(|| {
        let e = &get(h)?.0;
        let m = match which {
            0 => &e.hpi,
            1 => &e.hphi,
            _ => return Err(Fail::Range(format!("matrix selector {which} is not 0 or 1"))),
        };
        fill(m.transpose().as_slice(), buf, len)
    })
}

/// Entanglement energies `epsilon_j`, one per site.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn seh_lattice_eh_epsilons(h: *const SehLatticeEh, buf: *mut f64, len: usize) -> SehStatus {
    guard(|| {
        let eps: Vec<f64> = get(h)?.0.modes.iter().map(|m| m.epsilon).collect();
        fill(&eps, buf, len)
    })
}

/// # Safety
/// `h` must come from [`seh_lattice_eh_new`]; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seh_lattice_eh_entropy(h: *const SehLatticeEh, out: *mut f64) -> SehStatus {
    guard(|| put(out, oracle::entanglement_entropy(&get(h)?.0.modes)))
}

/// # Safety
/// `h` must come from [`seh_lattice_eh_new`] or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn seh_lattice_eh_free(h: *mut SehLatticeEh) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}
