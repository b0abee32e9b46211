use std::ffi::CStr;
use std::ptr;

use scalar_eh_ffi::*;

#[test]
fn bessel_and_errors() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(seh_bessel_k(0, 1.0, &mut v), SehStatus::Ok);
        assert!((v - 0.421_024_438_240_708_3).abs() < 1e-14);
        assert_eq!(seh_bessel_k(0, -1.0, &mut v), SehStatus::Domain);
        let msg = CStr::from_ptr(seh_last_error()).to_str().unwrap();
        assert!(msg.contains("domain"), "{msg}");
        assert_eq!(seh_bessel_i(1, 1.0, ptr::null_mut()), SehStatus::NullPointer);
    }
}

#[test]
fn kernel_handle() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(seh_kernel_new(SehKernel::Kc, 0.0, 6, 0, &mut h), SehStatus::Ok);
        let mut n = 0;
        assert_eq!(seh_kernel_size(h, &mut n), SehStatus::Ok);
        assert_eq!(n, 6);
        let mut buf = vec![0.0; 36];
        assert_eq!(seh_kernel_values(h, buf.as_mut_ptr(), 35), SehStatus::OutOfRange);
        assert_eq!(seh_kernel_values(h, buf.as_mut_ptr(), 36), SehStatus::Ok);
        let (mut a, mut v1, mut v2) = (0.0, 0.0, 0.0);
        assert_eq!(seh_kernel_value(h, 1, 4, &mut a), SehStatus::Ok);
        assert_eq!(a, buf[10]);
        seh_kernel_node(h, 1, &mut v1);
        seh_kernel_node(h, 4, &mut v2);
        let (c1, c2) = (v1.cos(), v2.cos());
        let expected = -(1.0 - c1 * c2) / (2.0 * std::f64::consts::PI * (c1 - c2).powi(2));
        assert!((a - expected).abs() < 1e-12 * expected.abs());
        assert_eq!(seh_kernel_value(h, 6, 0, &mut a), SehStatus::OutOfRange);
        assert_eq!(seh_kernel_new(SehKernel::P0, 0.2, 6, 0, &mut ptr::null_mut()), SehStatus::Invalid);
        seh_kernel_free(h);
        seh_kernel_free(ptr::null_mut());
    }
}

#[test]
fn mathieu_handle() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(seh_mathieu_solve(SehFamily::CeEven, 0.0, 3, 0, &mut h), SehStatus::Ok);
        let mut a = 0.0;
        for n in 0..=3 {
            seh_mathieu_char_value(h, n, &mut a);
            assert!((a - (4 * n * n) as f64).abs() < 1e-12);
        }
        assert_eq!(seh_mathieu_char_value(h, 4, &mut a), SehStatus::OutOfRange);
        seh_mathieu_free(h);
        assert_eq!(seh_mathieu_solve(SehFamily::SeOdd, 2.0, 2, 0, &mut h), SehStatus::Ok);
        let mut v = 0.0;
        seh_mathieu_eval(h, 0, 0.0, &mut v);
        assert!(v.abs() < 1e-15);
        assert_eq!(seh_mathieu_log_derivative(h, 0, &mut v), SehStatus::Ok);
        assert!(v < 0.0);
        seh_mathieu_free(h);
    }
}

#[test]
fn commutator_parity() {
    let mut v = 1.0;
    unsafe {
        assert_eq!(seh_commutator_element(0, 1, SehProfile::Parabolic, 0.0, &mut v), SehStatus::Ok);
        assert!(v.abs() < 1e-10);
        assert_eq!(seh_commutator_element(0, 2, SehProfile::Parabolic, 0.0, &mut v), SehStatus::Parity);
        assert_eq!(seh_delta_eh_pi(0.0, 0.0, 0.01, &mut v), SehStatus::Ok);
        assert!(v > 0.0);
    }
}

#[test]
fn chain_to_entanglement_hamiltonian() {
    unsafe {
        let mut chain = ptr::null_mut();
        assert_eq!(seh_chain_new(64, 1.0, 0.2, &mut chain), SehStatus::Ok);
        let mut sub = ptr::null_mut();
        assert_eq!(seh_chain_reduce(chain, 28, 6, &mut sub), SehStatus::Ok);
        let mut q = vec![0.0; 36];
        assert_eq!(seh_chain_covariance(sub, 0, q.as_mut_ptr(), 36), SehStatus::Ok);
        assert!((q[1] - q[6]).abs() < 1e-15);
        let mut eh = ptr::null_mut();
        assert_eq!(seh_lattice_eh_new(sub, 0, &mut eh), SehStatus::Ok);
        let mut eps = vec![0.0; 6];
        assert_eq!(seh_lattice_eh_epsilons(eh, eps.as_mut_ptr(), 6), SehStatus::Ok);
        assert!(eps.iter().all(|e| e.is_finite() && *e > 0.0));
        let mut s = 0.0;
        seh_lattice_eh_entropy(eh, &mut s);
        assert!(s > 0.0);
        let mut hpi = vec![0.0; 36];
        assert_eq!(seh_lattice_eh_matrix(eh, 0, hpi.as_mut_ptr(), 36), SehStatus::Ok);
        assert!((hpi[2] - hpi[12]).abs() < 1e-12 * hpi[0].abs());
        assert_eq!(seh_lattice_eh_matrix(eh, 2, hpi.as_mut_ptr(), 36), SehStatus::OutOfRange);
        assert_eq!(seh_chain_reduce(chain, 60, 8, &mut sub), SehStatus::Invalid);
        seh_lattice_eh_free(eh);
        seh_chain_free(sub);
        seh_chain_free(chain);
    }
}

#[test]
fn header_declares_the_api() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/scalar_eh.h");
    let header = std::fs::read_to_string(path).unwrap();
    for name in ["seh_kernel_new", "seh_lattice_eh_free", "SEH_STATUS_NEAR_PURE", "typedef struct SehChain SehChain"] {
        assert!(header.contains(name), "{name} missing from header");
    }
    // the header must stand alone as C
    if let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", path]).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
