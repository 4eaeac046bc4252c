//! Batched elementary functions used in the hot field-evaluation loop.
//!
//! On x86-64 Linux with glibc, `exp_neg` dispatches at runtime to a small C
//! shim built on libmvec's vectorized `exp` kernels (AVX-512 or AVX2 when the
//! CPU supports them). Everywhere else, or when neither feature is present,
//! it falls back to the scalar standard-library `exp`. The libmvec kernels
//! are faithfully rounded, so the two paths agree to within 1 ulp.

/// Computes `out[i] = exp(-x[i])` for every element.
///
/// # Panics
/// Panics if the two slices differ in length.
pub fn exp_neg(x: &[f64], out: &mut [f64]) {
    assert_eq!(x.len(), out.len(), "exp_neg: slice length mismatch");
    imp::exp_neg(x, out);
}

#[cfg(recon_simd_exp)]
mod imp {
    use std::sync::atomic::{AtomicU8, Ordering};

    extern "C" {
        fn recon_vexp_neg_avx2(x: *const f64, out: *mut f64, n: i64);
        fn recon_vexp_neg_avx512(x: *const f64, out: *mut f64, n: i64);
    }

    const UNKNOWN: u8 = 0;
    const SCALAR: u8 = 1;
    const AVX2: u8 = 2;
    const AVX512: u8 = 3;

    static DISPATCH: AtomicU8 = AtomicU8::new(UNKNOWN);

    fn dispatch() -> u8 {
        let cached = DISPATCH.load(Ordering::Relaxed);
        if cached != UNKNOWN {
            return cached;
        }
        let detected = if is_x86_feature_detected!("avx512f") {
            AVX512
        } else if is_x86_feature_detected!("avx2") {
            AVX2
        } else {
            SCALAR
        };
        DISPATCH.store(detected, Ordering::Relaxed);
        detected
    }

    pub fn exp_neg(x: &[f64], out: &mut [f64]) {
        let n = x.len() as i64;
        match dispatch() {
            // SAFETY: slice lengths are checked by the caller, and the shim
            // is only invoked once the required CPU feature is detected.
            AVX512 => unsafe { recon_vexp_neg_avx512(x.as_ptr(), out.as_mut_ptr(), n) },
            AVX2 => unsafe { recon_vexp_neg_avx2(x.as_ptr(), out.as_mut_ptr(), n) },
            _ => super::scalar_exp_neg(x, out),
        }
    }
}

#[cfg(not(recon_simd_exp))]
mod imp {
    pub fn exp_neg(x: &[f64], out: &mut [f64]) {
        super::scalar_exp_neg(x, out);
    }
}

fn scalar_exp_neg(x: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (-v).exp();
    }
}
