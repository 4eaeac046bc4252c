//! Numerical verification tooling: spectral density tables, empirical
//! eigenvalue decay rates, random-feature kernel estimates, RKHS norms and
//! the closed-form optimal-bandwidth report.

use crate::error::{ReconError, Result};
use crate::field::ImplicitField;
use crate::kernel::{self, KernelFamily, KernelSpec, SpectralParams};
use ndarray::Array2;
use ndarray_linalg::Eigh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use std::f64::consts::PI;

/// Log-log least-squares fit of an empirical eigenvalue decay rate.
#[derive(Debug, Clone)]
pub struct EdrFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Half-open index window (1-based eigenvalue ranks) used for the fit.
    pub eigenvalues_used: (usize, usize),
}

/// Radial tabulation of the spectral density: `(omega_norm, p_nu)` rows.
pub fn spectrum_table(
    params: &SpectralParams,
    omega_max: f64,
    steps: usize,
) -> Result<Vec<(f64, f64)>> {
    if steps < 2 {
        return Err(ReconError::InvalidInput(format!("steps must be >= 2, got {steps}")));
    }
    if !(omega_max > 0.0) {
        return Err(ReconError::InvalidInput(format!(
            "omega_max must be positive, got {omega_max}"
        )));
    }
    Ok((0..steps)
        .map(|i| {
            let w = omega_max * i as f64 / (steps - 1) as f64;
            (w, kernel::spectral_density(params, w))
        })
        .collect())
}

/// Default fit window `[n/10, n/2)`: the head of the spectrum reflects the
/// bulk, the far tail reflects discretization noise.
pub fn default_tail_window(n: usize) -> (usize, usize) {
    (n / 10, n / 2)
}

/// Draws `n` uniform points in `[0,1]^d`, forms `K/n` and fits the slope of
/// `log lambda_s` against `log s` over `tail_window` (1-based ranks,
/// half-open, descending eigenvalue order).
pub fn empirical_edr(
    spec: &KernelSpec,
    n: usize,
    d: usize,
    seed: u64,
    tail_window: Option<(usize, usize)>,
) -> Result<EdrFit> {
    if n < 256 {
        return Err(ReconError::InvalidInput(format!("need n >= 256 points, got {n}")));
    }
    if !(1..=3).contains(&d) {
        return Err(ReconError::InvalidInput(format!("d must be in {{1,2,3}}, got {d}")));
    }
    let (lo, hi) = tail_window.unwrap_or_else(|| default_tail_window(n));
    if lo < 1 || hi <= lo + 1 || hi > n {
        return Err(ReconError::InvalidInput(format!(
            "tail window [{lo}, {hi}) invalid for n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = Array2::from_shape_fn((n, d), |_| rng.gen_range(0.0..1.0));
    let mut k = kernel::gram_matrix(spec, points.view(), None)?;
    k.mapv_inplace(|v| v / n as f64);
    let (mut eigs, _) = k
        .eigh(ndarray_linalg::UPLO::Lower)
        .map_err(|e| ReconError::Numeric(format!("eigendecomposition failed: {e}")))?;
    eigs.as_slice_mut().unwrap().sort_unstable_by(|a, b| b.total_cmp(a));

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in lo..hi {
        let lambda = eigs[s - 1];
        if lambda > 0.0 {
            xs.push((s as f64).ln());
            ys.push(lambda.ln());
        }
    }
    if xs.len() < 2 {
        return Err(ReconError::Numeric(
            "too few positive eigenvalues in the fit window".into(),
        ));
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(EdrFit { slope, intercept, r_squared, eigenvalues_used: (lo, hi) })
}

/// Draws one frequency vector from the Matern spectral density: a standard
/// d-variate Student-t draw with 2 nu degrees of freedom, scaled by
/// `1/(2 pi h)`.
fn sample_matern_frequency(
    rng: &mut ChaCha8Rng,
    d: usize,
    nu: f64,
    h: f64,
) -> Vec<f64> {
    let chi: ChiSquared<f64> = ChiSquared::new(2.0 * nu).expect("valid dof");
    let c: f64 = chi.sample(rng);
    let scale = (2.0 * nu / c).sqrt() / (2.0 * PI * h);
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

/// Monte Carlo estimate of the kernel through its random-feature expansion:
/// the mean of `2 cos(w x + b) cos(w y + b)` with `w` drawn from the
/// spectral density and `b` uniform on `[0, 2 pi)`. The Gaussian limit uses
/// normal frequencies with the matching variance.
pub fn rff_kernel_estimate(
    spec: &KernelSpec,
    x: &[f64],
    y: &[f64],
    num_features: usize,
    seed: u64,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ReconError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if num_features == 0 {
        return Err(ReconError::InvalidInput("need at least one feature".into()));
    }
    if spec.family == KernelFamily::ArcCosine {
        return Err(ReconError::InvalidInput(
            "random Fourier features require a stationary kernel".into(),
        ));
    }
    let d = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..num_features {
        let w: Vec<f64> = match spec.family {
            KernelFamily::Matern => sample_matern_frequency(&mut rng, d, spec.nu, spec.h),
            KernelFamily::Gaussian => (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z / (2.0 * PI * spec.h)
                })
                .collect(),
            KernelFamily::ArcCosine => unreachable!(),
        };
        let b = rng.gen_range(0.0..2.0 * PI);
        let wx: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        let wy: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
        acc += 2.0 * (2.0 * PI * wx + b).cos() * (2.0 * PI * wy + b).cos();
    }
    Ok(acc / num_features as f64)
}

/// `alpha^T K alpha` with the Gram matrix rebuilt from the field.
pub fn rkhs_norm(field: &ImplicitField) -> Result<f64> {
    let k = kernel::reconstruction_gram(&field.spec, field.centers.view())?;
    let ka = k.dot(&field.alpha);
    Ok(field.alpha.dot(&ka))
}

/// Lemma-style bound report: constants, bound and spectral-norm curves over
/// the requested bandwidths, and the optimal bandwidth both in closed form
/// and by direct minimization.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub c1: f64,
    pub c2: f64,
    pub h_star_closed: f64,
    pub h_star_numeric: f64,
    pub bound_values: Vec<(f64, f64)>,
    pub norm_values: Vec<(f64, f64)>,
}

/// Multidimensional DFT (rows then columns for d = 2) returning coefficients
/// scaled so that entry k approximates the continuous Fourier transform of a
/// function sampled on the unit lattice `[0,1)^d`.
fn dft(samples: &[f64], dims: &[usize]) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::new();
    let mut data: Vec<Complex<f64>> =
        samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    match dims {
        [n] => {
            planner.plan_fft_forward(*n).process(&mut data);
        }
        [ny, nx] => {
            let row_fft = planner.plan_fft_forward(*nx);
            for row in data.chunks_mut(*nx) {
                row_fft.process(row);
            }
            let col_fft = planner.plan_fft_forward(*ny);
            let mut col = vec![Complex::new(0.0, 0.0); *ny];
            for cx in 0..*nx {
                for (cy, slot) in col.iter_mut().enumerate() {
                    *slot = data[cy * nx + cx];
                }
                col_fft.process(&mut col);
                for (cy, &v) in col.iter().enumerate() {
                    data[cy * nx + cx] = v;
                }
            }
        }
        _ => unreachable!("dims validated by caller"),
    }
    let cell: f64 = dims.iter().map(|&n| 1.0 / n as f64).product();
    for v in data.iter_mut() {
        *v *= cell;
    }
    data
}

/// Signed integer frequency for DFT bin `k` of `n` (cycles per unit length).
fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 { k as f64 } else { k as f64 - n as f64 }
}

/// Computes the bound constants and curves for a function sampled on a
/// power-of-two lattice over `[0,1]^d`, `d` in {1, 2}. The input is assumed
/// to decay toward the boundary; frequency-domain integrals are Riemann sums
/// over the DFT's natural lattice (no zero-padding).
pub fn norm_bound_report(
    samples: &[f64],
    dims: &[usize],
    nu: f64,
    h_values: &[f64],
) -> Result<BoundReport> {
    if dims.is_empty() || dims.len() > 2 {
        return Err(ReconError::InvalidInput(format!(
            "dimension must be 1 or 2, got {}",
            dims.len()
        )));
    }
    for &n in dims {
        if n < 64 || !n.is_power_of_two() {
            return Err(ReconError::InvalidInput(format!(
                "grid resolution must be a power of two >= 64, got {n}"
            )));
        }
    }
    if samples.len() != dims.iter().product::<usize>() {
        return Err(ReconError::InvalidInput(format!(
            "{} samples do not fill a {dims:?} lattice",
            samples.len()
        )));
    }
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(ReconError::InvalidInput(format!("nu must be finite and positive, got {nu}")));
    }
    let d = dims.len();
    let df = d as f64;
    let p = nu + df / 2.0;

    let coeffs = dft(samples, dims);
    // |F[f]|^2 and (2 pi |omega|)^2 per frequency-lattice site; the lattice
    // spacing is 1 in every axis, so Riemann sums are plain sums.
    let mut power = Vec::with_capacity(coeffs.len());
    let mut omega2 = Vec::with_capacity(coeffs.len());
    for (idx, c) in coeffs.iter().enumerate() {
        let w2 = match dims {
            [n] => signed_freq(idx, *n).powi(2),
            [ny, nx] => {
                signed_freq(idx / nx, *ny).powi(2) + signed_freq(idx % nx, *nx).powi(2)
            }
            _ => unreachable!(),
        };
        power.push(c.norm_sqr());
        omega2.push(w2);
    }
    let c_prime: f64 = power.iter().sum();
    let c_prime_dnu: f64 = power
        .iter()
        .zip(&omega2)
        .map(|(&pw, &w2)| ((2.0 * PI).powi(2) * w2).powf(p) * pw)
        .sum();

    let c_dnu = kernel::normalization_constant(d, nu);
    let denom = (2.0 * PI).powf(df / 2.0) * c_dnu;
    let c1 = (2.0 * nu).powf(p) / denom * c_prime;
    let c2 = c_prime_dnu / denom;

    let bound_at = |h: f64| h.powf(2.0 * nu) * (c1 * h.powf(-(2.0 * nu + df)) + c2);
    // Spectral RKHS norm: h^{2 nu} ((2 pi)^{d/2} C_{d,nu})^{-1}
    //   * sum (2 nu / h^2 + (2 pi |omega|)^2)^{nu + d/2} |F[f]|^2.
    let norm_at = |h: f64| -> f64 {
        let integral: f64 = power
            .iter()
            .zip(&omega2)
            .map(|(&pw, &w2)| {
                (2.0 * nu / (h * h) + (2.0 * PI).powi(2) * w2).powf(p) * pw
            })
            .sum();
        h.powf(2.0 * nu) / denom * integral
    };

    let h_star_closed = (df / (2.0 * nu) * c1 / c2).powf(1.0 / (2.0 * nu + df));
    let h_star_numeric = golden_section_min(&bound_at, 1e-3, 1e3, 1e-9);

    let mut bound_values = Vec::with_capacity(h_values.len());
    let mut norm_values = Vec::with_capacity(h_values.len());
    for &h in h_values {
        if !(h > 0.0) {
            return Err(ReconError::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        bound_values.push((h, bound_at(h)));
        norm_values.push((h, norm_at(h)));
    }
    Ok(BoundReport { c1, c2, h_star_closed, h_star_numeric, bound_values, norm_values })
}

/// Golden-section minimization in log space over `[lo, hi]`.
fn golden_section_min(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d.exp());
        }
    }
    (0.5 * (a + b)).exp()
}
