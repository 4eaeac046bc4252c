//! Kernel functions, their gradients and spectral densities.
//!
//! The Matern family is implemented through the closed forms for the
//! half-integer smoothness values 1/2, 3/2, 5/2 together with the Gaussian
//! limit; the general Bessel-function form is deliberately not provided.

use crate::error::{ReconError, Result};
use crate::geom;
use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Matern,
    Gaussian,
    ArcCosine,
}

/// Compactly supported taper multiplied onto a kernel to sparsify Gram
/// matrices: `max(0, (1 - tau/h'))^nu'`, exactly zero beyond the cutoff `h'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaperSpec {
    pub nu_prime: f64,
    pub h_prime: f64,
}

/// Selects and parametrizes a kernel: family, smoothness `nu`, bandwidth `h`
/// and an optional taper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub nu: f64,
    pub h: f64,
    pub taper: Option<TaperSpec>,
}

impl KernelSpec {
    pub fn matern(nu: f64, h: f64) -> Result<Self> {
        if !(nu == 0.5 || nu == 1.5 || nu == 2.5) {
            return Err(ReconError::InvalidInput(format!(
                "matern smoothness must be 1/2, 3/2 or 5/2, got {nu}"
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(ReconError::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        Ok(Self { family: KernelFamily::Matern, nu, h, taper: None })
    }

    pub fn gaussian(h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(ReconError::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        Ok(Self { family: KernelFamily::Gaussian, nu: f64::INFINITY, h, taper: None })
    }

    pub fn arc_cosine() -> Self {
        Self { family: KernelFamily::ArcCosine, nu: f64::NAN, h: f64::NAN, taper: None }
    }

    /// Enables tapering with explicit parameters.
    pub fn with_taper(mut self, nu_prime: f64, h_prime: f64) -> Result<Self> {
        if !(h_prime > 0.0) || !(nu_prime >= 1.0) {
            return Err(ReconError::InvalidInput(format!(
                "taper requires h' > 0 and nu' >= 1, got h'={h_prime}, nu'={nu_prime}"
            )));
        }
        if self.family == KernelFamily::ArcCosine {
            return Err(ReconError::InvalidInput(
                "taper requires a stationary kernel".into(),
            ));
        }
        self.taper = Some(TaperSpec { nu_prime, h_prime });
        Ok(self)
    }

    /// Enables tapering with the default parameters nu' = 2, h' = 4h.
    pub fn with_default_taper(self) -> Result<Self> {
        let h = self.h;
        self.with_taper(2.0, 4.0 * h)
    }

    pub fn is_stationary(&self) -> bool {
        self.family != KernelFamily::ArcCosine
    }

    /// Whether an analytic gradient is available (Matern nu >= 3/2 or Gaussian).
    pub fn supports_analytic_gradient(&self) -> bool {
        match self.family {
            KernelFamily::Matern => self.nu >= 1.5 && self.taper.is_none(),
            KernelFamily::Gaussian => self.taper.is_none(),
            KernelFamily::ArcCosine => false,
        }
    }
}

/// Spectral-density parameters: dimension, smoothness, bandwidth and the
/// normalization constant `C_{d,nu} = 2^d pi^{d/2} Gamma(nu+d/2) (2nu)^nu / Gamma(nu)`.
#[derive(Debug, Clone, Copy)]
pub struct SpectralParams {
    pub d: usize,
    pub nu: f64,
    pub h: f64,
    pub c_dnu: f64,
}

impl SpectralParams {
    pub fn new(d: usize, nu: f64, h: f64) -> Result<Self> {
        if d == 0 {
            return Err(ReconError::InvalidInput("dimension must be >= 1".into()));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(ReconError::InvalidInput(format!(
                "spectral density requires finite nu > 0, got {nu}"
            )));
        }
        if !(h > 0.0) {
            return Err(ReconError::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        let c_dnu = normalization_constant(d, nu);
        Ok(Self { d, nu, h, c_dnu })
    }
}

/// `C_{d,nu}` of the Matern spectral density.
pub fn normalization_constant(d: usize, nu: f64) -> f64 {
    let df = d as f64;
    2f64.powi(d as i32) * PI.powf(df / 2.0) * libm::tgamma(nu + df / 2.0)
        * (2.0 * nu).powf(nu)
        / libm::tgamma(nu)
}

fn check_finite_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(ReconError::InvalidInput(format!("distance must be finite and >= 0, got {tau}")));
    }
    Ok(())
}

/// Half-integer Matern radial profile `Phi_nu(tau)`, equal to 1 at tau = 0.
pub fn eval_matern(spec: &KernelSpec, tau: f64) -> Result<f64> {
    debug_assert_eq!(spec.family, KernelFamily::Matern);
    check_finite_tau(tau)?;
    let h = spec.h;
    Ok(match spec.nu {
        x if x == 0.5 => (-tau / h).exp(),
        x if x == 1.5 => {
            let r = 3f64.sqrt() * tau / h;
            (-r).exp() * (1.0 + r)
        }
        x if x == 2.5 => {
            let r = 5f64.sqrt() * tau / h;
            (-r).exp() * (1.0 + r + r * r / 3.0)
        }
        other => {
            return Err(ReconError::InvalidInput(format!(
                "unsupported matern smoothness {other}"
            )))
        }
    })
}

/// Gaussian radial profile `exp(-tau^2 / (2 h^2))`.
pub fn eval_gaussian(h: f64, tau: f64) -> Result<f64> {
    check_finite_tau(tau)?;
    Ok((-tau * tau / (2.0 * h * h)).exp())
}

/// First-order arc-cosine kernel. Returns 0 when either argument is the
/// zero vector (the limit value; the angle is undefined there).
pub fn eval_arc_cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ReconError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(ReconError::InvalidInput("non-finite coordinate".into()));
    }
    let nx = geom::norm_nd(x);
    let ny = geom::norm_nd(y);
    if nx == 0.0 || ny == 0.0 {
        return Ok(0.0);
    }
    // Clamp to absorb floating-point drift before acos.
    let c = (geom::dot_nd(x, y) / (nx * ny)).clamp(-1.0, 1.0);
    let theta = c.acos();
    Ok(nx * ny / PI * (theta.sin() + (PI - theta) * theta.cos()))
}

/// Appends a constant coordinate 1 to every row. The reconstruction
/// pipeline evaluates the arc-cosine kernel on these homogeneous
/// coordinates — the covariance of an infinite-width ReLU layer *with
/// bias*. On raw coordinates the induced field would be positively
/// homogeneous in `x`, making its zero set a cone through the origin and
/// unable to represent a closed surface.
pub fn lift_homogeneous(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::ones((x.nrows(), x.ncols() + 1));
    out.slice_mut(ndarray::s![.., ..x.ncols()]).assign(&x);
    out
}

/// Gram matrix as used by the solvers and the RKHS norm: the arc-cosine
/// family is evaluated on homogeneous coordinates (see `lift_homogeneous`);
/// stationary families are unaffected.
pub fn reconstruction_gram(spec: &KernelSpec, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if spec.family == KernelFamily::ArcCosine {
        gram_matrix(spec, lift_homogeneous(x).view(), None)
    } else {
        gram_matrix(spec, x, None)
    }
}

/// Compact-support taper `max(0, (1 - tau/h'))^nu'`.
pub fn eval_taper(nu_prime: f64, h_prime: f64, tau: f64) -> Result<f64> {
    check_finite_tau(tau)?;
    if tau >= h_prime {
        return Ok(0.0);
    }
    Ok((1.0 - tau / h_prime).powf(nu_prime))
}

/// Radial kernel value at distance `tau`, including the taper if set.
/// Only meaningful for stationary families.
pub fn eval_radial(spec: &KernelSpec, tau: f64) -> Result<f64> {
    let base = match spec.family {
        KernelFamily::Matern => eval_matern(spec, tau)?,
        KernelFamily::Gaussian => eval_gaussian(spec.h, tau)?,
        KernelFamily::ArcCosine => {
            return Err(ReconError::InvalidInput(
                "arc-cosine kernel is not radial".into(),
            ))
        }
    };
    Ok(match spec.taper {
        Some(t) => base * eval_taper(t.nu_prime, t.h_prime, tau)?,
        None => base,
    })
}

/// Kernel value for a pair of points, dispatching on the family.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ReconError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    match spec.family {
        KernelFamily::ArcCosine => eval_arc_cosine(x, y),
        _ => eval_radial(spec, geom::dist_nd(x, y)),
    }
}

/// Derivative of the radial profile with respect to tau, divided by tau.
/// The ratio is finite at tau = 0 for nu >= 3/2 and the Gaussian, which is
/// what makes the Cartesian gradient well defined at coincident points.
pub fn radial_derivative_over_tau(spec: &KernelSpec, tau: f64) -> Result<f64> {
    let h = spec.h;
    match spec.family {
        KernelFamily::Matern if spec.nu == 1.5 => {
            // Phi'(tau) = -3 tau / h^2 * exp(-sqrt(3) tau / h)
            Ok(-3.0 / (h * h) * (-3f64.sqrt() * tau / h).exp())
        }
        KernelFamily::Matern if spec.nu == 2.5 => {
            // Phi'(tau) = -(5 tau / (3 h^2)) (1 + sqrt(5) tau / h) exp(-sqrt(5) tau / h)
            let r = 5f64.sqrt() * tau / h;
            Ok(-(5.0 / (3.0 * h * h)) * (1.0 + r) * (-r).exp())
        }
        KernelFamily::Gaussian => {
            Ok(-1.0 / (h * h) * (-tau * tau / (2.0 * h * h)).exp())
        }
        _ => Err(ReconError::UnsupportedGradient(format!(
            "family {:?}, nu {}",
            spec.family, spec.nu
        ))),
    }
}

/// Analytic gradient of `k(x, y)` with respect to `x`. Errors for
/// non-differentiable kernels (Matern 1/2, arc-cosine) and tapered specs;
/// callers fall back to finite differences in those cases.
pub fn kernel_gradient(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(ReconError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if !spec.supports_analytic_gradient() {
        return Err(ReconError::UnsupportedGradient(format!(
            "family {:?}, nu {}, tapered: {}",
            spec.family,
            spec.nu,
            spec.taper.is_some()
        )));
    }
    let tau = geom::dist_nd(x, y);
    let g = radial_derivative_over_tau(spec, tau)?;
    Ok(x.iter().zip(y).map(|(a, b)| g * (a - b)).collect())
}

/// Matern spectral density evaluated at radial frequency `|omega|`:
/// `h^{-2 nu} C_{d,nu} (2 nu / h^2 + (2 pi |omega|)^2)^{-(nu + d/2)}`.
pub fn spectral_density(params: &SpectralParams, omega_norm: f64) -> f64 {
    let base = 2.0 * params.nu / (params.h * params.h)
        + (2.0 * PI * omega_norm).powi(2);
    params.h.powf(-2.0 * params.nu) * params.c_dnu
        * base.powf(-(params.nu + params.d as f64 / 2.0))
}

/// Spectral density of the Gaussian limit:
/// `(2 pi)^{d/2} h^d exp(-2 pi^2 h^2 |omega|^2)`.
pub fn gaussian_spectral_density(d: usize, h: f64, omega_norm: f64) -> f64 {
    let df = d as f64;
    (2.0 * PI).powf(df / 2.0) * h.powf(df)
        * (-2.0 * PI * PI * h * h * omega_norm * omega_norm).exp()
}

/// Gram matrix `K[i][j] = k(x_i, y_j)`. With `y = None` the result is
/// exactly symmetric: the upper triangle is computed and mirrored.
pub fn gram_matrix(
    spec: &KernelSpec,
    x: ArrayView2<f64>,
    y: Option<ArrayView2<f64>>,
) -> Result<Array2<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ReconError::InvalidInput("non-finite coordinate in gram input".into()));
    }
    match y {
        Some(y) => {
            if x.ncols() != y.ncols() {
                return Err(ReconError::DimensionMismatch { expected: x.ncols(), got: y.ncols() });
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(ReconError::InvalidInput("non-finite coordinate in gram input".into()));
            }
            let n = x.nrows();
            let m = y.nrows();
            let mut out = Array2::zeros((n, m));
            out.axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .try_for_each(|(i, mut row)| -> Result<()> {
                    let xi = x.row(i);
                    for (j, slot) in row.iter_mut().enumerate() {
                        *slot = eval_kernel(
                            spec,
                            xi.as_slice().unwrap(),
                            y.row(j).as_slice().unwrap(),
                        )?;
                    }
                    Ok(())
                })?;
            Ok(out)
        }
        None => {
            let n = x.nrows();
            let mut out = Array2::zeros((n, n));
            // Row-parallel fill of the upper triangle, then mirror.
            out.axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .try_for_each(|(i, mut row)| -> Result<()> {
                    let xi = x.row(i);
                    for j in i..n {
                        row[j] = eval_kernel(
                            spec,
                            xi.as_slice().unwrap(),
                            x.row(j).as_slice().unwrap(),
                        )?;
                    }
                    Ok(())
                })?;
            for i in 0..n {
                for j in 0..i {
                    out[(i, j)] = out[(j, i)];
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn matern_closed_forms() {
        let m12 = KernelSpec::matern(0.5, 1.0).unwrap();
        assert_eq!(eval_matern(&m12, 0.0).unwrap(), 1.0);
        assert!((eval_matern(&m12, 1.0).unwrap() - E.powi(-1)).abs() < 1e-15);

        let m32 = KernelSpec::matern(1.5, 1.0).unwrap();
        // sqrt(3) tau / h = 1  =>  2 e^{-1}
        assert!((eval_matern(&m32, 1.0 / 3f64.sqrt()).unwrap() - 2.0 * E.powi(-1)).abs() < 1e-15);

        let m52 = KernelSpec::matern(2.5, 1.0).unwrap();
        // sqrt(5) tau / h = 5  =>  e^{-5} (1 + 5 + 25/3)
        let expect = (-5f64).exp() * (1.0 + 5.0 + 25.0 / 3.0);
        assert!((eval_matern(&m52, 5f64.sqrt()).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.0965772).abs() < 1e-6);
    }

    #[test]
    fn matern_strictly_decreasing() {
        for nu in [0.5, 1.5, 2.5] {
            let spec = KernelSpec::matern(nu, 0.7).unwrap();
            let mut prev = eval_matern(&spec, 0.0).unwrap();
            for i in 1..200 {
                let v = eval_matern(&spec, i as f64 * 0.05).unwrap();
                assert!(v < prev, "nu={nu} not decreasing at step {i}");
                prev = v;
            }
        }
    }

    #[test]
    fn gaussian_values() {
        assert_eq!(eval_gaussian(1.0, 0.0).unwrap(), 1.0);
        assert!((eval_gaussian(1.0, 1.0).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        // scale invariance in tau / h
        assert!((eval_gaussian(2.0, 2.0).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn non_finite_tau_rejected() {
        let m12 = KernelSpec::matern(0.5, 1.0).unwrap();
        assert!(eval_matern(&m12, f64::NAN).is_err());
        assert!(eval_gaussian(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn arc_cosine_values() {
        let u = [1.0, 0.0, 0.0];
        let v = [0.0, 1.0, 0.0];
        assert!((eval_arc_cosine(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert!((eval_arc_cosine(&u, &v).unwrap() - 1.0 / PI).abs() < 1e-15);
        let neg = [-1.0, 0.0, 0.0];
        assert!(eval_arc_cosine(&u, &neg).unwrap().abs() < 1e-15);
        assert_eq!(eval_arc_cosine(&[0.0; 3], &u).unwrap(), 0.0);
    }

    #[test]
    fn taper_values() {
        assert_eq!(eval_taper(2.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(eval_taper(2.0, 1.0, 0.5).unwrap(), 0.25);
        assert_eq!(eval_taper(2.0, 1.0, 1.5).unwrap(), 0.0);
        assert_eq!(eval_taper(2.0, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn dispatch_with_taper() {
        let spec = KernelSpec::matern(0.5, 1.0).unwrap().with_taper(2.0, 1.0).unwrap();
        let x = [0.0, 0.0, 0.0];
        let y = [0.5, 0.0, 0.0];
        let got = eval_kernel(&spec, &x, &y).unwrap();
        assert!((got - (-0.5f64).exp() * 0.25).abs() < 1e-15);
        assert!((got - 0.1516327).abs() < 1e-6);
        assert_eq!(eval_kernel(&spec, &x, &x).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let spec = KernelSpec::matern(0.5, 1.0).unwrap();
        assert!(matches!(
            eval_kernel(&spec, &[0.0, 0.0], &[0.0, 0.0, 0.0]),
            Err(ReconError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradient_closed_forms() {
        let m32 = KernelSpec::matern(1.5, 1.0).unwrap();
        let zero = kernel_gradient(&m32, &[0.3, 0.1, -0.2], &[0.3, 0.1, -0.2]).unwrap();
        assert_eq!(zero, vec![0.0, 0.0, 0.0]);

        // x - y = (1/sqrt(3), 0, 0): grad_x = -3 (x-y) e^{-sqrt(3) tau} = (-sqrt(3) e^{-1}, 0, 0)
        let s = 1.0 / 3f64.sqrt();
        let g = kernel_gradient(&m32, &[s, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((g[0] - (-3f64.sqrt() * E.powi(-1))).abs() < 1e-14, "got {}", g[0]);
        assert!(g[1] == 0.0 && g[2] == 0.0);

        let gauss = KernelSpec::gaussian(1.0).unwrap();
        let g = kernel_gradient(&gauss, &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((g[0] - (-(-0.5f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn gradient_unsupported_specs() {
        let m12 = KernelSpec::matern(0.5, 1.0).unwrap();
        assert!(matches!(
            kernel_gradient(&m12, &[1.0, 0.0, 0.0], &[0.0; 3]),
            Err(ReconError::UnsupportedGradient(_))
        ));
        assert!(matches!(
            kernel_gradient(&KernelSpec::arc_cosine(), &[1.0, 0.0, 0.0], &[0.0; 3]),
            Err(ReconError::UnsupportedGradient(_))
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let specs = [
            KernelSpec::matern(1.5, 0.8).unwrap(),
            KernelSpec::matern(2.5, 1.3).unwrap(),
            KernelSpec::gaussian(0.9).unwrap(),
        ];
        let step = 1e-5;
        for spec in &specs {
            for _ in 0..100 {
                let y: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let dir: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let dir = geom::normalize(dir).unwrap();
                let r = rng.gen_range(0.1..2.0);
                let x = geom::add(y, geom::scale(dir, r));
                let g = kernel_gradient(spec, &x, &y).unwrap();
                for axis in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[axis] += step;
                    xm[axis] -= step;
                    let fd = (eval_kernel(spec, &xp, &y).unwrap()
                        - eval_kernel(spec, &xm, &y).unwrap())
                        / (2.0 * step);
                    let scale = geom::norm_nd(&g).max(1e-3);
                    assert!(
                        (g[axis] - fd).abs() / scale < 1e-5,
                        "spec {spec:?}, axis {axis}: analytic {} vs fd {fd}",
                        g[axis]
                    );
                }
            }
        }
    }

    #[test]
    fn spectral_density_basics() {
        let p = SpectralParams::new(1, 0.5, 1.0).unwrap();
        // C_{1,1/2} = 2, so p(0) = 2 * (1)^{-1} = 2
        assert!((p.c_dnu - 2.0).abs() < 1e-12);
        let at0 = spectral_density(&p, 0.0);
        assert!((at0 - 2.0).abs() < 1e-12);
        let mut prev = at0;
        for i in 1..100 {
            let v = spectral_density(&p, i as f64 * 0.1);
            assert!(v < prev);
            prev = v;
        }
        assert!(SpectralParams::new(1, f64::INFINITY, 1.0).is_err());
    }

    /// Composite Simpson over [a, b] with n (even) intervals.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        assert!(n % 2 == 0);
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(a + i as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn spectral_density_integrates_to_one() {
        // For nu=1/2, h=1, d=1: p(w) = 2 / (1 + 4 pi^2 w^2), whose tail
        // integral past omega_max is known in closed form.
        let p = SpectralParams::new(1, 0.5, 1.0).unwrap();
        let omega_max = 2000.0;
        let body = simpson(|w| spectral_density(&p, w.abs()), -omega_max, omega_max, 2_000_000);
        let tail = 2.0 * (1.0 / PI) * (PI / 2.0 - (2.0 * PI * omega_max).atan());
        assert!((body + tail - 1.0).abs() < 1e-8, "integral {}", body + tail);
    }

    #[test]
    fn gaussian_spectrum_integrates_to_one() {
        let h = 0.7;
        let omega_max = 10.0;
        let n = 100_000usize;
        let dw = 2.0 * omega_max / n as f64;
        let mut sum = 0.0;
        for i in 0..=n {
            let w = -omega_max + i as f64 * dw;
            sum += gaussian_spectral_density(1, h, w.abs()) * dw;
        }
        assert!((sum - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gram_matrix_small_cases() {
        let spec = KernelSpec::matern(0.5, 1.0).unwrap();
        let single = array![[0.2, 0.4, 0.1]];
        let k = gram_matrix(&spec, single.view(), None).unwrap();
        assert_eq!(k.shape(), &[1, 1]);
        assert_eq!(k[(0, 0)], 1.0);

        let x = array![[0.0], [1.0]];
        let k = gram_matrix(&spec, x.view(), None).unwrap();
        assert!((k[(0, 1)] - E.powi(-1)).abs() < 1e-15);
        assert_eq!(k[(0, 1)], k[(1, 0)]);
        assert_eq!(k[(0, 0)], 1.0);
    }

    #[test]
    fn gram_matrix_exact_symmetry() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((60, 3), |_| rng.gen_range(0.0..1.0));
        for spec in [
            KernelSpec::matern(1.5, 0.5).unwrap(),
            KernelSpec::arc_cosine(),
        ] {
            let k = gram_matrix(&spec, x.view(), None).unwrap();
            for i in 0..60 {
                for j in 0..60 {
                    assert_eq!(k[(i, j)], k[(j, i)]);
                }
            }
        }
    }

    #[test]
    fn taper_produces_exact_zeros() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let spec = KernelSpec::matern(0.5, 1.0).unwrap().with_taper(2.0, 0.3).unwrap();
        let x = Array2::from_shape_fn((80, 3), |_| rng.gen_range(0.0..1.0));
        let k = gram_matrix(&spec, x.view(), None).unwrap();
        for i in 0..80 {
            for j in 0..80 {
                let d = geom::dist_nd(x.row(i).as_slice().unwrap(), x.row(j).as_slice().unwrap());
                if d >= 0.3 {
                    assert_eq!(k[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn stationarity_and_arc_cosine_translation_failure() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let y: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let t: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            for spec in [KernelSpec::matern(1.5, 0.8).unwrap(), KernelSpec::gaussian(1.2).unwrap()] {
                let a = eval_kernel(&spec, &x, &y).unwrap();
                let b = eval_kernel(&spec, &geom::add(x, t), &geom::add(y, t)).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
        // Rotation invariance (rotation about z by a random angle) holds for
        // arc-cosine; translation invariance must fail for generic t.
        let rot = |v: [f64; 3], a: f64| -> [f64; 3] {
            [v[0] * a.cos() - v[1] * a.sin(), v[0] * a.sin() + v[1] * a.cos(), v[2]]
        };
        let ac = KernelSpec::arc_cosine();
        let mut translation_differs = false;
        for _ in 0..50 {
            let x: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let y: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let a = rng.gen_range(0.0..PI);
            let k0 = eval_kernel(&ac, &x, &y).unwrap();
            let kr = eval_kernel(&ac, &rot(x, a), &rot(y, a)).unwrap();
            assert!((k0 - kr).abs() <= 1e-10 * k0.abs().max(1.0));
            let t: [f64; 3] = std::array::from_fn(|_| rng.gen_range(1.0..2.0));
            let kt = eval_kernel(&ac, &geom::add(x, t), &geom::add(y, t)).unwrap();
            if (k0 - kt).abs() > 1e-6 {
                translation_differs = true;
            }
        }
        assert!(translation_differs, "arc-cosine must not be translation invariant");
    }

    #[test]
    fn positive_definiteness_random_point_sets() {
        use ndarray_linalg::Eigh;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let specs = [
            KernelSpec::matern(0.5, 1.0).unwrap(),
            KernelSpec::matern(1.5, 0.5).unwrap(),
            KernelSpec::matern(2.5, 2.0).unwrap(),
            KernelSpec::gaussian(1.0).unwrap(),
            KernelSpec::arc_cosine(),
            KernelSpec::matern(0.5, 1.0).unwrap().with_taper(2.0, 0.5).unwrap(),
        ];
        // 200 random point sets spread over the spec list.
        for trial in 0..200 {
            let n = 10 + (trial * 7) % 291;
            let x = Array2::from_shape_fn((n, 3), |_| rng.gen_range(0.0..1.0));
            let spec = &specs[trial % specs.len()];
            let mut k = gram_matrix(spec, x.view(), None).unwrap();
            for i in 0..n {
                k[(i, i)] += 1e-10;
            }
            let (vals, _) = k.eigh(ndarray_linalg::UPLO::Lower).unwrap();
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-8, "trial {trial}: min eigenvalue {min}");
        }
    }

    #[test]
    fn spectral_duality_reconstructs_kernel() {
        // In d=1 the Fourier transform of the spectral density must give back
        // Phi_nu(tau); trapezoid quadrature over a wide frequency range.
        for nu in [0.5, 1.5] {
            let p = SpectralParams::new(1, nu, 1.0).unwrap();
            let spec = KernelSpec::matern(nu, 1.0).unwrap();
            let omega_max = if nu == 0.5 { 20_000.0 } else { 200.0 };
            let n = if nu == 0.5 { 8_000_000 } else { 2_000_000 };
            for tau in [0.0, 0.5, 1.0, 2.0] {
                let mut sum = simpson(
                    |w| spectral_density(&p, w.abs()) * (2.0 * PI * w * tau).cos(),
                    -omega_max,
                    omega_max,
                    n,
                );
                if nu == 0.5 && tau == 0.0 {
                    // non-oscillatory tail of 2/(1 + 4 pi^2 w^2)
                    sum += 2.0 * (1.0 / PI) * (PI / 2.0 - (2.0 * PI * omega_max).atan());
                }
                let want = eval_matern(&spec, tau).unwrap();
                assert!(
                    (sum - want).abs() < 1e-6,
                    "nu={nu}, tau={tau}: {sum} vs {want}"
                );
            }
        }
    }
}
