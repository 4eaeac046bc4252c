//! Evaluation of the reconstructed implicit function and its gradient.

use crate::error::{ReconError, Result};
use crate::fastmath;
use crate::geom::Vec3;
use crate::kernel::{self, KernelSpec};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

/// Isotropic scale + translation mapping world coordinates into the
/// normalized frame the solver works in: `x_n = scale * x_w + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, translation: [0.0; 3] }
    }

    #[inline]
    pub fn to_normalized(&self, x: Vec3) -> Vec3 {
        [
            self.scale * x[0] + self.translation[0],
            self.scale * x[1] + self.translation[1],
            self.scale * x[2] + self.translation[2],
        ]
    }

    #[inline]
    pub fn to_world(&self, x: Vec3) -> Vec3 {
        [
            (x[0] - self.translation[0]) / self.scale,
            (x[1] - self.translation[1]) / self.scale,
            (x[2] - self.translation[2]) / self.scale,
        ]
    }
}

/// Representer-form solution: `f(x) = sum_i alpha_i k(x, center_i)`, with the
/// centers stored in normalized coordinates.
#[derive(Debug, Clone)]
pub struct ImplicitField {
    pub centers: Array2<f64>,
    pub alpha: Array1<f64>,
    pub spec: KernelSpec,
    pub transform: SimilarityTransform,
}

/// Gradient evaluation mode.
#[derive(Debug, Clone, Copy)]
pub enum GradientMode {
    Analytic,
    CentralDiff(f64),
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Centers are accumulated in fixed-size tiles, ascending by index, so the
/// summation order (and hence the result, bit for bit) never depends on
/// thread count.
const CENTER_TILE: usize = 1024;

/// Radial profile with the family/smoothness dispatch resolved once, for
/// the per-node center loops. Formulas mirror `kernel::eval_matern` and
/// `kernel::eval_gaussian` exactly.
#[derive(Clone, Copy)]
enum RadialProfile {
    /// `s` is the precomputed rate: `1/h`, `sqrt(3)/h` or `sqrt(5)/h`.
    Matern12 { s: f64 },
    Matern32 { s: f64 },
    Matern52 { s: f64 },
    /// `s = 1 / (2 h^2)`.
    Gaussian { s: f64 },
}

impl RadialProfile {
    fn of(spec: &KernelSpec) -> Self {
        match spec.family {
            kernel::KernelFamily::Gaussian => {
                Self::Gaussian { s: 1.0 / (2.0 * spec.h * spec.h) }
            }
            kernel::KernelFamily::Matern => match spec.nu {
                x if x == 0.5 => Self::Matern12 { s: 1.0 / spec.h },
                x if x == 1.5 => Self::Matern32 { s: 3f64.sqrt() / spec.h },
                _ => Self::Matern52 { s: 5f64.sqrt() / spec.h },
            },
            kernel::KernelFamily::ArcCosine => {
                unreachable!("arc-cosine handled before profile dispatch")
            }
        }
    }

    #[inline(always)]
    fn eval(self, tau: f64) -> f64 {
        match self {
            Self::Matern12 { s } => (-tau * s).exp(),
            Self::Matern32 { s } => {
                let r = tau * s;
                (-r).exp() * (1.0 + r)
            }
            Self::Matern52 { s } => {
                let r = tau * s;
                (-r).exp() * (1.0 + r + r * r / 3.0)
            }
            Self::Gaussian { s } => (-tau * tau * s).exp(),
        }
    }
}

impl ImplicitField {
    pub fn new(
        centers: Array2<f64>,
        alpha: Array1<f64>,
        spec: KernelSpec,
        transform: SimilarityTransform,
    ) -> Result<Self> {
        if centers.nrows() != alpha.len() {
            return Err(ReconError::InvalidInput(format!(
                "{} centers but {} coefficients",
                centers.nrows(),
                alpha.len()
            )));
        }
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(ReconError::InvalidInput("non-finite coefficient".into()));
        }
        Ok(Self { centers, alpha, spec, transform })
    }

    /// Field value at a point given in normalized coordinates. The kernel
    /// dispatch is hoisted out of the center loop; the formulas are the
    /// same as in `kernel::eval_radial` (inputs are validated at
    /// construction time, so the Result plumbing is unnecessary here).
    pub fn eval_normalized(&self, x: Vec3) -> f64 {
        let n = self.centers.nrows();
        let centers = self.centers.as_slice().unwrap();
        let alpha = self.alpha.as_slice().unwrap();

        if self.spec.family == kernel::KernelFamily::ArcCosine {
            // Homogeneous coordinates (x, 1): see `kernel::lift_homogeneous`.
            let xl = [x[0], x[1], x[2], 1.0];
            let mut total = 0.0;
            for tile_start in (0..n).step_by(CENTER_TILE) {
                let tile_end = (tile_start + CENTER_TILE).min(n);
                let mut acc = 0.0;
                for i in tile_start..tile_end {
                    let c = &centers[3 * i..3 * i + 3];
                    let cl = [c[0], c[1], c[2], 1.0];
                    acc += alpha[i] * kernel::eval_arc_cosine(&xl, &cl).unwrap_or(0.0);
                }
                total += acc;
            }
            return total;
        }

        let radial = RadialProfile::of(&self.spec);
        if let Some(t) = self.spec.taper {
            // Tapered path: the taper needs the raw distance, so keep the
            // straightforward scalar loop here.
            let mut total = 0.0;
            for tile_start in (0..n).step_by(CENTER_TILE) {
                let tile_end = (tile_start + CENTER_TILE).min(n);
                let mut acc = 0.0;
                for i in tile_start..tile_end {
                    let c = &centers[3 * i..3 * i + 3];
                    let tau = ((x[0] - c[0]).powi(2)
                        + (x[1] - c[1]).powi(2)
                        + (x[2] - c[2]).powi(2))
                    .sqrt();
                    let window = if tau >= t.h_prime {
                        0.0
                    } else if t.nu_prime == 2.0 {
                        let u = 1.0 - tau / t.h_prime;
                        u * u
                    } else {
                        (1.0 - tau / t.h_prime).powf(t.nu_prime)
                    };
                    acc += alpha[i] * radial.eval(tau) * window;
                }
                total += acc;
            }
            return total;
        }

        // Untapered path: the exponential dominates the cost, so build the
        // scaled-distance arguments for a whole block and evaluate the
        // exponentials in one batched call.
        const BLOCK: usize = 256;
        let mut rbuf = [0.0f64; BLOCK];
        let mut ebuf = [0.0f64; BLOCK];
        let gaussian = matches!(radial, RadialProfile::Gaussian { .. });
        let s = match radial {
            RadialProfile::Matern12 { s }
            | RadialProfile::Matern32 { s }
            | RadialProfile::Matern52 { s }
            | RadialProfile::Gaussian { s } => s,
        };
        let mut total = 0.0;
        for tile_start in (0..n).step_by(CENTER_TILE) {
            let tile_end = (tile_start + CENTER_TILE).min(n);
            let mut acc = 0.0;
            for block_start in (tile_start..tile_end).step_by(BLOCK) {
                let m = (tile_end - block_start).min(BLOCK);
                for j in 0..m {
                    let c = &centers[3 * (block_start + j)..3 * (block_start + j) + 3];
                    let sq = (x[0] - c[0]) * (x[0] - c[0])
                        + (x[1] - c[1]) * (x[1] - c[1])
                        + (x[2] - c[2]) * (x[2] - c[2]);
                    rbuf[j] = if gaussian { sq * s } else { sq.sqrt() * s };
                }
                fastmath::exp_neg(&rbuf[..m], &mut ebuf[..m]);
                let a = &alpha[block_start..block_start + m];
                match radial {
                    RadialProfile::Matern12 { .. } | RadialProfile::Gaussian { .. } => {
                        for j in 0..m {
                            acc += a[j] * ebuf[j];
                        }
                    }
                    RadialProfile::Matern32 { .. } => {
                        for j in 0..m {
                            acc += a[j] * ebuf[j] * (1.0 + rbuf[j]);
                        }
                    }
                    RadialProfile::Matern52 { .. } => {
                        for j in 0..m {
                            let r = rbuf[j];
                            acc += a[j] * ebuf[j] * (1.0 + r + r * r / 3.0);
                        }
                    }
                }
            }
            total += acc;
        }
        total
    }

    /// Field value at `x`; `in_world_coords` selects whether `x` is given in
    /// world or normalized coordinates.
    pub fn eval(&self, x: Vec3, in_world_coords: bool) -> Result<f64> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ReconError::InvalidInput("non-finite query point".into()));
        }
        let p = if in_world_coords { self.transform.to_normalized(x) } else { x };
        Ok(self.eval_normalized(p))
    }

    /// Gradient with respect to normalized coordinates at a normalized-frame
    /// point. Under the similarity transform the direction is the same in
    /// world coordinates (the scale is positive).
    pub fn gradient(&self, x: Vec3, mode: GradientMode) -> Result<Vec3> {
        match mode {
            GradientMode::Analytic => {
                if !self.spec.supports_analytic_gradient() {
                    return Err(ReconError::UnsupportedGradient(format!(
                        "family {:?}, nu {}",
                        self.spec.family, self.spec.nu
                    )));
                }
                let centers = self.centers.as_slice().unwrap();
                let alpha = self.alpha.as_slice().unwrap();
                let mut g = [0.0; 3];
                for (i, c) in centers.chunks_exact(3).enumerate() {
                    let d = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
                    let tau = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    let w = alpha[i] * kernel::radial_derivative_over_tau(&self.spec, tau)?;
                    g[0] += w * d[0];
                    g[1] += w * d[1];
                    g[2] += w * d[2];
                }
                Ok(g)
            }
            GradientMode::CentralDiff(step) => {
                let mut g = [0.0; 3];
                for axis in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[axis] += step;
                    xm[axis] -= step;
                    g[axis] =
                        (self.eval_normalized(xp) - self.eval_normalized(xm)) / (2.0 * step);
                }
                Ok(g)
            }
        }
    }
}

/// Regular scalar lattice, values stored x-fastest.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub origin: Vec3,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.nx * (iy + self.ny * iz)
    }

    #[inline]
    pub fn value(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.index(ix, iy, iz)]
    }

    #[inline]
    pub fn node(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        [
            self.origin[0] + ix as f64 * self.spacing,
            self.origin[1] + iy as f64 * self.spacing,
            self.origin[2] + iz as f64 * self.spacing,
        ]
    }
}

const MAX_GRID_NODES: usize = 1 << 27;

/// Evaluates the field at every node of a cubic lattice with `resolution`
/// nodes per axis spanning `[lo, hi]` in normalized coordinates. Parallel
/// over nodes; bit-identical to calling `eval_normalized` per node.
pub fn eval_grid(
    field: &ImplicitField,
    resolution: usize,
    lo: f64,
    hi: f64,
) -> Result<ScalarGrid> {
    if resolution < 2 {
        return Err(ReconError::InvalidInput("grid resolution must be >= 2 per axis".into()));
    }
    let total = resolution * resolution * resolution;
    if total > MAX_GRID_NODES {
        return Err(ReconError::Capacity(format!(
            "grid of {total} nodes exceeds the {MAX_GRID_NODES}-node cap"
        )));
    }
    let spacing = (hi - lo) / (resolution - 1) as f64;
    let origin = [lo, lo, lo];
    let mut values = vec![0.0; total];
    values
        .par_chunks_mut(resolution)
        .enumerate()
        .for_each(|(chunk, row)| {
            let iz = chunk / resolution;
            let iy = chunk % resolution;
            let y = lo + iy as f64 * spacing;
            let z = lo + iz as f64 * spacing;
            for (ix, slot) in row.iter_mut().enumerate() {
                let x = lo + ix as f64 * spacing;
                *slot = field.eval_normalized([x, y, z]);
            }
        });
    Ok(ScalarGrid { nx: resolution, ny: resolution, nz: resolution, origin, spacing, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn single_center_field(spec: KernelSpec) -> ImplicitField {
        ImplicitField::new(
            array![[0.1, -0.2, 0.3]],
            Array1::from(vec![1.0]),
            spec,
            SimilarityTransform::identity(),
        )
        .unwrap()
    }

    #[test]
    fn single_center_values() {
        let f = single_center_field(KernelSpec::matern(0.5, 1.0).unwrap());
        assert_eq!(f.eval([0.1, -0.2, 0.3], false).unwrap(), 1.0);
        let at_dist_one = f.eval([1.1, -0.2, 0.3], false).unwrap();
        assert!((at_dist_one - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_alpha_is_zero_everywhere() {
        let f = ImplicitField::new(
            array![[0.0, 0.0, 0.0], [0.4, 0.0, 0.0]],
            Array1::zeros(2),
            KernelSpec::matern(1.5, 1.0).unwrap(),
            SimilarityTransform::identity(),
        )
        .unwrap();
        for p in [[0.0; 3], [0.3, 0.2, -0.5]] {
            assert_eq!(f.eval(p, false).unwrap(), 0.0);
        }
    }

    #[test]
    fn grid_matches_pointwise_exactly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 2100; // more than two accumulation tiles
        let centers = ndarray::Array2::from_shape_fn((n, 3), |_| rng.gen_range(-0.4..0.4));
        let alpha = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let f = ImplicitField::new(
            centers,
            alpha,
            KernelSpec::matern(1.5, 0.7).unwrap(),
            SimilarityTransform::identity(),
        )
        .unwrap();
        let g = eval_grid(&f, 16, -0.55, 0.55).unwrap();
        for iz in 0..16 {
            for iy in 0..16 {
                for ix in 0..16 {
                    let p = g.node(ix, iy, iz);
                    assert_eq!(g.value(ix, iy, iz), f.eval_normalized(p));
                }
            }
        }
    }

    #[test]
    fn grid_far_from_tapered_centers_is_zero() {
        let f = single_center_field(
            KernelSpec::matern(0.5, 1.0).unwrap().with_taper(2.0, 0.2).unwrap(),
        );
        let g = eval_grid(&f, 8, 5.0, 6.0).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_field_gradient_vanishes_at_origin() {
        let f = ImplicitField::new(
            array![[0.3, 0.0, 0.0], [-0.3, 0.0, 0.0]],
            Array1::from(vec![1.0, 1.0]),
            KernelSpec::matern(1.5, 1.0).unwrap(),
            SimilarityTransform::identity(),
        )
        .unwrap();
        let g = f.gradient([0.0; 3], GradientMode::Analytic).unwrap();
        assert!(crate::geom::norm(g) < 1e-14);
    }

    #[test]
    fn analytic_gradient_matches_central_diff() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let centers = ndarray::Array2::from_shape_fn((40, 3), |_| rng.gen_range(-0.5..0.5));
        let alpha = Array1::from_shape_fn(40, |_| rng.gen_range(-1.0..1.0));
        let f = ImplicitField::new(
            centers,
            alpha,
            KernelSpec::matern(1.5, 0.8).unwrap(),
            SimilarityTransform::identity(),
        )
        .unwrap();
        for _ in 0..20 {
            let p: Vec3 = std::array::from_fn(|_| rng.gen_range(-0.6..0.6));
            let ga = f.gradient(p, GradientMode::Analytic).unwrap();
            let gd = f.gradient(p, GradientMode::CentralDiff(1e-5)).unwrap();
            let scale = crate::geom::norm(ga).max(1e-6);
            for a in 0..3 {
                assert!((ga[a] - gd[a]).abs() / scale < 1e-5);
            }
        }
    }

    #[test]
    fn unsupported_analytic_gradient_errors() {
        let f = single_center_field(KernelSpec::matern(0.5, 1.0).unwrap());
        assert!(matches!(
            f.gradient([0.5, 0.0, 0.0], GradientMode::Analytic),
            Err(ReconError::UnsupportedGradient(_))
        ));
    }

    #[test]
    fn linearity_and_translation_equivariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let centers = ndarray::Array2::from_shape_fn((30, 3), |_| rng.gen_range(-0.5..0.5));
        let a1 = Array1::from_shape_fn(30, |_| rng.gen_range(-1.0..1.0));
        let a2 = Array1::from_shape_fn(30, |_| rng.gen_range(-1.0..1.0));
        let spec = KernelSpec::matern(2.5, 0.9).unwrap();
        let mk = |alpha: &Array1<f64>, centers: &ndarray::Array2<f64>| {
            ImplicitField::new(
                centers.clone(),
                alpha.clone(),
                spec,
                SimilarityTransform::identity(),
            )
            .unwrap()
        };
        let f1 = mk(&a1, &centers);
        let f2 = mk(&a2, &centers);
        let f12 = mk(&(&a1 + &a2), &centers);
        let t = [0.7, -0.4, 0.2];
        let mut shifted = centers.clone();
        for mut row in shifted.outer_iter_mut() {
            for a in 0..3 {
                row[a] += t[a];
            }
        }
        let f1s = mk(&a1, &shifted);
        for _ in 0..30 {
            let p: Vec3 = std::array::from_fn(|_| rng.gen_range(-0.8..0.8));
            let v1 = f1.eval_normalized(p);
            let v2 = f2.eval_normalized(p);
            let v12 = f12.eval_normalized(p);
            assert!((v12 - (v1 + v2)).abs() <= 1e-12 * v12.abs().max(1.0));
            let vs = f1s.eval_normalized(crate::geom::add(p, t));
            assert!((vs - v1).abs() <= 1e-12 * v1.abs().max(1.0));
        }
    }
}
