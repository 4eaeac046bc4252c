//! Seeded synthetic oriented point clouds with analytic ground truth.

use crate::cloud::OrientedPointCloud;
use crate::geom::{self, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

/// Uniform samples on a sphere of the given radius centered at the origin,
/// with exact outward normals.
pub fn sample_sphere(m: usize, radius: f64, seed: u64) -> OrientedPointCloud {
    assert!(m > 0 && radius > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(m);
    let mut normals = Vec::with_capacity(m);
    while points.len() < m {
        let g: Vec3 = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        if let Some(n) = geom::normalize(g) {
            points.push(geom::scale(n, radius));
            normals.push(n);
        }
    }
    OrientedPointCloud::new(points, normals).expect("sphere samples are always valid")
}

/// Area-uniform samples on a torus with major radius `big_r` and minor
/// radius `small_r`, axis along z, centered at the origin. Uniformity in
/// surface area is achieved by rejection on the poloidal angle with
/// acceptance weight proportional to `R + r cos(theta)`.
pub fn sample_torus(m: usize, big_r: f64, small_r: f64, seed: u64) -> OrientedPointCloud {
    assert!(m > 0 && big_r > small_r && small_r > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(m);
    let mut normals = Vec::with_capacity(m);
    while points.len() < m {
        let phi = rng.gen_range(0.0..2.0 * PI);
        let theta = rng.gen_range(0.0..2.0 * PI);
        let accept = (big_r + small_r * theta.cos()) / (big_r + small_r);
        if rng.gen_range(0.0..1.0) > accept {
            continue;
        }
        let (ct, st) = (theta.cos(), theta.sin());
        let (cp, sp) = (phi.cos(), phi.sin());
        points.push([
            (big_r + small_r * ct) * cp,
            (big_r + small_r * ct) * sp,
            small_r * st,
        ]);
        normals.push([ct * cp, ct * sp, st]);
    }
    OrientedPointCloud::new(points, normals).expect("torus samples are always valid")
}

/// Unsigned distance from `p` to the sphere surface.
pub fn sphere_distance(p: Vec3, radius: f64) -> f64 {
    (geom::norm(p) - radius).abs()
}

/// Unsigned distance from `p` to the torus surface.
pub fn torus_distance(p: Vec3, big_r: f64, small_r: f64) -> f64 {
    let q = (p[0] * p[0] + p[1] * p[1]).sqrt() - big_r;
    ((q * q + p[2] * p[2]).sqrt() - small_r).abs()
}
