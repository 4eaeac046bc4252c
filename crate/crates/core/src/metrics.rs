//! Mesh comparison metrics: Chamfer, Hausdorff, F-score and normal
//! consistency, computed over area-weighted surface samples.

use crate::error::{ReconError, Result};
use crate::geom::{self, Vec3};
use crate::kdtree::KdTree;
use crate::mesher::TriangleMesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Default number of surface samples per mesh for metric evaluation.
pub const DEFAULT_SAMPLE_COUNT: usize = 100_000;
/// Default F-score threshold.
pub const DEFAULT_F_SCORE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct SampledSurface {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub chamfer_x1000: f64,
    pub hausdorff: f64,
    pub f_score: f64,
    pub normal_consistency: f64,
    pub sample_count: usize,
}

/// Area-weighted uniform sampling of the mesh surface. Normals are taken
/// from the containing face. Deterministic for a fixed seed.
pub fn sample_mesh(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<SampledSurface> {
    if n == 0 {
        return Err(ReconError::InvalidInput("sample count must be >= 1".into()));
    }
    mesh.validate()?;
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut face_normals = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in &mesh.faces {
        let e1 = geom::sub(mesh.vertices[f[1]], mesh.vertices[f[0]]);
        let e2 = geom::sub(mesh.vertices[f[2]], mesh.vertices[f[0]]);
        let cross = geom::cross(e1, e2);
        total += 0.5 * geom::norm(cross);
        cumulative.push(total);
        face_normals.push(geom::normalize(cross).unwrap_or([0.0, 0.0, 1.0]));
    }
    if !(total > 0.0) {
        return Err(ReconError::InvalidInput("mesh has zero total area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.gen_range(0.0..total);
        let fi = cumulative.partition_point(|&c| c <= target).min(mesh.faces.len() - 1);
        let f = mesh.faces[fi];
        // square-root trick for a uniform barycentric sample
        let su = rng.gen_range(0.0..1.0f64).sqrt();
        let v = rng.gen_range(0.0..1.0f64);
        let (w0, w1, w2) = (1.0 - su, su * (1.0 - v), su * v);
        let p = geom::add(
            geom::add(
                geom::scale(mesh.vertices[f[0]], w0),
                geom::scale(mesh.vertices[f[1]], w1),
            ),
            geom::scale(mesh.vertices[f[2]], w2),
        );
        points.push(p);
        normals.push(face_normals[fi]);
    }
    Ok(SampledSurface { points, normals })
}

impl SampledSurface {
    pub fn from_cloud(cloud: &crate::cloud::OrientedPointCloud) -> Self {
        Self { points: cloud.points.clone(), normals: cloud.normals.clone() }
    }
}

/// Nearest-neighbor distance and index from every point of `from` into `to`.
fn nn_pairs(from: &SampledSurface, to: &SampledSurface) -> Vec<(usize, f64)> {
    let tree = KdTree::build(&to.points);
    from.points
        .par_iter()
        .map(|&p| tree.nearest(p).expect("non-empty surface"))
        .collect()
}

/// Symmetric Chamfer distance: half the sum of the two directed mean
/// nearest-neighbor distances.
pub fn chamfer(a: &SampledSurface, b: &SampledSurface) -> f64 {
    let ab = nn_pairs(a, b);
    let ba = nn_pairs(b, a);
    let mean = |v: &[(usize, f64)]| v.iter().map(|&(_, d)| d).sum::<f64>() / v.len() as f64;
    0.5 * (mean(&ab) + mean(&ba))
}

pub fn hausdorff(a: &SampledSurface, b: &SampledSurface) -> f64 {
    let worst = |v: Vec<(usize, f64)>| v.into_iter().map(|(_, d)| d).fold(0.0f64, f64::max);
    worst(nn_pairs(a, b)).max(worst(nn_pairs(b, a)))
}

pub fn f_score(pred: &SampledSurface, gt: &SampledSurface, threshold: f64) -> f64 {
    assert!(threshold > 0.0);
    let frac_within = |v: Vec<(usize, f64)>| {
        let hits = v.iter().filter(|&&(_, d)| d <= threshold).count();
        hits as f64 / v.len() as f64
    };
    let precision = frac_within(nn_pairs(pred, gt));
    let recall = frac_within(nn_pairs(gt, pred));
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Orientation-agnostic normal agreement over nearest-neighbor pairs,
/// symmetrized over both directions.
pub fn normal_consistency(pred: &SampledSurface, gt: &SampledSurface) -> f64 {
    let directed = |from: &SampledSurface, to: &SampledSurface| {
        let pairs = nn_pairs(from, to);
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(j, _))| geom::dot(from.normals[i], to.normals[j]).abs())
            .sum::<f64>()
            / pairs.len() as f64
    };
    0.5 * (directed(pred, gt) + directed(gt, pred))
}

/// All four metrics in one report (Chamfer scaled by 1000 as reported).
pub fn evaluate(pred: &SampledSurface, gt: &SampledSurface, threshold: f64) -> MetricsReport {
    MetricsReport {
        chamfer_x1000: 1000.0 * chamfer(pred, gt),
        hausdorff: hausdorff(pred, gt),
        f_score: f_score(pred, gt, threshold),
        normal_consistency: normal_consistency(pred, gt),
        sample_count: pred.points.len(),
    }
}
