//! Oriented point cloud input type.

use crate::error::{ReconError, Result};
use crate::geom::{self, Vec3};

/// Surface samples with outward unit normals. Normals are renormalized on
/// ingest; zero-length normals and non-finite coordinates are rejected.
#[derive(Debug, Clone)]
pub struct OrientedPointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl OrientedPointCloud {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(ReconError::InvalidInput("point cloud is empty".into()));
        }
        if points.len() != normals.len() {
            return Err(ReconError::InvalidInput(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        let mut unit_normals = Vec::with_capacity(normals.len());
        for (i, (p, n)) in points.iter().zip(&normals).enumerate() {
            if p.iter().chain(n.iter()).any(|v| !v.is_finite()) {
                return Err(ReconError::InvalidInput(format!(
                    "non-finite coordinate at row {i}"
                )));
            }
            match geom::normalize(*n) {
                Some(u) => unit_normals.push(u),
                None => {
                    return Err(ReconError::InvalidInput(format!(
                        "zero-length normal at row {i}"
                    )))
                }
            }
        }
        Ok(Self { points, normals: unit_normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounding box (min corner, max corner).
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }
}
