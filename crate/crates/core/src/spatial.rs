//! Uniform spatial hash grid for fixed-radius neighbor queries in 3D.

use ndarray::ArrayView2;
use std::collections::HashMap;

pub struct HashGrid {
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl HashGrid {
    pub fn build(points: ArrayView2<f64>, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite());
        let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, row) in points.outer_iter().enumerate() {
            buckets.entry(Self::key(row[0], row[1], row[2], cell)).or_default().push(i);
        }
        Self { cell, buckets }
    }

    #[inline]
    fn key(x: f64, y: f64, z: f64, cell: f64) -> (i64, i64, i64) {
        (
            (x / cell).floor() as i64,
            (y / cell).floor() as i64,
            (z / cell).floor() as i64,
        )
    }

    /// Indices of all points within `radius` of `points[i]` (inclusive of
    /// `i` itself), sorted ascending. `radius` must be <= the cell size.
    pub fn neighbors_within(&self, points: ArrayView2<f64>, i: usize, radius: f64) -> Vec<usize> {
        debug_assert!(radius <= self.cell * (1.0 + 1e-12));
        let p = points.row(i);
        let (kx, ky, kz) = Self::key(p[0], p[1], p[2], self.cell);
        let r2 = radius * radius;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.buckets.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &j in bucket {
                            let q = points.row(j);
                            let d2 = (p[0] - q[0]).powi(2)
                                + (p[1] - q[1]).powi(2)
                                + (p[2] - q[2]).powi(2);
                            if d2 < r2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Minimum distance from `points[i]` to any other point, or infinity if
    /// nothing lies in the surrounding cells.
    pub fn nearest_other_distance(&self, points: ArrayView2<f64>, i: usize) -> f64 {
        let p = points.row(i);
        let (kx, ky, kz) = Self::key(p[0], p[1], p[2], self.cell);
        let mut best = f64::INFINITY;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.buckets.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &j in bucket {
                            if j == i {
                                continue;
                            }
                            let q = points.row(j);
                            let d2 = (p[0] - q[0]).powi(2)
                                + (p[1] - q[1]).powi(2)
                                + (p[2] - q[2]).powi(2);
                            best = best.min(d2);
                        }
                    }
                }
            }
        }
        best.sqrt()
    }
}
