//! Cloud normalization, isosurface extraction and the end-to-end
//! reconstruction pipeline.

use crate::cloud::OrientedPointCloud;
use crate::error::{ReconError, Result};
use crate::field::{eval_grid, GradientMode, ImplicitField, ScalarGrid, SimilarityTransform};
use crate::geom::{self, Vec3};
use crate::kernel::KernelSpec;
use crate::mc_tables::{CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE};
use crate::solver::{build_system, solve_dense, solve_sparse, SolveOutput, DENSE_CENTER_LIMIT};
use std::collections::HashMap;
use std::time::Instant;

/// Target bounding cube for normalized clouds and the default padding.
pub const DEFAULT_PADDING: f64 = 0.05;
/// Sampling domain of the extraction lattice in normalized coordinates.
pub const GRID_LO: f64 = -0.55;
pub const GRID_HI: f64 = 0.55;

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub vertex_normals: Vec<Vec3>,
}

impl TriangleMesh {
    /// Index-bounds, NaN and degeneracy checks.
    pub fn validate(&self) -> Result<()> {
        let v = self.vertices.len();
        for p in self.vertices.iter().chain(self.vertex_normals.iter()) {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(ReconError::InvalidInput("non-finite mesh vertex".into()));
            }
        }
        for f in &self.faces {
            if f.iter().any(|&i| i >= v) {
                return Err(ReconError::InvalidInput("face index out of bounds".into()));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(ReconError::InvalidInput("degenerate face".into()));
            }
        }
        Ok(())
    }

    /// V - E + F with E counted over unique undirected edges.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.faces.len() as i64
    }

    pub fn total_area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let e1 = geom::sub(self.vertices[f[1]], self.vertices[f[0]]);
                let e2 = geom::sub(self.vertices[f[2]], self.vertices[f[0]]);
                0.5 * geom::norm(geom::cross(e1, e2))
            })
            .sum()
    }
}

/// Isotropically scales and recenters the cloud so its bounding box fits in
/// `[-0.5+padding, 0.5-padding]^3`. Normals are untouched (no rotation).
pub fn normalize(
    cloud: &OrientedPointCloud,
    padding: f64,
) -> Result<(OrientedPointCloud, SimilarityTransform)> {
    let (lo, hi) = cloud.bounds();
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
    if extent <= 0.0 {
        return Err(ReconError::InvalidInput(
            "degenerate cloud: all points identical".into(),
        ));
    }
    let scale = (1.0 - 2.0 * padding) / extent;
    let center = [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ];
    let transform = SimilarityTransform {
        scale,
        translation: geom::scale(center, -scale),
    };
    let points = cloud.points.iter().map(|&p| transform.to_normalized(p)).collect();
    let normalized = OrientedPointCloud::new(points, cloud.normals.clone())?;
    Ok((normalized, transform))
}

/// Central-difference gradient of the grid at a lattice-space position,
/// clamped to the interior. Used for triangle orientation and as a normal
/// fallback when no field is available.
fn grid_gradient(grid: &ScalarGrid, p: Vec3) -> Vec3 {
    let idx = |v: f64, n: usize| -> usize {
        (((v - grid.origin[0]) / grid.spacing).round() as i64)
            .clamp(1, n as i64 - 2) as usize
    };
    let (ix, iy, iz) = (idx(p[0], grid.nx), idx(p[1], grid.ny), idx(p[2], grid.nz));
    let s = 2.0 * grid.spacing;
    [
        (grid.value(ix + 1, iy, iz) - grid.value(ix - 1, iy, iz)) / s,
        (grid.value(ix, iy + 1, iz) - grid.value(ix, iy - 1, iz)) / s,
        (grid.value(ix, iy, iz + 1) - grid.value(ix, iy, iz - 1)) / s,
    ]
}

/// Table-driven marching cubes with linear edge interpolation. Vertices on
/// shared edges are deduplicated; zero-area faces are dropped; triangle
/// winding is chosen so face normals point toward increasing field values.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh> {
    let (min, max) = grid
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if min >= iso || max <= iso {
        return Err(ReconError::EmptySurface { min, max });
    }

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    // (node index, axis) -> vertex id
    let mut edge_cache: HashMap<(usize, usize, usize, u8), usize> = HashMap::new();

    for iz in 0..grid.nz - 1 {
        for iy in 0..grid.ny - 1 {
            for ix in 0..grid.nx - 1 {
                let mut cube = 0usize;
                let mut corner_vals = [0.0; 8];
                for (c, &(dx, dy, dz)) in CORNER_OFFSETS.iter().enumerate() {
                    let v = grid.value(ix + dx, iy + dy, iz + dz);
                    corner_vals[c] = v;
                    if v < iso {
                        cube |= 1 << c;
                    }
                }
                let edges = EDGE_TABLE[cube];
                if edges == 0 {
                    continue;
                }
                let mut edge_vertex = [usize::MAX; 12];
                for e in 0..12 {
                    if edges & (1 << e) == 0 {
                        continue;
                    }
                    let (ca, cb) = EDGE_CORNERS[e];
                    let (ax, ay, az) = CORNER_OFFSETS[ca];
                    let (bx, by, bz) = CORNER_OFFSETS[cb];
                    let na = (ix + ax, iy + ay, iz + az);
                    let nb = (ix + bx, iy + by, iz + bz);
                    // canonical key: lower node plus the axis the edge runs along
                    let (key_node, axis) = if na <= nb {
                        (na, axis_between(na, nb))
                    } else {
                        (nb, axis_between(nb, na))
                    };
                    let key = (key_node.0, key_node.1, key_node.2, axis);
                    let id = *edge_cache.entry(key).or_insert_with(|| {
                        let va = corner_vals[ca];
                        let vb = corner_vals[cb];
                        let t = if (vb - va).abs() < f64::MIN_POSITIVE {
                            0.5
                        } else {
                            ((iso - va) / (vb - va)).clamp(0.0, 1.0)
                        };
                        let pa = grid.node(na.0, na.1, na.2);
                        let pb = grid.node(nb.0, nb.1, nb.2);
                        vertices.push(geom::add(pa, geom::scale(geom::sub(pb, pa), t)));
                        vertices.len() - 1
                    });
                    edge_vertex[e] = id;
                }
                let tri = &TRI_TABLE[cube];
                let mut t = 0;
                while tri[t] >= 0 {
                    let f = [
                        edge_vertex[tri[t] as usize],
                        edge_vertex[tri[t + 1] as usize],
                        edge_vertex[tri[t + 2] as usize],
                    ];
                    t += 3;
                    if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                        continue;
                    }
                    let e1 = geom::sub(vertices[f[1]], vertices[f[0]]);
                    let e2 = geom::sub(vertices[f[2]], vertices[f[0]]);
                    let n = geom::cross(e1, e2);
                    if geom::norm(n) == 0.0 {
                        continue;
                    }
                    let centroid = geom::scale(
                        geom::add(geom::add(vertices[f[0]], vertices[f[1]]), vertices[f[2]]),
                        1.0 / 3.0,
                    );
                    let g = grid_gradient(grid, centroid);
                    if geom::dot(n, g) < 0.0 {
                        faces.push([f[0], f[2], f[1]]);
                    } else {
                        faces.push(f);
                    }
                }
            }
        }
    }

    let vertex_normals = vertices
        .iter()
        .map(|&v| geom::normalize(grid_gradient(grid, v)).unwrap_or([0.0, 0.0, 1.0]))
        .collect();
    let mesh = TriangleMesh { vertices, faces, vertex_normals };
    mesh.validate()?;
    Ok(mesh)
}

fn axis_between(lo: (usize, usize, usize), hi: (usize, usize, usize)) -> u8 {
    if hi.0 > lo.0 {
        0
    } else if hi.1 > lo.1 {
        1
    } else {
        2
    }
}

/// Samples the field over `[-0.55, 0.55]^3` at `resolution` nodes per axis,
/// extracts the `iso` level set, assigns vertex normals from the field
/// gradient (finite differences where no analytic gradient exists) and maps
/// vertices back to world coordinates.
pub fn extract_surface(field: &ImplicitField, resolution: usize, iso: f64) -> Result<TriangleMesh> {
    if !(16..=1024).contains(&resolution) {
        return Err(ReconError::InvalidInput(format!(
            "resolution must be in [16, 1024], got {resolution}"
        )));
    }
    let grid = eval_grid(field, resolution, GRID_LO, GRID_HI)?;
    let mut mesh = marching_cubes(&grid, iso)?;
    let mode = if field.spec.supports_analytic_gradient() {
        GradientMode::Analytic
    } else {
        GradientMode::CentralDiff(crate::field::DEFAULT_FD_STEP)
    };
    for (v, n) in mesh.vertices.iter().zip(mesh.vertex_normals.iter_mut()) {
        let g = field.gradient(*v, mode)?;
        if let Some(u) = geom::normalize(g) {
            *n = u; // points toward increasing f, i.e. outward
        }
    }
    for v in mesh.vertices.iter_mut() {
        *v = field.transform.to_world(*v);
    }
    Ok(mesh)
}

/// Per-stage wall-clock timings and solver diagnostics for a reconstruction.
#[derive(Debug, Clone)]
pub struct ReconStats {
    pub assembly_secs: f64,
    pub solve_secs: f64,
    pub extraction_secs: f64,
    pub relative_residual: f64,
    pub cg_iterations: Option<usize>,
    pub coincident_warning: Option<f64>,
    pub used_sparse_solver: bool,
}

/// Full pipeline: normalize, assemble, solve (sparse when the spec carries a
/// taper and the system is large or dense solving is impossible), extract.
pub fn reconstruct(
    cloud: &OrientedPointCloud,
    spec: &KernelSpec,
    epsilon: f64,
    lambda: f64,
    resolution: usize,
) -> Result<(TriangleMesh, ReconStats)> {
    let t0 = Instant::now();
    let (normalized, transform) = normalize(cloud, DEFAULT_PADDING)?;
    let system = build_system(&normalized, epsilon, lambda)?;
    let assembly_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let use_sparse = spec.taper.is_some();
    if !use_sparse && system.centers.nrows() > DENSE_CENTER_LIMIT {
        return Err(ReconError::Capacity(format!(
            "{} centers exceed the dense limit of {DENSE_CENTER_LIMIT}; add a taper to enable the sparse solver",
            system.centers.nrows()
        )));
    }
    let SolveOutput { mut field, relative_residual, cg_iterations, coincident_warning } =
        if use_sparse {
            solve_sparse(&system, spec, 1e-10, 10 * system.centers.nrows().max(100))?
        } else {
            solve_dense(&system, spec)?
        };
    field.transform = transform;
    let solve_secs = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mesh = extract_surface(&field, resolution, 0.0)?;
    let extraction_secs = t2.elapsed().as_secs_f64();

    Ok((
        mesh,
        ReconStats {
            assembly_secs,
            solve_secs,
            extraction_secs,
            relative_residual,
            cg_iterations,
            coincident_warning,
            used_sparse_solver: use_sparse,
        },
    ))
}
