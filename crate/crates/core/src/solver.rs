//! Assembly and solution of the finite-difference kernel ridge regression
//! system: centers offset along the normals by +/- epsilon, targets
//! +/- epsilon, coefficients `alpha = (K + lambda I)^{-1} y`.

use crate::cloud::OrientedPointCloud;
use crate::error::{ReconError, Result};
use crate::field::{ImplicitField, SimilarityTransform};
use crate::kernel::{self, KernelSpec};
use crate::spatial::HashGrid;
use ndarray::{Array1, Array2};
use ndarray_linalg::{CholeskyFactorized, FactorizeC, SolveC, UPLO};
use rayon::prelude::*;

/// Number of centers above which the dense path refuses to allocate the
/// Gram matrix (2m x 2m doubles; ~3.2 GB at the cap).
pub const DENSE_CENTER_LIMIT: usize = 20_000;

/// The augmented linear system: 2m centers (all + offsets first, then all -),
/// targets +/- epsilon, ridge parameter lambda.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    pub centers: Array2<f64>,
    pub targets: Array1<f64>,
    pub epsilon: f64,
    pub lambda: f64,
}

/// Solver output: the field plus diagnostics.
#[derive(Debug)]
pub struct SolveOutput {
    pub field: ImplicitField,
    pub relative_residual: f64,
    pub cg_iterations: Option<usize>,
    /// Set when augmented centers nearly coincide (epsilon exceeding the
    /// local feature size); carries the minimum pairwise center distance.
    pub coincident_warning: Option<f64>,
}

/// Builds the augmented system from an oriented cloud. Ordering is
/// deterministic: points[i] + eps*n[i] for i < m, then the - offsets.
pub fn build_system(
    cloud: &OrientedPointCloud,
    epsilon: f64,
    lambda: f64,
) -> Result<RidgeSystem> {
    if !(epsilon > 0.0) {
        return Err(ReconError::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(lambda >= 0.0) {
        return Err(ReconError::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let m = cloud.len();
    let mut centers = Array2::zeros((2 * m, 3));
    let mut targets = Array1::zeros(2 * m);
    for i in 0..m {
        let p = cloud.points[i];
        let n = cloud.normals[i];
        for a in 0..3 {
            centers[(i, a)] = p[a] + epsilon * n[a];
            centers[(m + i, a)] = p[a] - epsilon * n[a];
        }
        targets[i] = epsilon;
        targets[m + i] = -epsilon;
    }
    Ok(RidgeSystem { centers, targets, epsilon, lambda })
}

fn min_center_distance(centers: &Array2<f64>, probe: f64) -> f64 {
    let grid = HashGrid::build(centers.view(), probe);
    (0..centers.nrows())
        .into_par_iter()
        .map(|i| grid.nearest_other_distance(centers.view(), i))
        .reduce(|| f64::INFINITY, f64::min)
}

fn make_output(
    system: &RidgeSystem,
    spec: &KernelSpec,
    alpha: Array1<f64>,
    relative_residual: f64,
    cg_iterations: Option<usize>,
) -> Result<SolveOutput> {
    let min_dist = min_center_distance(&system.centers, (system.epsilon * 0.1).max(1e-12));
    let coincident_warning = (min_dist < system.epsilon * 1e-3).then_some(min_dist);
    let field = ImplicitField::new(
        system.centers.clone(),
        alpha,
        *spec,
        SimilarityTransform::identity(),
    )?;
    Ok(SolveOutput { field, relative_residual, cg_iterations, coincident_warning })
}

fn residual_norm(a: &Array2<f64>, x: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let r = a.dot(x) - b;
    r.dot(&r).sqrt() / b.dot(b).sqrt()
}

/// Direct solve via Cholesky factorization of `K + lambda I`.
pub fn solve_dense(system: &RidgeSystem, spec: &KernelSpec) -> Result<SolveOutput> {
    let n = system.centers.nrows();
    if n > DENSE_CENTER_LIMIT {
        return Err(ReconError::Capacity(format!(
            "{n} centers exceed the dense limit of {DENSE_CENTER_LIMIT}; use solve_sparse with a tapered kernel"
        )));
    }
    let mut k = kernel::reconstruction_gram(spec, system.centers.view())?;
    for i in 0..n {
        k[(i, i)] += system.lambda;
    }
    let factor: CholeskyFactorized<_> = k
        .factorizec(UPLO::Lower)
        .map_err(|e| ReconError::SingularSystem(format!("Cholesky factorization failed: {e}")))?;
    let alpha = factor
        .solvec(&system.targets)
        .map_err(|e| ReconError::SingularSystem(format!("triangular solve failed: {e}")))?;
    let rel = residual_norm(&k, &alpha, &system.targets);
    make_output(system, spec, alpha, rel, None)
}

/// Compressed sparse row matrix, symmetric by construction.
struct CsrMatrix {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
    n: usize,
}

impl CsrMatrix {
    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, slot)| {
            let mut acc = 0.0;
            for idx in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[idx] * x[self.indices[idx]];
            }
            *slot = acc;
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.indptr[i]..self.indptr[i + 1])
                    .find(|&idx| self.indices[idx] == i)
                    .map(|idx| self.data[idx])
                    .unwrap_or(0.0)
            })
            .collect()
    }
}

fn assemble_sparse(system: &RidgeSystem, spec: &KernelSpec, h_prime: f64) -> Result<CsrMatrix> {
    let n = system.centers.nrows();
    let grid = HashGrid::build(system.centers.view(), h_prime);
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(Vec<usize>, Vec<f64>)> {
            let neighbors = grid.neighbors_within(system.centers.view(), i, h_prime);
            let xi = system.centers.row(i);
            let mut vals = Vec::with_capacity(neighbors.len());
            for &j in &neighbors {
                let mut v = kernel::eval_kernel(
                    spec,
                    xi.as_slice().unwrap(),
                    system.centers.row(j).as_slice().unwrap(),
                )?;
                if j == i {
                    v += system.lambda;
                }
                vals.push(v);
            }
            Ok((neighbors, vals))
        })
        .collect::<Result<_>>()?;
    let mut indptr = Vec::with_capacity(n + 1);
    indptr.push(0);
    let mut indices = Vec::new();
    let mut data = Vec::new();
    for (cols, vals) in rows {
        indices.extend_from_slice(&cols);
        data.extend_from_slice(&vals);
        indptr.push(indices.len());
    }
    Ok(CsrMatrix { indptr, indices, data, n })
}

/// Jacobi-preconditioned conjugate gradients on the tapered sparse system.
/// Pairs at distance >= h' are never assembled (the taper makes them exact
/// zeros), so memory and matvec cost scale with the neighbor count.
pub fn solve_sparse(
    system: &RidgeSystem,
    spec: &KernelSpec,
    cg_tol: f64,
    cg_max_iters: usize,
) -> Result<SolveOutput> {
    let taper = spec.taper.ok_or_else(|| {
        ReconError::InvalidInput("solve_sparse requires a tapered kernel spec".into())
    })?;
    let a = assemble_sparse(system, spec, taper.h_prime)?;
    let n = a.n;
    let b: Vec<f64> = system.targets.to_vec();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diag = a.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(ReconError::SingularSystem("non-positive diagonal entry".into()));
    }

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for iter in 0..cg_max_iters {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(ReconError::SingularSystem(format!(
                "indefinite direction at CG iteration {iter}"
            )));
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / b_norm;
        if rel <= cg_tol {
            let alpha = Array1::from(x);
            return make_output(system, spec, alpha, rel, Some(iter + 1));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(ReconError::IterativeFailure { residual: rel, iters: cg_max_iters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;

    fn unit_sphere_cloud(m: usize, seed: u64) -> OrientedPointCloud {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(m);
        let mut normals = Vec::with_capacity(m);
        for _ in 0..m {
            let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let n = geom::normalize(v).unwrap();
            points.push(n);
            normals.push(n);
        }
        OrientedPointCloud::new(points, normals).unwrap()
    }

    #[test]
    fn build_system_single_point() {
        let cloud =
            OrientedPointCloud::new(vec![[0.0; 3]], vec![[0.0, 0.0, 1.0]]).unwrap();
        let sys = build_system(&cloud, 0.005, 0.0).unwrap();
        assert_eq!(sys.centers.nrows(), 2);
        assert_eq!(sys.centers.row(0).to_vec(), vec![0.0, 0.0, 0.005]);
        assert_eq!(sys.centers.row(1).to_vec(), vec![0.0, 0.0, -0.005]);
        assert_eq!(sys.targets.to_vec(), vec![0.005, -0.005]);
    }

    #[test]
    fn build_system_ordering() {
        let cloud = OrientedPointCloud::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0]],
            vec![[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
        )
        .unwrap();
        let sys = build_system(&cloud, 0.01, 1e-10).unwrap();
        assert_eq!(sys.centers.nrows(), 4);
        let t = sys.targets.to_vec();
        assert_eq!(t, vec![0.01, 0.01, -0.01, -0.01]);
    }

    #[test]
    fn duplicate_point_opposite_normals_builds() {
        let cloud = OrientedPointCloud::new(
            vec![[0.0; 3], [0.0; 3]],
            vec![[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]],
        )
        .unwrap();
        let sys = build_system(&cloud, 0.005, 0.0).unwrap();
        assert_eq!(sys.centers.nrows(), 4);
        // two coincident pairs: rows 0/3 and 1/2
        assert_eq!(sys.centers.row(0).to_vec(), sys.centers.row(3).to_vec());
    }

    #[test]
    fn dense_solve_two_by_two_closed_form() {
        let cloud =
            OrientedPointCloud::new(vec![[0.0; 3]], vec![[0.0, 0.0, 1.0]]).unwrap();
        let sys = build_system(&cloud, 0.005, 0.0).unwrap();
        let spec = KernelSpec::matern(0.5, 1.0).unwrap();
        let out = solve_dense(&sys, &spec).unwrap();
        // K = [[1, k],[k, 1]], y = (eps, -eps)  =>  alpha = (eps, -eps)/(1-k)
        let k = (-0.01f64).exp();
        let expect = 0.005 / (1.0 - k);
        assert!((out.field.alpha[0] - expect).abs() < 1e-9 * expect.abs());
        assert!((out.field.alpha[1] + expect).abs() < 1e-9 * expect.abs());
        assert!(out.relative_residual <= 1e-8);
    }

    #[test]
    fn dense_solve_residual_contract() {
        let cloud = unit_sphere_cloud(100, 3);
        let sys = build_system(&cloud, 0.005, 1e-10).unwrap();
        let out = solve_dense(&sys, &KernelSpec::matern(1.5, 1.0).unwrap()).unwrap();
        assert!(out.relative_residual <= 1e-8, "residual {}", out.relative_residual);
    }

    #[test]
    fn coincident_centers_singular_at_zero_lambda() {
        let cloud = OrientedPointCloud::new(
            vec![[0.0; 3], [0.0; 3]],
            vec![[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
        )
        .unwrap();
        let sys = build_system(&cloud, 0.005, 0.0).unwrap();
        let res = solve_dense(&sys, &KernelSpec::matern(0.5, 1.0).unwrap());
        assert!(matches!(res, Err(ReconError::SingularSystem(_))));
    }

    #[test]
    fn interpolation_screening_limit() {
        // With lambda ~ 0 the solved field must hit the +/- epsilon targets
        // at the offset points and nearly vanish at the surface points.
        let cloud = unit_sphere_cloud(500, 7);
        let eps = 0.005;
        let sys = build_system(&cloud, eps, 1e-10).unwrap();
        let out = solve_dense(&sys, &KernelSpec::matern(1.5, 1.0).unwrap()).unwrap();
        let mut worst_offset: f64 = 0.0;
        let mut worst_surface: f64 = 0.0;
        for i in 0..cloud.len() {
            let p = cloud.points[i];
            let n = cloud.normals[i];
            let fp = out.field.eval_normalized(geom::add(p, geom::scale(n, eps)));
            let fm = out.field.eval_normalized(geom::sub(p, geom::scale(n, eps)));
            worst_offset = worst_offset.max((fp - eps).abs()).max((fm + eps).abs());
            worst_surface = worst_surface.max(out.field.eval_normalized(p).abs());
        }
        assert!(worst_offset <= 1e-3 * eps, "offset error {worst_offset:e}");
        assert!(worst_surface <= 1e-2 * eps, "surface error {worst_surface:e}");
    }

    #[test]
    fn rkhs_norm_identity_and_lambda_monotonicity() {
        let cloud = unit_sphere_cloud(120, 11);
        let spec = KernelSpec::matern(1.5, 1.0).unwrap();
        let mut norms = Vec::new();
        for lambda in [1e-13, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7] {
            let sys = build_system(&cloud, 0.005, lambda).unwrap();
            let out = solve_dense(&sys, &spec).unwrap();
            let k = kernel::gram_matrix(&spec, sys.centers.view(), None).unwrap();
            let quad = out.field.alpha.dot(&k.dot(&out.field.alpha));
            // double-summation oracle
            let mut double = 0.0;
            for i in 0..sys.centers.nrows() {
                for j in 0..sys.centers.nrows() {
                    double += out.field.alpha[i] * out.field.alpha[j] * k[(i, j)];
                }
            }
            assert!((quad - double).abs() <= 1e-10 * quad.abs().max(1e-30));
            norms.push(quad);
        }
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "norm not non-increasing: {norms:?}");
        }
    }

    #[test]
    fn sparse_matches_dense_on_tapered_system() {
        let cloud = unit_sphere_cloud(200, 19);
        let sys = build_system(&cloud, 0.005, 1e-8).unwrap();
        // h' larger than the domain diameter: the sparse matrix is dense in
        // effect and must reproduce the direct solution.
        let spec = KernelSpec::matern(1.5, 1.0).unwrap().with_taper(2.0, 10.0).unwrap();
        let dense = solve_dense(&sys, &spec).unwrap();
        let sparse = solve_sparse(&sys, &spec, 1e-12, 10_000).unwrap();
        let max_ref = dense.field.alpha.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_diff = dense
            .field
            .alpha
            .iter()
            .zip(sparse.field.alpha.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(max_diff <= 1e-6 * max_ref, "diff {max_diff:e} vs ref {max_ref:e}");
    }

    #[test]
    fn sparse_diagonal_limit() {
        // h' below the minimum pairwise distance leaves only the diagonal:
        // alpha = y / (1 + lambda) elementwise.
        let cloud = OrientedPointCloud::new(
            vec![[0.0; 3], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0]],
            vec![[0.0, 0.0, 1.0]; 3],
        )
        .unwrap();
        let lambda = 0.5;
        let sys = build_system(&cloud, 0.005, lambda).unwrap();
        let spec = KernelSpec::matern(0.5, 1.0).unwrap().with_taper(2.0, 0.005).unwrap();
        let out = solve_sparse(&sys, &spec, 1e-14, 100).unwrap();
        for (a, y) in out.field.alpha.iter().zip(sys.targets.iter()) {
            assert!((a - y / (1.0 + lambda)).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_non_convergence_reports_residual() {
        let cloud = unit_sphere_cloud(100, 23);
        let sys = build_system(&cloud, 0.005, 1e-10).unwrap();
        let spec = KernelSpec::matern(0.5, 1.0).unwrap().with_taper(2.0, 4.0).unwrap();
        let res = solve_sparse(&sys, &spec, 1e-14, 1);
        assert!(matches!(res, Err(ReconError::IterativeFailure { .. })));
    }

    #[test]
    fn dense_capacity_error() {
        let sys = RidgeSystem {
            centers: Array2::zeros((DENSE_CENTER_LIMIT + 2, 3)),
            targets: Array1::zeros(DENSE_CENTER_LIMIT + 2),
            epsilon: 0.005,
            lambda: 0.0,
        };
        let res = solve_dense(&sys, &KernelSpec::matern(0.5, 1.0).unwrap());
        assert!(matches!(res, Err(ReconError::Capacity(_))));
    }
}
