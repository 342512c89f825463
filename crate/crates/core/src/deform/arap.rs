//! As-rigid-as-possible surface deformation with positional constraints.

use nalgebra::{DMatrix, Matrix3, Point3, Vector3};

use super::{DeformError, Result};
use crate::linalg::{cotangent_laplacian, SpdSolver};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArapParams {
    pub max_iterations: usize,
    pub rel_tol: f64,
}

impl Default for ArapParams {
    fn default() -> Self {
        ArapParams { max_iterations: 20, rel_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArapResult {
    pub positions: Vec<Point3<f64>>,
    /// Energy after every global step.
    pub energies: Vec<f64>,
}

/// Rotation and translation best mapping `src` onto `dst` in least squares.
pub fn kabsch(src: &[Point3<f64>], dst: &[Point3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        cov += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let r = closest_rotation(&cov);
    (r, cd - r * cs)
}

/// Rotation `R` maximizing `tr(R S)` for a covariance `S = sum p q^T`.
fn closest_rotation(cov: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = vt.transpose() * u.transpose();
    if r.determinant() < 0.0 {
        let mut flip = Matrix3::identity();
        flip[(2, 2)] = -1.0;
        r = vt.transpose() * flip * u.transpose();
    }
    r
}

fn non_collinear(points: &[Point3<f64>]) -> bool {
    let n = points.len() as f64;
    let c = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - c;
        cov += d * d.transpose();
    }
    let mut s: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s[0] > 0.0 && s[1] > 1e-10 * s[0]
}

pub fn arap_deform(mesh: &TriMesh, constraints: &[(usize, Point3<f64>)], params: &ArapParams) -> Result<ArapResult> {
    let n = mesh.num_vertices();
    let rest = mesh.vertices();
    let mut target: Vec<Option<Point3<f64>>> = vec![None; n];
    for &(v, p) in constraints {
        if v >= n {
            return Err(DeformError::UnknownHandle(v));
        }
        target[v] = Some(p);
    }
    let ids: Vec<usize> = (0..n).filter(|&v| target[v].is_some()).collect();
    let src: Vec<_> = ids.iter().map(|&v| rest[v]).collect();
    if ids.len() < 3 || !non_collinear(&src) {
        return Err(DeformError::UnderConstrained);
    }
    let dst: Vec<_> = ids.iter().map(|&v| target[v].unwrap()).collect();

    let lap = cotangent_laplacian(mesh);
    let nbrs: Vec<Vec<(usize, f64)>> =
        (0..n).map(|i| lap.row(i).iter().filter(|e| e.0 != i).map(|&(j, w)| (j, w.max(0.0))).collect()).collect();

    let free: Vec<usize> = (0..n).filter(|&v| target[v].is_none()).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &v) in free.iter().enumerate() {
        slot[v] = k;
    }
    let mut entries = Vec::new();
    for (k, &i) in free.iter().enumerate() {
        let mut diag = 0.0;
        for &(j, w) in &nbrs[i] {
            diag += w;
            if target[j].is_none() {
                entries.push((k, slot[j], -w));
            }
        }
        entries.push((k, k, diag));
    }
    let solver = if free.is_empty() {
        None
    } else {
        Some(SpdSolver::factor(free.len(), &entries).map_err(|_| DeformError::SingularSystem)?)
    };

    let (r0, t0) = kabsch(&src, &dst);
    let mut x: Vec<Point3<f64>> = (0..n).map(|v| target[v].unwrap_or_else(|| Point3::from(r0 * rest[v].coords + t0))).collect();

    let local = |x: &[Point3<f64>]| -> Vec<Matrix3<f64>> {
        (0..n)
            .map(|i| {
                let mut cov = Matrix3::zeros();
                for &(j, w) in &nbrs[i] {
                    cov += w * (rest[i] - rest[j]) * (x[i] - x[j]).transpose();
                }
                closest_rotation(&cov)
            })
            .collect()
    };
    let energy = |x: &[Point3<f64>], rot: &[Matrix3<f64>]| -> f64 {
        (0..n)
            .map(|i| nbrs[i].iter().map(|&(j, w)| w * ((x[i] - x[j]) - rot[i] * (rest[i] - rest[j])).norm_squared()).sum::<f64>())
            .sum()
    };

    let mut rot = local(&x);
    let mut energies = vec![energy(&x, &rot)];
    for _ in 0..params.max_iterations {
        let prev = *energies.last().unwrap();
        if prev <= 1e-24 {
            break;
        }
        if let Some(solver) = &solver {
            let mut rhs = DMatrix::zeros(free.len(), 3);
            for (k, &i) in free.iter().enumerate() {
                let mut b = Vector3::zeros();
                for &(j, w) in &nbrs[i] {
                    b += 0.5 * w * (rot[i] + rot[j]) * (rest[i] - rest[j]);
                    if let Some(p) = target[j] {
                        b += w * p.coords;
                    }
                }
                for c in 0..3 {
                    rhs[(k, c)] = b[c];
                }
            }
            let sol = solver.solve(&rhs).map_err(|_| DeformError::SingularSystem)?;
            for (k, &i) in free.iter().enumerate() {
                x[i] = Point3::new(sol[(k, 0)], sol[(k, 1)], sol[(k, 2)]);
            }
        }
        let e = energy(&x, &rot);
        energies.push(e);
        if (prev - e).abs() <= params.rel_tol * prev {
            break;
        }
        rot = local(&x);
    }
    Ok(ArapResult { positions: x, energies })
}
