//! St. Venant-Kirchhoff membrane energy of a triangle mesh relative to a
//! reference configuration.

use nalgebra::{Matrix2, Matrix3x2, Point3, SMatrix, Vector3};

use super::{DeformError, Result};
use crate::mesh::TriMesh;

pub type FaceHessian = SMatrix<f64, 9, 9>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceRest {
    /// Inverse of the 2x2 rest edge matrix in a per-face orthonormal frame.
    pub dm_inv: Matrix2<f64>,
    /// Gram matrix of the two rest edges.
    pub metric: Matrix2<f64>,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembraneMaterial {
    pub mu: f64,
    pub lam: f64,
    pub faces: Vec<[usize; 3]>,
    pub rest: Vec<FaceRest>,
    pub reference: Vec<Point3<f64>>,
}

impl MembraneMaterial {
    pub fn new(reference: &TriMesh, mu: f64, lam: f64) -> Self {
        let rest = (0..reference.num_faces())
            .map(|f| {
                let [a, b, c] = reference.face_positions(f);
                let e1 = b - a;
                let e2 = c - a;
                let u = e1.normalize();
                let w = e1.cross(&e2).cross(&e1).normalize();
                let dm = Matrix2::new(e1.norm(), e2.dot(&u), 0.0, e2.dot(&w));
                let metric = Matrix2::new(e1.dot(&e1), e1.dot(&e2), e2.dot(&e1), e2.dot(&e2));
                FaceRest {
                    dm_inv: dm.try_inverse().expect("rest faces are nondegenerate"),
                    metric,
                    area: 0.5 * dm.determinant().abs(),
                }
            })
            .collect();
        MembraneMaterial { mu, lam, faces: reference.faces().to_vec(), rest, reference: reference.vertices().to_vec() }
    }

    /// `mu = lam = 1`.
    pub fn unit(reference: &TriMesh) -> Self {
        Self::new(reference, 1.0, 1.0)
    }

    fn edges(&self, f: usize, x: &[Point3<f64>]) -> Matrix3x2<f64> {
        let [a, b, c] = self.faces[f];
        Matrix3x2::from_columns(&[x[b] - x[a], x[c] - x[a]])
    }

    fn deformation(&self, f: usize, x: &[Point3<f64>]) -> Matrix3x2<f64> {
        self.edges(f, x) * self.rest[f].dm_inv
    }

    /// Green strain from the change in edge metric; exactly zero when the
    /// edges are unchanged.
    fn green(&self, f: usize, x: &[Point3<f64>]) -> Matrix2<f64> {
        let ds = self.edges(f, x);
        let r = &self.rest[f];
        0.5 * r.dm_inv.transpose() * (ds.transpose() * ds - r.metric) * r.dm_inv
    }

    /// Second Piola-Kirchhoff stress for a Green strain.
    fn stress(&self, g: &Matrix2<f64>) -> Matrix2<f64> {
        2.0 * self.mu * g + Matrix2::identity() * (self.lam * g.trace())
    }

    fn face_energy(&self, f: usize, g: &Matrix2<f64>) -> f64 {
        self.rest[f].area * (self.mu * g.norm_squared() + 0.5 * self.lam * g.trace().powi(2))
    }

    pub fn energy(&self, x: &[Point3<f64>]) -> f64 {
        (0..self.faces.len()).map(|f| self.face_energy(f, &self.green(f, x))).sum()
    }

    /// Energy and its gradient with respect to every vertex position.
    pub fn energy_and_gradient(&self, x: &[Point3<f64>]) -> (f64, Vec<Vector3<f64>>) {
        let mut grad = vec![Vector3::zeros(); x.len()];
        let mut e = 0.0;
        for f in 0..self.faces.len() {
            let fm = self.deformation(f, x);
            let g = self.green(f, x);
            e += self.face_energy(f, &g);
            let p = fm * self.stress(&g);
            let h = self.rest[f].area * p * self.rest[f].dm_inv.transpose();
            let (g1, g2) = (h.column(0).into_owned(), h.column(1).into_owned());
            let [a, b, c] = self.faces[f];
            grad[a] -= g1 + g2;
            grad[b] += g1;
            grad[c] += g2;
        }
        (e, grad)
    }

    /// Exact 9x9 Hessian of one face's energy, ordered
    /// `(x_a, y_a, z_a, x_b, ..., z_c)`. Not necessarily positive definite.
    pub fn face_hessian(&self, f: usize, x: &[Point3<f64>]) -> FaceHessian {
        let fm = self.deformation(f, x);
        let s = self.stress(&self.green(f, x));
        let dm_inv = self.rest[f].dm_inv;
        let area = self.rest[f].area;
        let mut h = FaceHessian::zeros();
        for col in 0..9 {
            let (corner, axis) = (col / 3, col % 3);
            let mut dds = Matrix3x2::zeros();
            match corner {
                0 => {
                    dds[(axis, 0)] = -1.0;
                    dds[(axis, 1)] = -1.0;
                }
                1 => dds[(axis, 0)] = 1.0,
                _ => dds[(axis, 1)] = 1.0,
            }
            let df = dds * dm_inv;
            let dg = 0.5 * (df.transpose() * fm + fm.transpose() * df);
            let dp = df * s + fm * self.stress(&dg);
            let dh = area * dp * dm_inv.transpose();
            for r in 0..3 {
                h[(3 + r, col)] = dh[(r, 0)];
                h[(6 + r, col)] = dh[(r, 1)];
                h[(r, col)] = -dh[(r, 0)] - dh[(r, 1)];
            }
        }
        // symmetrize away rounding
        0.5 * (h + h.transpose())
    }
}

/// Energy and gradient of `current` relative to the material's reference.
pub fn membrane_energy(current: &[Point3<f64>], material: &MembraneMaterial) -> Result<(f64, Vec<Vector3<f64>>)> {
    if current.len() != material.reference.len() {
        return Err(DeformError::DimensionMismatch { expected: material.reference.len(), got: current.len() });
    }
    Ok(material.energy_and_gradient(current))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use nalgebra::{Rotation3, Unit};

    #[test]
    fn reference_has_zero_energy() {
        let m = shapes::icosphere(1);
        let mat = MembraneMaterial::unit(&m);
        let (e, g) = membrane_energy(m.vertices(), &mat).unwrap();
        assert_eq!(e, 0.0);
        assert!(g.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn scaled_right_triangle() {
        let tri = TriMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let mat = MembraneMaterial::unit(&tri);
        let scaled: Vec<_> = tri.vertices().iter().map(|p| Point3::from(p.coords * 2.0)).collect();
        assert!((mat.energy(&scaled) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn rotation_invariant() {
        let m = shapes::torus(8, 6, 1.0, 0.3);
        let mat = MembraneMaterial::unit(&m);
        let warped: Vec<_> = m.vertices().iter().map(|p| Point3::new(p.x * 1.1, p.y, p.z + 0.1 * p.x * p.y)).collect();
        let e0 = mat.energy(&warped);
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5)), 0.83);
        let moved: Vec<_> = warped.iter().map(|p| r * p + Vector3::new(3.0, -1.0, 0.5)).collect();
        assert!((mat.energy(&moved) - e0).abs() < 1e-10);
    }

    #[test]
    fn gradient_and_hessian_match_differences() {
        let m = shapes::octahedron();
        let mat = MembraneMaterial::new(&m, 1.3, 0.7);
        let x: Vec<_> = m.vertices().iter().enumerate().map(|(i, p)| p + Vector3::new(0.05 * i as f64, -0.03, 0.02 * (i % 2) as f64)).collect();
        let (_, g) = mat.energy_and_gradient(&x);
        let h = 1e-6;
        for v in 0..x.len() {
            for c in 0..3 {
                let mut xp = x.clone();
                xp[v][c] += h;
                let mut xm = x.clone();
                xm[v][c] -= h;
                let fd = (mat.energy(&xp) - mat.energy(&xm)) / (2.0 * h);
                assert!((fd - g[v][c]).abs() < 1e-6 * (1.0 + g[v][c].abs()));
            }
        }
        let f = 2;
        let hess = mat.face_hessian(f, &x);
        let face = m.faces()[f];
        for col in 0..9 {
            let (v, c) = (face[col / 3], col % 3);
            let mut xp = x.clone();
            xp[v][c] += h;
            let mut xm = x.clone();
            xm[v][c] -= h;
            let single = |pts: &[Point3<f64>]| {
                let mut grad = [0.0; 9];
                let one = MembraneMaterial { faces: vec![face], rest: vec![mat.rest[f]], ..mat.clone() };
                let (_, g) = one.energy_and_gradient(pts);
                for k in 0..9 {
                    grad[k] = g[face[k / 3]][k % 3];
                }
                grad
            };
            let (gp, gm) = (single(&xp), single(&xm));
            for row in 0..9 {
                let fd = (gp[row] - gm[row]) / (2.0 * h);
                assert!((fd - hess[(row, col)]).abs() < 1e-5 * (1.0 + fd.abs()), "{row} {col}: {fd} vs {}", hess[(row, col)]);
            }
        }
    }
}
