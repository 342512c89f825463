//! Biharmonic handle weights.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Point3};

use super::{DeformError, Result};
use crate::handles::HandleSuperSet;
use crate::linalg::{cotangent_laplacian, lumped_mass, SpdSolver};
use crate::mesh::TriMesh;

/// Row-stochastic `|V| x |H|` weights. When built with a fixed region, the
/// fixed vertices form one more constraint group whose weight is kept in
/// `anchor`; rows then satisfy `sum(weights row) + anchor = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    pub weights: DMatrix<f64>,
    pub handle_ids: Vec<usize>,
    pub anchor: Option<Vec<f64>>,
}

impl WeightField {
    pub fn num_vertices(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_handles(&self) -> usize {
        self.weights.ncols()
    }

    pub fn row_sum(&self, v: usize) -> f64 {
        self.weights.row(v).sum() + self.anchor.as_ref().map_or(0.0, |a| a[v])
    }

    /// `row col value` lines for every nonzero entry; the anchor group, if
    /// any, is written as column `num_handles()`.
    pub fn to_triplets(&self) -> String {
        let mut s = String::new();
        let k = self.num_handles();
        for i in 0..self.num_vertices() {
            for j in 0..k {
                let w = self.weights[(i, j)];
                if w != 0.0 {
                    writeln!(s, "{i} {j} {w:.17e}").unwrap();
                }
            }
            if let Some(a) = &self.anchor {
                if a[i] != 0.0 {
                    writeln!(s, "{i} {k} {:.17e}", a[i]).unwrap();
                }
            }
        }
        s
    }
}

/// Weights with one Dirichlet group per handle.
pub fn biharmonic_weights(mesh: &TriMesh, handles: &HandleSuperSet) -> Result<WeightField> {
    biharmonic_weights_anchored(mesh, handles, &[])
}

/// As [`biharmonic_weights`], with every vertex in `fixed` pinned to an extra
/// zero-displacement group. Handles listed in `fixed` stay handles.
pub fn biharmonic_weights_anchored(mesh: &TriMesh, handles: &HandleSuperSet, fixed: &[bool]) -> Result<WeightField> {
    let n = mesh.num_vertices();
    let ids = handles.vertex_ids();
    let k = ids.len();
    if k == 0 {
        return Err(DeformError::NoHandles);
    }
    // group[v]: Some(j) for handle j, Some(k) for the anchor group
    let mut group: Vec<Option<usize>> = vec![None; n];
    for (v, &f) in fixed.iter().enumerate() {
        if f {
            group[v] = Some(k);
        }
    }
    for (j, &v) in ids.iter().enumerate() {
        if v >= n {
            return Err(DeformError::UnknownHandle(v));
        }
        if group[v].is_some_and(|g| g < k) {
            return Err(DeformError::DuplicateHandle(v));
        }
        group[v] = Some(j);
    }
    let anchored = group.contains(&Some(k));
    let cols = if anchored { k + 1 } else { k };

    let (ncomp, comp) = mesh.vertex_components();
    let mut constrained = vec![false; ncomp];
    for v in 0..n {
        if group[v].is_some() {
            constrained[comp[v]] = true;
        }
    }
    if constrained.iter().any(|c| !c) {
        return Err(DeformError::SingularSystem);
    }

    let free: Vec<usize> = (0..n).filter(|&v| group[v].is_none()).collect();
    let mut slot = vec![usize::MAX; n];
    for (i, &v) in free.iter().enumerate() {
        slot[v] = i;
    }

    let mut full = DMatrix::zeros(n, cols);
    for v in 0..n {
        if let Some(g) = group[v] {
            full[(v, g)] = 1.0;
        }
    }

    if !free.is_empty() {
        let l = cotangent_laplacian(mesh);
        let q = l.sandwich_inv_diag(&lumped_mass(mesh));
        let mut entries = Vec::new();
        let mut rhs = DMatrix::zeros(free.len(), cols);
        for (i, &v) in free.iter().enumerate() {
            for &(u, val) in q.row(v) {
                match group[u] {
                    None => entries.push((i, slot[u], val)),
                    Some(g) => rhs[(i, g)] -= val,
                }
            }
        }
        let solver = SpdSolver::factor(free.len(), &entries).map_err(|_| DeformError::SingularSystem)?;
        let sol = solver.solve(&rhs).map_err(|_| DeformError::SingularSystem)?;
        for (i, &v) in free.iter().enumerate() {
            let mut sum = 0.0;
            for c in 0..cols {
                let w = sol[(i, c)].clamp(0.0, 1.0);
                full[(v, c)] = w;
                sum += w;
            }
            if !(sum > 1e-12) {
                return Err(DeformError::SingularSystem);
            }
            for c in 0..cols {
                full[(v, c)] /= sum;
            }
        }
    }

    let anchor = anchored.then(|| full.column(k).iter().copied().collect());
    Ok(WeightField { weights: full.columns(0, k).into_owned(), handle_ids: ids, anchor })
}

/// `V' = W X`, the plain linear blend of handle positions.
pub fn apply_handles(field: &WeightField, handle_positions: &[Point3<f64>]) -> Result<Vec<Point3<f64>>> {
    if handle_positions.len() != field.num_handles() {
        return Err(DeformError::DimensionMismatch { expected: field.num_handles(), got: handle_positions.len() });
    }
    let x = points_to_matrix(handle_positions);
    let v = &field.weights * x;
    Ok((0..v.nrows()).map(|i| Point3::new(v[(i, 0)], v[(i, 1)], v[(i, 2)])).collect())
}

/// `V' = V_rest + W (X - X_rest)`: handle displacements blended onto the rest
/// mesh, so rest handles reproduce the rest mesh exactly and anchored
/// vertices stay put.
pub fn apply_displacements(
    field: &WeightField,
    rest_vertices: &[Point3<f64>],
    rest_handles: &[Point3<f64>],
    handle_positions: &[Point3<f64>],
) -> Result<Vec<Point3<f64>>> {
    let k = field.num_handles();
    for len in [rest_handles.len(), handle_positions.len()] {
        if len != k {
            return Err(DeformError::DimensionMismatch { expected: k, got: len });
        }
    }
    if rest_vertices.len() != field.num_vertices() {
        return Err(DeformError::DimensionMismatch { expected: field.num_vertices(), got: rest_vertices.len() });
    }
    let d = DMatrix::from_fn(k, 3, |j, c| handle_positions[j][c] - rest_handles[j][c]);
    let v = &field.weights * d;
    Ok(rest_vertices.iter().enumerate().map(|(i, p)| Point3::new(p.x + v[(i, 0)], p.y + v[(i, 1)], p.z + v[(i, 2)])).collect())
}

pub(crate) fn points_to_matrix(points: &[Point3<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 3, |i, c| points[i][c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use nalgebra::Vector3;

    fn check_field(f: &WeightField) {
        for v in 0..f.num_vertices() {
            assert!((f.row_sum(v) - 1.0).abs() < 1e-8);
            for j in 0..f.num_handles() {
                let w = f.weights[(v, j)];
                assert!((0.0..=1.0).contains(&w));
            }
        }
        for (j, &h) in f.handle_ids.iter().enumerate() {
            for c in 0..f.num_handles() {
                assert!((f.weights[(h, c)] - if c == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn single_handle_gives_ones() {
        let m = shapes::icosphere(1);
        let f = biharmonic_weights(&m, &HandleSuperSet::from_vertices(&m, &[3])).unwrap();
        assert!(f.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn strip_end_handles() {
        let m = shapes::strip(8);
        // vertices 0 and 8 are the two bottom ends
        let f = biharmonic_weights(&m, &HandleSuperSet::from_vertices(&m, &[0, 8])).unwrap();
        check_field(&f);
        assert_eq!((f.weights[(0, 0)], f.weights[(0, 1)]), (1.0, 0.0));
        assert_eq!((f.weights[(8, 0)], f.weights[(8, 1)]), (0.0, 1.0));
        // weights fall off monotonically along the bottom edge
        for i in 0..8 {
            assert!(f.weights[(i, 0)] >= f.weights[(i + 1, 0)] - 1e-12);
        }
    }

    #[test]
    fn translation_reproduction() {
        let m = shapes::icosphere(2);
        let set = HandleSuperSet::from_vertices(&m, &[0, 5, 11, 40]);
        let f = biharmonic_weights(&m, &set).unwrap();
        check_field(&f);
        let t = Vector3::new(0.3, -1.2, 2.5);
        let rest = set.positions();
        let moved: Vec<_> = rest.iter().map(|p| p + t).collect();
        let a = apply_handles(&f, &rest).unwrap();
        let b = apply_handles(&f, &moved).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!(((q - p) - t).norm() < 1e-12);
        }
        let origin = vec![Point3::origin(); 4];
        assert!(apply_handles(&f, &origin).unwrap().iter().all(|p| p.coords.norm() == 0.0));
    }

    #[test]
    fn displacement_form_reproduces_rest() {
        let m = shapes::icosphere(2);
        let set = HandleSuperSet::from_vertices(&m, &[0, 5, 11]);
        let f = biharmonic_weights(&m, &set).unwrap();
        let rest = set.positions();
        let out = apply_displacements(&f, m.vertices(), &rest, &rest).unwrap();
        assert_eq!(out, m.vertices());
    }

    #[test]
    fn anchored_region_stays_fixed() {
        let m = shapes::grid(6, 6, 1.0);
        let fixed: Vec<bool> = m.vertices().iter().map(|p| p.x < 0.3).collect();
        let set = HandleSuperSet::from_vertices(&m, &[6 * 7 + 6]);
        let f = biharmonic_weights_anchored(&m, &set, &fixed).unwrap();
        check_field(&f);
        let rest = set.positions();
        let moved = vec![rest[0] + Vector3::new(0.0, 0.0, 1.0)];
        let out = apply_displacements(&f, m.vertices(), &rest, &moved).unwrap();
        for (v, p) in out.iter().enumerate() {
            if fixed[v] {
                assert_eq!(*p, m.vertices()[v]);
            }
        }
        assert_eq!(out[48], moved[0]);
    }

    #[test]
    fn errors() {
        let m = shapes::icosphere(1);
        let empty = HandleSuperSet { handles: vec![], tau_used: 0.1, halvings: 0 };
        assert!(matches!(biharmonic_weights(&m, &empty), Err(DeformError::NoHandles)));

        // two disjoint tetrahedra, handle on one only
        let t = shapes::tetrahedron();
        let mut v = t.vertices().to_vec();
        v.extend(t.vertices().iter().map(|p| p + Vector3::new(5.0, 0.0, 0.0)));
        let mut faces = t.faces().to_vec();
        faces.extend(t.faces().iter().map(|f| [f[0] + 4, f[1] + 4, f[2] + 4]));
        let two = TriMesh::new(v, faces).unwrap();
        let set = HandleSuperSet::from_vertices(&two, &[0]);
        assert!(matches!(biharmonic_weights(&two, &set), Err(DeformError::SingularSystem)));

        let f = biharmonic_weights(&m, &HandleSuperSet::from_vertices(&m, &[0, 1])).unwrap();
        assert!(matches!(apply_handles(&f, &[Point3::origin()]), Err(DeformError::DimensionMismatch { .. })));
    }

    #[test]
    fn triplets_list_nonzeros() {
        let m = shapes::strip(2);
        let f = biharmonic_weights(&m, &HandleSuperSet::from_vertices(&m, &[0])).unwrap();
        assert_eq!(f.to_triplets().lines().count(), m.num_vertices());
    }
}
