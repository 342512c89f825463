//! Sparse symmetric positive definite solves and the cotangent Laplacian.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use thiserror::Error;

use crate::mesh::TriMesh;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Symmetric sparse matrix stored as full sorted rows.
#[derive(Debug, Clone)]
pub struct SymSparse {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SymSparse {
    pub fn from_rows(rows: Vec<HashMap<usize, f64>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|r| {
                let mut v: Vec<(usize, f64)> = r.into_iter().collect();
                v.sort_unstable_by_key(|e| e.0);
                v
            })
            .collect();
        SymSparse { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].binary_search_by_key(&j, |e| e.0).map(|k| self.rows[i][k].1).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    /// `self * diag(1/d) * self`, for the bi-Laplacian `L M^-1 L`.
    pub fn sandwich_inv_diag(&self, d: &[f64]) -> SymSparse {
        let n = self.dim();
        let mut out: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n];
        for (i, acc) in out.iter_mut().enumerate() {
            for &(k, lik) in &self.rows[i] {
                let s = lik / d[k];
                for &(j, lkj) in &self.rows[k] {
                    *acc.entry(j).or_default() += s * lkj;
                }
            }
        }
        SymSparse::from_rows(out)
    }
}

/// Cotangent Laplacian with `L_ij = (cot a + cot b) / 2` off the diagonal
/// and rows summing to zero (negative semidefinite).
pub fn cotangent_laplacian(mesh: &TriMesh) -> SymSparse {
    let n = mesh.num_vertices();
    let mut rows: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n];
    for (_, (i, j), w) in cotangent_edge_weights(mesh) {
        *rows[i].entry(j).or_default() += w;
        *rows[j].entry(i).or_default() += w;
        *rows[i].entry(i).or_default() -= w;
        *rows[j].entry(j).or_default() -= w;
    }
    SymSparse::from_rows(rows)
}

/// Per face and per corner, `(face, (i, j), cot(angle opposite ij) / 2)`.
pub fn cotangent_edge_weights(mesh: &TriMesh) -> Vec<(usize, (usize, usize), f64)> {
    let mut out = Vec::with_capacity(mesh.num_faces() * 3);
    for (fi, f) in mesh.faces().iter().enumerate() {
        let p = mesh.face_positions(fi);
        for k in 0..3 {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let u = p[i] - p[k];
            let v = p[j] - p[k];
            let cot = u.dot(&v) / u.cross(&v).norm();
            out.push((fi, (f[i], f[j]), 0.5 * cot));
        }
    }
    out
}

/// Barycentric lumped mass: a third of each incident face area.
pub fn lumped_mass(mesh: &TriMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for (fi, f) in mesh.faces().iter().enumerate() {
        let a = mesh.face_area(fi) / 3.0;
        for &v in f {
            m[v] += a;
        }
    }
    m
}

/// Reverse Cuthill-McKee ordering. Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::new();
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(adjacency[v].iter().copied().filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            nbrs.dedup();
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Sparse Cholesky factorization of an SPD matrix under an RCM ordering.
pub struct SpdSolver {
    n: usize,
    perm: Vec<usize>,
    inv: Vec<usize>,
    chol: CscCholesky<f64>,
}

impl SpdSolver {
    /// `entries` must list both triangles of the symmetric matrix.
    pub fn factor(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self, LinalgError> {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, _) in entries {
            if i != j {
                adjacency[i].push(j);
            }
        }
        let perm = reverse_cuthill_mckee(&adjacency);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut coo = CooMatrix::new(n, n);
        for &(i, j, v) in entries {
            coo.push(inv[i], inv[j], v);
        }
        let csc = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&csc).map_err(|_| LinalgError::NotPositiveDefinite)?;
        // CscCholesky does not detect every indefinite input; reject non-finite factors.
        if chol.l().values().iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NotPositiveDefinite);
        }
        Ok(SpdSolver { n, perm, inv, chol })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves for every column of `rhs` (`n x k`).
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
        if rhs.nrows() != self.n {
            return Err(LinalgError::DimensionMismatch { expected: self.n, got: rhs.nrows() });
        }
        let permuted = DMatrix::from_fn(self.n, rhs.ncols(), |r, c| rhs[(self.perm[r], c)]);
        let x = self.chol.solve(&permuted);
        Ok(DMatrix::from_fn(self.n, rhs.ncols(), |r, c| x[(self.inv[r], c)]))
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs);
        Ok(self.solve(&m)?.column(0).iter().copied().collect())
    }
}
