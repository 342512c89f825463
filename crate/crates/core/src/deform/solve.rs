//! Per-view handle solve and multi-view voting.
//!
//! For one view with pixel projection `P x = A x + b` the handle positions
//! `X` minimize
//!
//! ```text
//! sum_{h in H} |P x_h - v*_h|^2 + lambda * E(V(X)) + eps * sum_h |x_h - rest_h|^2
//! ```
//!
//! with `V(X)` the weighted blend of handle displacements and `E` the
//! membrane energy against the reference mesh.

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::membrane::MembraneMaterial;
use super::weights::{apply_displacements, WeightField};
use super::{DeformError, Result};
use crate::handles::HandleSelection;
use crate::raster::{CameraView, ViewId};

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_EPSILON: f64 = 1e-6;
const ARMIJO_C: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub lambda: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub grad_tol: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams { lambda: DEFAULT_LAMBDA, epsilon: DEFAULT_EPSILON, max_iterations: 50, grad_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    /// The Newton decrement fell to rounding level before the gradient
    /// tolerance was met.
    Stagnated,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSolveResult {
    pub view: ViewId,
    pub handle_ids: Vec<usize>,
    pub handle_positions: Vec<[f64; 3]>,
    pub objective: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
}

impl ViewSolveResult {
    pub fn positions(&self) -> Vec<Point3<f64>> {
        self.handle_positions.iter().map(|p| Point3::from(*p)).collect()
    }

    pub fn trace_json(&self) -> String {
        serde_json::json!({
            "view": self.view,
            "objective": self.trace,
            "iterations": self.iterations,
            "stop": self.stop,
        })
        .to_string()
    }
}

struct Problem<'a> {
    field: &'a WeightField,
    material: &'a MembraneMaterial,
    rest: DVector<f64>,
    rest_handles: &'a [Point3<f64>],
    a: nalgebra::Matrix2x3<f64>,
    b: nalgebra::Vector2<f64>,
    selected: Vec<(usize, nalgebra::Vector2<f64>)>,
    params: SolveParams,
}

fn to_points(x: &DVector<f64>) -> Vec<Point3<f64>> {
    (0..x.len() / 3).map(|j| Point3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2])).collect()
}

impl Problem<'_> {
    fn vertices(&self, x: &DVector<f64>) -> Vec<Point3<f64>> {
        apply_displacements(self.field, &self.material.reference, self.rest_handles, &to_points(x)).expect("dimensions checked")
    }

    fn handle(x: &DVector<f64>, j: usize) -> Vector3<f64> {
        Vector3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2])
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        let data: f64 = self.selected.iter().map(|(j, t)| (self.a * Self::handle(x, *j) + self.b - t).norm_squared()).sum();
        let anchor = self.params.epsilon * (x - &self.rest).norm_squared();
        let membrane = if self.params.lambda > 0.0 { self.params.lambda * self.material.energy(&self.vertices(x)) } else { 0.0 };
        data + anchor + membrane
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = 2.0 * self.params.epsilon * (x - &self.rest);
        for (j, t) in &self.selected {
            let r = self.a * Self::handle(x, *j) + self.b - t;
            let gj = 2.0 * self.a.transpose() * r;
            for c in 0..3 {
                g[3 * j + c] += gj[c];
            }
        }
        if self.params.lambda > 0.0 {
            let (_, gv) = self.material.energy_and_gradient(&self.vertices(x));
            let w = &self.field.weights;
            for j in 0..w.ncols() {
                let mut acc = Vector3::zeros();
                for (i, gi) in gv.iter().enumerate() {
                    let wij = w[(i, j)];
                    if wij != 0.0 {
                        acc += wij * gi;
                    }
                }
                for c in 0..3 {
                    g[3 * j + c] += self.params.lambda * acc[c];
                }
            }
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let mut h = DMatrix::identity(n, n) * (2.0 * self.params.epsilon);
        let ata = 2.0 * self.a.transpose() * self.a;
        for (j, _) in &self.selected {
            let mut block = h.view_mut((3 * j, 3 * j), (3, 3));
            block += ata;
        }
        if self.params.lambda > 0.0 {
            let verts = self.vertices(x);
            let w = &self.field.weights;
            let k = w.ncols();
            let mut jac = DMatrix::zeros(9, n);
            for (f, face) in self.material.faces.iter().enumerate() {
                if face.iter().all(|&v| w.row(v).iter().all(|&x| x == 0.0)) {
                    continue;
                }
                jac.fill(0.0);
                for (q, &v) in face.iter().enumerate() {
                    for j in 0..k {
                        let wv = w[(v, j)];
                        for c in 0..3 {
                            jac[(3 * q + c, 3 * j + c)] = wv;
                        }
                    }
                }
                let hf = DMatrix::from_column_slice(9, 9, self.material.face_hessian(f, &verts).as_slice());
                h += self.params.lambda * jac.transpose() * (hf * &jac);
            }
        }
        h
    }
}

/// Newton's method with a positive-definite diagonal shift and Armijo
/// backtracking, started from the rest handle positions.
pub fn solve_view(
    selection: &HandleSelection,
    field: &WeightField,
    material: &MembraneMaterial,
    view: &CameraView,
    rest_handles: &[Point3<f64>],
    params: &SolveParams,
) -> Result<ViewSolveResult> {
    let k = field.num_handles();
    if rest_handles.len() != k {
        return Err(DeformError::DimensionMismatch { expected: k, got: rest_handles.len() });
    }
    if material.reference.len() != field.num_vertices() {
        return Err(DeformError::DimensionMismatch { expected: field.num_vertices(), got: material.reference.len() });
    }
    if !(params.lambda >= 0.0 && params.epsilon >= 0.0) {
        return Err(DeformError::BadParameter(format!("lambda = {}, epsilon = {}", params.lambda, params.epsilon)));
    }
    let mut selected = Vec::new();
    for (&v, t) in selection.handles.iter().zip(&selection.targets) {
        let j = field.handle_ids.iter().position(|&h| h == v).ok_or(DeformError::UnknownHandle(v))?;
        selected.push((j, nalgebra::Vector2::new(t[0], t[1])));
    }
    let rest = DVector::from_iterator(3 * k, rest_handles.iter().flat_map(|p| [p.x, p.y, p.z]));
    let problem =
        Problem { field, material, rest: rest.clone(), rest_handles, a: view.linear_2x3(), b: view.offset(), selected, params: *params };

    let mut x = rest;
    let mut f = problem.objective(&x);
    if !f.is_finite() {
        return Err(DeformError::NonFiniteObjective);
    }
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;
    while iterations < params.max_iterations {
        let g = problem.gradient(&x);
        if g.amax() < params.grad_tol {
            stop = StopReason::Gradient;
            break;
        }
        let d = newton_direction(problem.hessian(&x), &g)?;
        let slope = g.dot(&d);
        if -slope <= 1e-14 * (1.0 + f.abs()) {
            stop = StopReason::Stagnated;
            break;
        }
        let mut t = 1.0;
        let accepted = loop {
            let candidate = &x + t * &d;
            let fc = problem.objective(&candidate);
            if fc.is_finite() && fc <= f + ARMIJO_C * t * slope {
                break Some((candidate, fc));
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        let Some((xn, fnew)) = accepted else {
            if -slope <= 1e-9 * (1.0 + f.abs()) {
                stop = StopReason::Stagnated;
                break;
            }
            return Err(DeformError::LineSearchFailed { iteration: iterations, objective: f });
        };
        x = xn;
        f = fnew;
        trace.push(f);
        iterations += 1;
    }
    let handle_positions = to_points(&x).iter().map(|p| [p.x, p.y, p.z]).collect();
    Ok(ViewSolveResult {
        view: selection.view,
        handle_ids: field.handle_ids.clone(),
        handle_positions,
        objective: f,
        iterations,
        stop,
        trace,
    })
}

fn newton_direction(mut h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    let scale = h.diagonal().amax().max(1.0);
    let mut shift = 0.0;
    for _ in 0..40 {
        if let Some(chol) = h.clone().cholesky() {
            return Ok(-chol.solve(g));
        }
        let next = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
        for i in 0..n {
            h[(i, i)] += next - shift;
        }
        shift = next;
    }
    Err(DeformError::NonFiniteObjective)
}

/// Per-handle mean of the view solutions.
pub fn vote_multiview(results: &[ViewSolveResult]) -> Result<Vec<Point3<f64>>> {
    let first = results.first().ok_or(DeformError::EmptyResults)?;
    if results.iter().any(|r| r.handle_ids != first.handle_ids) {
        return Err(DeformError::OrderingMismatch);
    }
    let m = results.len() as f64;
    Ok((0..first.handle_ids.len())
        .map(|j| {
            let sum = results.iter().fold(Vector3::zeros(), |acc, r| acc + Vector3::from(r.handle_positions[j]));
            Point3::from(sum / m)
        })
        .collect())
}
