//! Handle super-set detection from angle-defect concentration, restriction to
//! the deformable part, and snapping of screen-space picks to handles.

use std::f64::consts::PI;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::TriMesh;
use crate::raster::{self, CameraView, RasterBuffers, RenderStyle, ViewId};
use crate::segment::VertexLabeling;

pub const DEFAULT_TAU: f64 = 0.22;
pub const DEFAULT_SPACING: f64 = 0.05;
/// Detection gives up once the bound drops below this.
pub const MIN_TAU: f64 = 1e-3;
/// Above this many handles a warning is logged.
pub const LARGE_SUPERSET: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum HandleError {
    #[error("no handles found (distortion bound fell to {tau:.2e})")]
    NoHandlesFound { tau: f64 },
    #[error("pick ({x}, {y}) lies outside the image")]
    OffscreenPick { x: f64, y: f64 },
    #[error("no picks given")]
    NoPicks,
    #[error("{picks} picks but {targets} targets")]
    TargetCountMismatch { picks: usize, targets: usize },
    #[error("labeling has {got} vertices, mesh has {expected}")]
    LabelingMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

pub type Result<T, E = HandleError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handle {
    pub vertex: usize,
    pub position: [f64; 3],
    pub defect: f64,
}

impl Handle {
    pub fn point(&self) -> Point3<f64> {
        Point3::from(self.position)
    }
}

/// Candidate handles sorted by descending `|defect|`, then vertex id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandleSuperSet {
    pub handles: Vec<Handle>,
    pub tau_used: f64,
    pub halvings: u32,
}

impl HandleSuperSet {
    pub fn len(&self) -> usize {
        self.handles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.handles.is_empty()
    }

    pub fn vertex_ids(&self) -> Vec<usize> {
        self.handles.iter().map(|h| h.vertex).collect()
    }

    pub fn positions(&self) -> Vec<Point3<f64>> {
        self.handles.iter().map(Handle::point).collect()
    }

    /// Index of `vertex` within the super-set ordering.
    pub fn index_of(&self, vertex: usize) -> Option<usize> {
        self.handles.iter().position(|h| h.vertex == vertex)
    }

    /// Handles placed at explicit vertices, for manual use.
    pub fn from_vertices(mesh: &TriMesh, vertices: &[usize]) -> Self {
        let defects = mesh.angle_defects();
        let handles = vertices
            .iter()
            .map(|&v| Handle { vertex: v, position: mesh.vertices()[v].coords.into(), defect: defects[v] })
            .collect();
        HandleSuperSet { handles, tau_used: f64::NAN, halvings: 0 }
    }

    pub fn project(&self, view: &CameraView) -> Vec<[f64; 2]> {
        self.handles.iter().map(|h| view.project(&h.point()).coords.into()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("handle set serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

fn check_labeling(mesh: &TriMesh, labeling: &VertexLabeling) -> Result<()> {
    if labeling.labels.len() != mesh.num_vertices() {
        return Err(HandleError::LabelingMismatch { expected: mesh.num_vertices(), got: labeling.labels.len() });
    }
    Ok(())
}

/// Greedy selection of vertices with `|K| >= 2 pi tau` in descending `|K|`,
/// skipping vertices within `spacing * bbox diagonal` of a chosen one. With a
/// labeling only deformable vertices are candidates. An empty result halves
/// `tau` and retries until it drops below [`MIN_TAU`].
pub fn detect_handles(mesh: &TriMesh, labeling: Option<&VertexLabeling>, tau0: f64, spacing: f64) -> Result<HandleSuperSet> {
    if !(tau0 > 0.0 && tau0 <= 1.0) {
        return Err(HandleError::BadParameter(format!("tau0 = {tau0}")));
    }
    if !(spacing >= 0.0) {
        return Err(HandleError::BadParameter(format!("spacing = {spacing}")));
    }
    if let Some(l) = labeling {
        check_labeling(mesh, l)?;
    }
    let defects = mesh.angle_defects();
    let mut order: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| labeling.is_none_or(|l| l.labels[v])).collect();
    order.sort_by(|&a, &b| defects[b].abs().total_cmp(&defects[a].abs()).then(a.cmp(&b)));
    let min_dist = spacing * mesh.bbox().diagonal();
    let verts = mesh.vertices();

    let mut tau = tau0;
    let mut halvings = 0;
    loop {
        let threshold = 2.0 * PI * tau;
        let mut chosen: Vec<usize> = Vec::new();
        for &v in order.iter().take_while(|&&v| defects[v].abs() >= threshold) {
            if chosen.iter().all(|&c| (verts[c] - verts[v]).norm() >= min_dist) {
                chosen.push(v);
            }
        }
        if !chosen.is_empty() {
            if chosen.len() > LARGE_SUPERSET {
                log::warn!("{} handles detected; expected a few dozen", chosen.len());
            }
            log::debug!("{} handles at tau {tau} after {halvings} halvings", chosen.len());
            let handles = chosen
                .into_iter()
                .map(|v| Handle { vertex: v, position: verts[v].coords.into(), defect: defects[v] })
                .collect();
            return Ok(HandleSuperSet { handles, tau_used: tau, halvings });
        }
        tau *= 0.5;
        halvings += 1;
        if tau < MIN_TAU {
            return Err(HandleError::NoHandlesFound { tau });
        }
    }
}

/// Keeps the handles on deformable vertices.
pub fn restrict_to_subpart(set: &HandleSuperSet, labeling: &VertexLabeling) -> Result<HandleSuperSet> {
    let handles: Vec<Handle> =
        set.handles.iter().filter(|h| labeling.labels.get(h.vertex).copied().unwrap_or(false)).cloned().collect();
    if handles.is_empty() {
        return Err(HandleError::NoHandlesFound { tau: set.tau_used });
    }
    Ok(HandleSuperSet { handles, tau_used: set.tau_used, halvings: set.halvings })
}

/// Handles `H` picked in one view with their pixel targets `v*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandleSelection {
    pub view: ViewId,
    pub handles: Vec<usize>,
    pub targets: Vec<[f64; 2]>,
}

fn on_screen(p: &[f64; 2], view: &CameraView) -> bool {
    p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= view.width as f64 && p[1] <= view.height as f64
}

/// Nearest projected handle to `pick`; ties go to the lowest vertex id.
pub fn nearest_handle(pick: [f64; 2], set: &HandleSuperSet, view: &CameraView) -> Option<(usize, f64)> {
    set.handles
        .iter()
        .map(|h| {
            let q = view.project(&h.point());
            (h.vertex, ((q.x - pick[0]).powi(2) + (q.y - pick[1]).powi(2)).sqrt())
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

/// Snaps each pick to its nearest handle and pairs it with a target pixel.
/// A handle picked twice keeps its first target.
pub fn resolve_drags(picks: &[[f64; 2]], targets: &[[f64; 2]], set: &HandleSuperSet, view: &CameraView) -> Result<HandleSelection> {
    if picks.is_empty() {
        return Err(HandleError::NoPicks);
    }
    if picks.len() != targets.len() {
        return Err(HandleError::TargetCountMismatch { picks: picks.len(), targets: targets.len() });
    }
    if set.is_empty() {
        return Err(HandleError::NoHandlesFound { tau: set.tau_used });
    }
    let mut sel = HandleSelection { view: view.id, handles: Vec::new(), targets: Vec::new() };
    for (pick, target) in picks.iter().zip(targets) {
        for p in [pick, target] {
            if !on_screen(p, view) {
                return Err(HandleError::OffscreenPick { x: p[0], y: p[1] });
            }
        }
        let (v, _) = nearest_handle(*pick, set, view).expect("set is nonempty");
        if !sel.handles.contains(&v) {
            sel.handles.push(v);
            sel.targets.push(*target);
        }
    }
    Ok(sel)
}

/// Snaps picks to handles with the picks themselves as targets.
pub fn resolve_selection(picks: &[[f64; 2]], set: &HandleSuperSet, view: &CameraView) -> Result<HandleSelection> {
    resolve_drags(picks, picks, set, view)
}

/// Shaded render with the super-set drawn as yellow dots.
pub fn render_overlay(mesh: &TriMesh, view: &CameraView, set: &HandleSuperSet) -> RasterBuffers {
    let points = set.positions();
    raster::rasterize_with(mesh, view, &RenderStyle { handles: Some(&points), ..Default::default() })
}
