//! Local REST service exposing every stage for interactive, stepwise use.
//!
//! Session stages advance `loaded -> rendered -> segmented -> handled ->
//! deformed`. Each stage may be redone or overwritten once reached;
//! requesting one whose inputs are missing yields 409.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uuid::Uuid;

use crate::handles::{self, HandleSelection, HandleSuperSet};
use crate::mesh::{self, Normalization, TriMesh};
use crate::oracle::{Oracle, PartQueryResult};
use crate::pipeline::{self, PipelineConfig, PipelineError, RenderedView, RunReport};
use crate::raster::{CameraView, ViewId};
use crate::segment::{self, FaceLabeling, PixelMask, VertexLabeling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Loaded,
    Rendered,
    Segmented,
    Handled,
    Deformed,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.message}))).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Oracle(crate::oracle::OracleError::BackendUnavailable(_)) => {
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string())
            }
            other => ApiError::bad(other.to_string()),
        }
    }
}

macro_rules! from_bad_request {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(e: $t) -> Self {
                ApiError::bad(e.to_string())
            }
        }
    )*};
}
from_bad_request!(
    crate::mesh::MeshError,
    crate::segment::SegmentError,
    crate::handles::HandleError,
    crate::oracle::OracleError,
    crate::raster::RasterError,
    crate::deform::DeformError
);

type ApiResult<T> = Result<T, ApiError>;

struct Session {
    stage: Stage,
    input: TriMesh,
    norm: Normalization,
    /// Current mesh in the normalized frame.
    mesh: TriMesh,
    views: Option<Vec<RenderedView>>,
    masks: Vec<PixelMask>,
    labeling: Option<FaceLabeling>,
    vertex_labels: Option<VertexLabeling>,
    handles: Option<HandleSuperSet>,
    selections: Vec<HandleSelection>,
    sub_instructions: Vec<String>,
    part: Option<PartQueryResult>,
    oracle: Option<Oracle>,
    last_deform: Option<Value>,
    last_run: Option<RunReport>,
}

impl Session {
    fn require(&self, stage: Stage) -> ApiResult<()> {
        if self.stage < stage {
            return Err(ApiError::conflict(format!("session is {:?}; {:?} required", self.stage, stage)));
        }
        Ok(())
    }

    fn advance(&mut self, stage: Stage) {
        self.stage = stage;
    }

    fn ensure_views(&mut self, count: usize) -> ApiResult<()> {
        if self.views.is_none() {
            self.views = Some(pipeline::render_views(&self.mesh, count)?);
            if self.stage == Stage::Loaded || self.stage == Stage::Deformed {
                self.stage = Stage::Rendered;
                self.labeling = None;
                self.vertex_labels = None;
                self.handles = None;
                self.selections.clear();
            }
        }
        Ok(())
    }

    fn oracle(&self) -> ApiResult<&Oracle> {
        self.oracle.as_ref().ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no oracle backend configured"))
    }

    fn instruction(&self) -> ApiResult<String> {
        self.sub_instructions.first().cloned().ok_or_else(|| ApiError::conflict("no instruction set; POST .../instruction first"))
    }

    fn set_mesh(&mut self, mesh: TriMesh) {
        self.mesh = mesh;
        self.views = None;
        self.stage = Stage::Deformed;
    }
}

pub struct AppState {
    config: PipelineConfig,
    sessions: Mutex<HashMap<Uuid, Arc<Mutex<Session>>>>,
}

type Shared = Arc<AppState>;

impl AppState {
    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        let id = Uuid::parse_str(id).map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "unknown session"))?;
        self.sessions.lock().unwrap().get(&id).cloned().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown session"))
    }
}

/// Runs `f` on the locked session off the async executor.
async fn with_session<T: Send + 'static>(
    state: &Shared,
    id: &str,
    f: impl FnOnce(&mut Session, &PipelineConfig) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let session = state.session(id)?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = session.lock().unwrap();
        f(&mut s, &state.config)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

pub fn router(config: PipelineConfig) -> Router {
    let state = Arc::new(AppState { config, sessions: Mutex::new(HashMap::new()) });
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/views/{file}", get(get_view))
        .route("/sessions/{id}/segment", post(segment))
        .route("/sessions/{id}/labeling", get(get_labeling).put(put_labeling))
        .route("/sessions/{id}/handles/detect", post(detect))
        .route("/sessions/{id}/handles/selection", put(put_selection))
        .route("/sessions/{id}/deform", post(deform))
        .route("/sessions/{id}/instruction", post(instruction))
        .route("/sessions/{id}/mesh.obj", get(get_mesh))
        .route("/sessions/{id}/report", get(get_report))
        .with_state(state)
}

pub async fn serve(config: PipelineConfig, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(config)).await
}

async fn create_session(State(state): State<Shared>, body: String) -> ApiResult<(StatusCode, Json<Value>)> {
    let config = state.config.clone();
    let (mesh, oracle) = tokio::task::spawn_blocking(move || {
        let mesh = if body.trim_start().starts_with("OFF") { mesh::parse_off(&body) } else { mesh::parse_obj(&body) };
        let oracle = config.build_oracle().map_err(|e| log::warn!("session without oracle: {e}")).ok();
        (mesh, oracle)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let input = mesh?;
    let (normalized, norm) = input.normalize_to_unit();
    let id = Uuid::new_v4();
    let reply = json!({"id": id.to_string(), "vertices": input.num_vertices(), "faces": input.num_faces(), "stage": Stage::Loaded});
    let session = Session {
        stage: Stage::Loaded,
        input,
        norm,
        mesh: normalized,
        views: None,
        masks: Vec::new(),
        labeling: None,
        vertex_labels: None,
        handles: None,
        selections: Vec::new(),
        sub_instructions: Vec::new(),
        part: None,
        oracle,
        last_deform: None,
        last_run: None,
    };
    state.sessions.lock().unwrap().insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(reply)))
}

#[derive(Debug, Default, Deserialize)]
struct ViewQuery {
    /// `labeling` tints deformable faces; `handles` draws the super-set.
    overlay: Option<String>,
}

async fn get_view(State(state): State<Shared>, Path((id, file)): Path<(String, String)>, Query(q): Query<ViewQuery>) -> ApiResult<Response> {
    let name = file.strip_suffix(".png").ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "views are served as .png"))?;
    let view: ViewId = name.parse().map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("unknown view '{name}'")))?;
    let png = with_session(&state, &id, move |s, cfg| {
        s.ensure_views(cfg.view_count)?;
        let rendered = s.views.as_ref().unwrap().iter().find(|v| v.camera.id == view).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "view not rendered"))?;
        let png = match q.overlay.as_deref() {
            None => rendered.png.clone(),
            Some("labeling") => {
                let l = s.labeling.as_ref().ok_or_else(|| ApiError::conflict("no labeling yet"))?;
                segment::render_labeling(&s.mesh, &rendered.camera, l).to_png()?
            }
            Some("handles") => {
                let h = s.handles.as_ref().ok_or_else(|| ApiError::conflict("no handles yet"))?;
                handles::render_overlay(&s.mesh, &rendered.camera, h).to_png()?
            }
            Some(other) => return Err(ApiError::bad(format!("unknown overlay '{other}'"))),
        };
        Ok(png)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct SegmentRequest {
    /// View id to base64 PNG. Without masks the oracle supplies them.
    #[serde(default)]
    masks: BTreeMap<String, String>,
    w0: Option<f64>,
}

fn labeling_json(l: &FaceLabeling) -> Value {
    json!({
        "labels": l.labels.iter().map(|&b| b as u8).collect::<Vec<_>>(),
        "energy": l.energy,
        "deformable_faces": l.deformable_count(),
    })
}

async fn segment(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: SegmentRequest = if body.is_empty() { SegmentRequest::default() } else { serde_json::from_slice(&body).map_err(|e| ApiError::bad(e.to_string()))? };
    with_session(&state, &id, move |s, cfg| {
        s.ensure_views(cfg.view_count)?;
        s.require(Stage::Rendered)?;
        let masks = if req.masks.is_empty() {
            let instruction = s.instruction()?;
            let views = s.views.as_ref().unwrap();
            let oracle = s.oracle()?;
            let images: Vec<(ViewId, Vec<u8>)> = views.iter().map(|v| (v.camera.id, v.png.clone())).collect();
            let part = oracle.identify_part_and_views(&instruction, &images)?;
            let inputs: Vec<(ViewId, &[u8])> =
                views.iter().filter(|v| part.chosen_views.contains(&v.camera.id)).map(|v| (v.camera.id, v.png.as_slice())).collect();
            let masks = oracle.masks_for_part(&part.part_name, &inputs)?;
            s.part = Some(part);
            masks
        } else {
            let mut masks = Vec::new();
            for (name, b64) in &req.masks {
                let view: ViewId = name.parse()?;
                let bytes = base64::engine::general_purpose::STANDARD.decode(b64).map_err(|e| ApiError::bad(format!("mask {name}: {e}")))?;
                masks.push(PixelMask::from_png(view, &bytes)?);
            }
            masks
        };
        let labeling = pipeline::segment_stage(&s.mesh, s.views.as_ref().unwrap(), &masks, req.w0.unwrap_or(cfg.w0))?;
        let reply = labeling_json(&labeling);
        s.vertex_labels = Some(segment::lift_to_vertices(&labeling, &s.mesh)?);
        s.labeling = Some(labeling);
        s.masks = masks;
        s.handles = None;
        s.selections.clear();
        s.advance(Stage::Segmented);
        Ok(Json(reply))
    })
    .await
}

async fn get_labeling(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    with_session(&state, &id, |s, _| {
        s.require(Stage::Segmented)?;
        Ok(Json(labeling_json(s.labeling.as_ref().ok_or_else(|| ApiError::conflict("no labeling"))?)))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct LabelingBody {
    labels: Vec<u8>,
}

async fn put_labeling(State(state): State<Shared>, Path(id): Path<String>, Json(body): Json<LabelingBody>) -> ApiResult<Json<Value>> {
    with_session(&state, &id, move |s, cfg| {
        s.ensure_views(cfg.view_count)?;
        if body.labels.len() != s.mesh.num_faces() || body.labels.iter().any(|&l| l > 1) {
            return Err(ApiError::bad(format!("expected {} labels of 0 or 1", s.mesh.num_faces())));
        }
        let labels: Vec<bool> = body.labels.iter().map(|&l| l == 1).collect();
        let labeling = FaceLabeling { labels, energy: f64::NAN };
        s.vertex_labels = Some(segment::lift_to_vertices(&labeling, &s.mesh)?);
        let reply = labeling_json(&labeling);
        s.labeling = Some(labeling);
        s.handles = None;
        s.selections.clear();
        s.advance(Stage::Segmented);
        Ok(Json(reply))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
struct DetectRequest {
    tau0: Option<f64>,
    spacing: Option<f64>,
}

fn handles_json(set: &HandleSuperSet) -> Value {
    let projected: BTreeMap<String, Vec<[f64; 2]>> = ViewId::ALL.iter().map(|&v| (v.to_string(), set.project(&CameraView::axis(v)))).collect();
    json!({"handles": set, "projected": projected})
}

async fn detect(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: DetectRequest = if body.is_empty() { DetectRequest::default() } else { serde_json::from_slice(&body).map_err(|e| ApiError::bad(e.to_string()))? };
    with_session(&state, &id, move |s, cfg| {
        s.require(Stage::Segmented)?;
        let labels = s.vertex_labels.as_ref().ok_or_else(|| ApiError::conflict("no labeling"))?;
        let cfg = PipelineConfig { tau0: req.tau0.unwrap_or(cfg.tau0), spacing: req.spacing.unwrap_or(cfg.spacing), ..cfg.clone() };
        let set = pipeline::handles_stage(&s.mesh, labels, &cfg)?;
        let reply = handles_json(&set);
        s.handles = Some(set);
        s.selections.clear();
        s.advance(Stage::Handled);
        Ok(Json(reply))
    })
    .await
}

#[derive(Debug, Clone, Deserialize)]
struct DragSpec {
    view: ViewId,
    picks: Vec<[f64; 2]>,
    targets: Vec<[f64; 2]>,
}

fn resolve_all(s: &Session, drags: &[DragSpec]) -> ApiResult<Vec<HandleSelection>> {
    let set = s.handles.as_ref().ok_or_else(|| ApiError::conflict("no handles"))?;
    drags.iter().map(|d| Ok(handles::resolve_drags(&d.picks, &d.targets, set, &CameraView::axis(d.view))?)).collect()
}

#[derive(Debug, Deserialize)]
struct SelectionBody {
    selections: Vec<DragSpec>,
}

async fn put_selection(State(state): State<Shared>, Path(id): Path<String>, Json(body): Json<SelectionBody>) -> ApiResult<Json<Value>> {
    with_session(&state, &id, move |s, _| {
        s.require(Stage::Handled)?;
        let sels = resolve_all(s, &body.selections)?;
        s.selections = sels.clone();
        Ok(Json(json!({"selections": sels})))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DeformMode {
    Oracle,
    Manual,
}

#[derive(Debug, Deserialize)]
struct DeformRequest {
    mode: DeformMode,
    targets: Option<Vec<DragSpec>>,
}

async fn deform(State(state): State<Shared>, Path(id): Path<String>, Json(req): Json<DeformRequest>) -> ApiResult<Json<Value>> {
    with_session(&state, &id, move |s, cfg| {
        s.require(Stage::Handled)?;
        let set = s.handles.clone().ok_or_else(|| ApiError::conflict("no handles"))?;
        let selections = match req.mode {
            DeformMode::Manual => match &req.targets {
                Some(t) => resolve_all(s, t)?,
                None if !s.selections.is_empty() => s.selections.clone(),
                None => return Err(ApiError::bad("manual mode needs targets or a stored selection")),
            },
            DeformMode::Oracle => {
                let instruction = s.instruction()?;
                let views: Vec<ViewId> = s.part.as_ref().map_or_else(|| ViewId::ALL.to_vec(), |p| p.chosen_views.clone());
                let oracle = s.oracle()?;
                let mut sels = Vec::new();
                for v in views {
                    let cam = CameraView::axis(v);
                    let visible = pipeline::visible_handles(&s.mesh, &set, &cam);
                    if visible.is_empty() {
                        continue;
                    }
                    let overlay = handles::render_overlay(&s.mesh, &cam, &set).to_png()?;
                    let reply = oracle.select_handles(&instruction, v, &overlay, &visible.project(&cam))?;
                    sels.push(handles::resolve_drags(&reply.handles, &reply.new_positions, &visible, &cam)?);
                }
                sels
            }
        };
        if selections.is_empty() {
            return Err(ApiError::bad("no view selections to solve"));
        }
        let labels = s.vertex_labels.clone().ok_or_else(|| ApiError::conflict("no labeling"))?;
        let outcome = pipeline::deform_stage(&s.mesh, &labels, &set, &selections, cfg)?;
        let distortion = pipeline::distortion_metric(&s.mesh, &outcome.mesh)?;
        let out = s.norm.invert_mesh(&outcome.mesh);
        let reply = json!({
            "vertices": out.vertices().iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>(),
            "distortion": distortion,
            "views": outcome.results.iter().map(|r| json!({
                "view": r.view, "iterations": r.iterations, "objective": r.objective, "stop": r.stop,
            })).collect::<Vec<_>>(),
            "selections": selections,
        });
        s.last_deform = Some(json!({"distortion": distortion, "views": reply["views"].clone()}));
        s.selections = selections;
        s.set_mesh(outcome.mesh);
        if !s.sub_instructions.is_empty() {
            s.sub_instructions.remove(0);
        }
        Ok(Json(reply))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct InstructionRequest {
    text: String,
    /// Run every stage now (default) or only split the text into steps.
    #[serde(default = "yes")]
    run: bool,
}

fn yes() -> bool {
    true
}

async fn instruction(State(state): State<Shared>, Path(id): Path<String>, Json(req): Json<InstructionRequest>) -> ApiResult<Json<Value>> {
    if req.text.trim().is_empty() {
        return Err(ApiError::bad("empty instruction"));
    }
    with_session(&state, &id, move |s, cfg| {
        let current = s.norm.invert_mesh(&s.mesh);
        let oracle = s.oracle()?;
        if req.run {
            let out = pipeline::run_pipeline_with(&current, &req.text, &PipelineConfig { output_dir: None, ..cfg.clone() }, oracle)?;
            let normalized = s.norm.apply_mesh(&out.mesh);
            let report = serde_json::to_value(&out.report).map_err(|e| ApiError::bad(e.to_string()))?;
            s.last_run = Some(out.report);
            s.sub_instructions.clear();
            s.set_mesh(normalized);
            Ok(Json(report))
        } else {
            let plan = oracle.decompose_instruction(&req.text)?;
            s.sub_instructions = plan.sub_instructions.clone();
            Ok(Json(json!({"sub_instructions": plan.sub_instructions})))
        }
    })
    .await
}

async fn get_mesh(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let obj = with_session(&state, &id, |s, _| Ok(s.norm.invert_mesh(&s.mesh).to_obj_string())).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain")], obj).into_response())
}

async fn get_report(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    with_session(&state, &id, |s, _| {
        let current = s.norm.invert_mesh(&s.mesh);
        Ok(Json(json!({
            "stage": s.stage,
            "pending_instructions": s.sub_instructions,
            "part": s.part,
            "deformable_faces": s.labeling.as_ref().map(FaceLabeling::deformable_count),
            "handle_count": s.handles.as_ref().map(HandleSuperSet::len),
            "selections": s.selections,
            "last_deform": s.last_deform,
            "pipeline": s.last_run,
            "api_calls": s.oracle.as_ref().map(Oracle::calls),
            "distortion": pipeline::distortion_metric(&s.input, &current)?,
        })))
    })
    .await
}
