//! End-to-end chaining of the stages per sub-instruction, plus the
//! distortion metric and run report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::deform::{
    self, apply_displacements, arap_deform, biharmonic_weights_anchored, solve_view, vote_multiview, ArapParams, DeformError,
    MembraneMaterial, SolveParams, StopReason, ViewSolveResult,
};
use crate::handles::{self, HandleError, HandleSelection, HandleSuperSet};
use crate::mesh::{MeshError, TriMesh};
use crate::oracle::{self, FileMaskBackend, HttpMaskBackend, LiveBackend, LiveConfig, Oracle, OracleError, ReplayBackend, Transcript};
use crate::raster::{self, CameraView, RasterBuffers, RasterError, RenderStyle, ViewId};
use crate::segment::{self, FaceLabeling, PixelMask, SegmentError, VertexLabeling};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Handles(#[from] HandleError),
    #[error(transparent)]
    Deform(#[from] DeformError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("meshes differ in topology")]
    TopologyMismatch,
    #[error("no chosen view shows any handle")]
    NoVisibleHandles,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleChoice {
    Replay { dir: PathBuf },
    Live,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskChoice {
    File { dir: PathBuf },
    Http { url: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deformer {
    #[default]
    Biharmonic,
    Arap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub w0: f64,
    pub tau0: f64,
    pub spacing: f64,
    pub view_count: usize,
    pub max_newton_iterations: usize,
    pub retries: u32,
    pub call_budget: usize,
    pub timeout_secs: u64,
    pub deformer: Deformer,
    pub oracle: OracleChoice,
    pub masks: MaskChoice,
    /// Intermediate artifacts and outputs go here when set.
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lambda: deform::solve::DEFAULT_LAMBDA,
            epsilon: deform::solve::DEFAULT_EPSILON,
            w0: segment::DEFAULT_W0,
            tau0: handles::DEFAULT_TAU,
            spacing: handles::DEFAULT_SPACING,
            view_count: 6,
            max_newton_iterations: 50,
            retries: oracle::DEFAULT_RETRIES,
            call_budget: oracle::DEFAULT_BUDGET,
            timeout_secs: 120,
            deformer: Deformer::Biharmonic,
            oracle: OracleChoice::Live,
            masks: MaskChoice::File { dir: PathBuf::from("masks") },
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("w0", self.w0), ("tau0", self.tau0)];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(PipelineError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("lambda", self.lambda), ("epsilon", self.epsilon), ("spacing", self.spacing)] {
            if !(v >= 0.0) {
                return Err(PipelineError::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.tau0 > 1.0 {
            return Err(PipelineError::Config(format!("tau0 must be at most 1, got {}", self.tau0)));
        }
        if !(1..=6).contains(&self.view_count) {
            return Err(PipelineError::Config(format!("view_count must be 1..=6, got {}", self.view_count)));
        }
        Ok(())
    }

    pub fn solve_params(&self) -> SolveParams {
        SolveParams { lambda: self.lambda, epsilon: self.epsilon, max_iterations: self.max_newton_iterations, ..Default::default() }
    }

    /// Oracle built from the backend choices; live mode reads its settings
    /// from the environment.
    pub fn build_oracle(&self) -> Result<Oracle> {
        let timeout = Duration::from_secs(self.timeout_secs);
        let backend: Box<dyn oracle::OracleBackend> = match &self.oracle {
            OracleChoice::Replay { dir } => Box::new(ReplayBackend::new(dir)),
            OracleChoice::Live => Box::new(LiveBackend::new(LiveConfig::from_env(timeout)?)),
        };
        let masks: Box<dyn oracle::MaskBackend> = match &self.masks {
            MaskChoice::File { dir } => Box::new(FileMaskBackend::new(dir)),
            MaskChoice::Http { url } => Box::new(HttpMaskBackend::new(url, timeout)),
        };
        Ok(Oracle::new(backend, masks).with_retries(self.retries).with_budget(self.call_budget))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub view: ViewId,
    pub selected: usize,
    pub iterations: usize,
    pub objective: f64,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub instruction: String,
    pub part: String,
    pub views: Vec<ViewId>,
    pub deformable_faces: usize,
    pub handle_count: usize,
    pub tau_used: f64,
    pub halvings: u32,
    pub per_view: Vec<ViewReport>,
    pub skipped_views: Vec<ViewId>,
    pub distortion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub text: String,
    pub sub_instructions: Vec<String>,
    pub steps: Vec<StepReport>,
    pub api_calls: usize,
    pub oracle_backend: String,
    /// Membrane distortion of the final mesh against the input.
    pub distortion: f64,
    pub wall_time_secs: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Report JSON without timing fields, for run-to-run comparison.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("wall_time_secs");
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub mesh: TriMesh,
    pub report: RunReport,
    pub transcript: Transcript,
}

/// Membrane energy of `deformed` measured against `reference` (`mu = lam = 1`).
pub fn distortion_metric(reference: &TriMesh, deformed: &TriMesh) -> Result<f64> {
    if !reference.same_topology(deformed) {
        return Err(PipelineError::TopologyMismatch);
    }
    Ok(MembraneMaterial::unit(reference).energy(deformed.vertices()))
}

#[derive(Debug, Clone)]
pub struct RenderedView {
    pub camera: CameraView,
    pub buffers: RasterBuffers,
    pub png: Vec<u8>,
}

/// Shaded renders from the first `count` axis views.
pub fn render_views(mesh: &TriMesh, count: usize) -> Result<Vec<RenderedView>> {
    raster::make_axis_views()
        .into_iter()
        .take(count)
        .map(|camera| {
            let buffers = raster::rasterize(mesh, &camera);
            let png = buffers.to_png()?;
            Ok(RenderedView { camera, buffers, png })
        })
        .collect()
}

/// Masks to a face labeling using already rendered views.
pub fn segment_stage(mesh: &TriMesh, views: &[RenderedView], masks: &[PixelMask], w0: f64) -> Result<FaceLabeling> {
    let footprints: Vec<_> = views.iter().map(|v| raster::face_footprints(&v.buffers, mesh.num_faces())).collect();
    let indicators = segment::mask_indicators(mesh.num_faces(), masks, &footprints)?;
    let weights = segment::smoothness_weights(mesh, w0)?;
    Ok(segment::graph_cut_segment(&indicators, &weights))
}

pub fn handles_stage(mesh: &TriMesh, labeling: &VertexLabeling, config: &PipelineConfig) -> Result<HandleSuperSet> {
    let set = handles::detect_handles(mesh, Some(labeling), config.tau0, config.spacing)?;
    Ok(handles::restrict_to_subpart(&set, labeling)?)
}

/// Handles of `set` whose dot is visible in `view`.
pub fn visible_handles(mesh: &TriMesh, set: &HandleSuperSet, view: &CameraView) -> HandleSuperSet {
    let buf = raster::rasterize_with(mesh, view, &RenderStyle { buffers_only: true, ..Default::default() });
    let handles = set.handles.iter().filter(|h| raster::handle_visible(&buf, view, &h.point())).cloned().collect();
    HandleSuperSet { handles, tau_used: set.tau_used, halvings: set.halvings }
}

#[derive(Debug, Clone)]
pub struct DeformOutcome {
    pub mesh: TriMesh,
    pub results: Vec<ViewSolveResult>,
    pub handle_positions: Vec<Point3<f64>>,
}

/// Solves every selection's view, votes, and moves the mesh. Non-deformable
/// vertices stay fixed.
pub fn deform_stage(
    mesh: &TriMesh,
    labeling: &VertexLabeling,
    set: &HandleSuperSet,
    selections: &[HandleSelection],
    config: &PipelineConfig,
) -> Result<DeformOutcome> {
    let fixed: Vec<bool> = labeling.labels.iter().map(|&l| !l).collect();
    let field = biharmonic_weights_anchored(mesh, set, &fixed)?;
    let material = MembraneMaterial::unit(mesh);
    let rest = set.positions();
    let params = config.solve_params();
    let views: Vec<CameraView> = selections.iter().map(|s| CameraView::axis(s.view)).collect();
    let results: Vec<ViewSolveResult> = std::thread::scope(|scope| {
        let jobs: Vec<_> = selections
            .iter()
            .zip(&views)
            .map(|(sel, view)| scope.spawn(|| solve_view(sel, &field, &material, view, &rest, &params)))
            .collect();
        jobs.into_iter().map(|j| j.join().expect("solver thread panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    let voted = vote_multiview(&results)?;
    let positions = match config.deformer {
        Deformer::Biharmonic => apply_displacements(&field, mesh.vertices(), &rest, &voted)?,
        Deformer::Arap => {
            let mut constraints: Vec<(usize, Point3<f64>)> = set.vertex_ids().into_iter().zip(voted.iter().copied()).collect();
            constraints.extend((0..mesh.num_vertices()).filter(|&v| fixed[v]).map(|v| (v, mesh.vertices()[v])));
            arap_deform(mesh, &constraints, &ArapParams::default())?.positions
        }
    };
    Ok(DeformOutcome { mesh: mesh.with_vertices(positions)?, results, handle_positions: voted })
}

struct Artifacts(Option<PathBuf>);

impl Artifacts {
    fn dir(&self, rel: &str) -> Result<Option<PathBuf>> {
        match &self.0 {
            Some(root) => {
                let d = root.join(rel);
                fs::create_dir_all(&d)?;
                Ok(Some(d))
            }
            None => Ok(None),
        }
    }

    fn write(&self, rel_dir: &str, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        if let Some(d) = self.dir(rel_dir)? {
            fs::write(d.join(name), bytes)?;
        }
        Ok(())
    }
}

pub fn run_pipeline(mesh: &TriMesh, text: &str, config: &PipelineConfig) -> Result<PipelineOutput> {
    let oracle = config.build_oracle()?;
    run_pipeline_with(mesh, text, config, &oracle)
}

/// Runs every sub-instruction in order; each result is the reference mesh
/// for the next. On failure the transcript so far is still written.
pub fn run_pipeline_with(mesh: &TriMesh, text: &str, config: &PipelineConfig, oracle: &Oracle) -> Result<PipelineOutput> {
    config.validate()?;
    let artifacts = Artifacts(config.output_dir.clone());
    let result = run_inner(mesh, text, config, oracle, &artifacts);
    if let Some(dir) = &config.output_dir {
        oracle.transcript().save(dir.join("transcript"))?;
    }
    let out = result?;
    if let Some(dir) = &config.output_dir {
        out.mesh.save_obj(dir.join("out.obj"))?;
        fs::write(dir.join("report.json"), out.report.to_json() + "\n")?;
    }
    Ok(out)
}

fn run_inner(input: &TriMesh, text: &str, config: &PipelineConfig, oracle: &Oracle, artifacts: &Artifacts) -> Result<PipelineOutput> {
    let start = Instant::now();
    let (mut mesh, norm) = input.normalize_to_unit();
    let plan = oracle.decompose_instruction(text)?;
    let mut steps = Vec::new();

    for (n, instruction) in plan.sub_instructions.iter().enumerate() {
        let step = format!("step_{}", n + 1);
        log::info!("{step}: {instruction}");
        let views = render_views(&mesh, config.view_count)?;
        for v in &views {
            artifacts.write(&format!("{step}/views"), &format!("{}.png", v.camera.id), &v.png)?;
        }
        let images: Vec<(ViewId, Vec<u8>)> = views.iter().map(|v| (v.camera.id, v.png.clone())).collect();
        let part = oracle.identify_part_and_views(instruction, &images)?;
        let chosen: Vec<&RenderedView> = views.iter().filter(|v| part.chosen_views.contains(&v.camera.id)).collect();
        let mask_inputs: Vec<(ViewId, &[u8])> = chosen.iter().map(|v| (v.camera.id, v.png.as_slice())).collect();
        let masks = oracle.masks_for_part(&part.part_name, &mask_inputs)?;
        for m in &masks {
            artifacts.write(&format!("{step}/masks"), &format!("{}.png", m.view), m.to_png()?)?;
        }

        let labeling = segment_stage(&mesh, &views, &masks, config.w0)?;
        artifacts.write(&step, "labeling.csv", labeling.to_csv())?;
        let vlabels = segment::lift_to_vertices(&labeling, &mesh)?;
        let set = handles_stage(&mesh, &vlabels, config)?;
        artifacts.write(&step, "handles.json", set.to_json())?;

        let mut selections = Vec::new();
        let mut skipped = Vec::new();
        for v in &chosen {
            let visible = visible_handles(&mesh, &set, &v.camera);
            if visible.is_empty() {
                log::warn!("{step}: no handle visible from {}", v.camera.id);
                skipped.push(v.camera.id);
                continue;
            }
            let overlay = handles::render_overlay(&mesh, &v.camera, &set).to_png()?;
            let rel = format!("{step}/view_{}", v.camera.id);
            artifacts.write(&rel, "overlay.png", &overlay)?;
            let reply = oracle.select_handles(instruction, v.camera.id, &overlay, &visible.project(&v.camera))?;
            let sel = handles::resolve_drags(&reply.handles, &reply.new_positions, &visible, &v.camera)?;
            artifacts.write(&rel, "reply.json", serde_json::to_string_pretty(&reply)?)?;
            artifacts.write(&rel, "selection.json", serde_json::to_string_pretty(&sel)?)?;
            selections.push(sel);
        }
        if selections.is_empty() {
            return Err(PipelineError::NoVisibleHandles);
        }

        let outcome = deform_stage(&mesh, &vlabels, &set, &selections, config)?;
        for r in &outcome.results {
            artifacts.write(&format!("{step}/view_{}", r.view), "solve.json", r.trace_json())?;
        }
        let distortion = distortion_metric(&mesh, &outcome.mesh)?;
        steps.push(StepReport {
            instruction: instruction.clone(),
            part: part.part_name.clone(),
            views: part.chosen_views.clone(),
            deformable_faces: labeling.deformable_count(),
            handle_count: set.len(),
            tau_used: set.tau_used,
            halvings: set.halvings,
            per_view: outcome
                .results
                .iter()
                .zip(&selections)
                .map(|(r, s)| ViewReport { view: r.view, selected: s.handles.len(), iterations: r.iterations, objective: r.objective, stop: r.stop })
                .collect(),
            skipped_views: skipped,
            distortion,
        });
        mesh = outcome.mesh;
        artifacts.write(&step, "mesh.obj", norm.invert_mesh(&mesh).to_obj_string())?;
    }

    let out = norm.invert_mesh(&mesh);
    let report = RunReport {
        text: text.to_string(),
        sub_instructions: plan.sub_instructions.clone(),
        steps,
        api_calls: oracle.calls(),
        oracle_backend: oracle.backend_name().to_string(),
        distortion: distortion_metric(input, &out)?,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    log::info!("{} oracle calls", report.api_calls);
    Ok(PipelineOutput { mesh: out, report, transcript: oracle.transcript() })
}

/// Reads a persisted stage directory (`labeling.csv`, `handles.json`).
pub fn load_stage(dir: &Path, mesh: &TriMesh) -> Result<(FaceLabeling, VertexLabeling, HandleSuperSet)> {
    let labeling = FaceLabeling::from_csv(&fs::read_to_string(dir.join("labeling.csv"))?)?;
    let vlabels = segment::lift_to_vertices(&labeling, mesh)?;
    let set = HandleSuperSet::from_json(&fs::read_to_string(dir.join("handles.json"))?)?;
    Ok((labeling, vlabels, set))
}
