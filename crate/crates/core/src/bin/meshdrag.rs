use std::error::Error;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use meshdrag::handles::{self, HandleSuperSet};
use meshdrag::oracle::FileMaskBackend;
use meshdrag::pipeline::{self, Deformer, MaskChoice, OracleChoice, PipelineConfig};
use meshdrag::raster::{CameraView, ViewId};
use meshdrag::segment::{self, FaceLabeling, PixelMask};
use meshdrag::TriMesh;

/// Text-guided handle deformation of triangle meshes.
///
/// Stage commands (segment, handles, deform, render) work in the unit-box
/// frame that `run` uses, so their artifacts are interchangeable with the
/// `step_n/` directories a run writes.
#[derive(Parser)]
#[command(name = "meshdrag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: instruction text in, deformed mesh and report out.
    Run {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Graph-cut labeling from per-view masks (`{dir}/{view}.png`).
    Segment {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long, default_value_t = segment::DEFAULT_W0)]
        w0: f64,
        #[arg(long, default_value = "labeling.csv")]
        out: PathBuf,
    },
    /// Handle super-set restricted to the deformable part of a labeling.
    Handles {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        labeling: PathBuf,
        #[arg(long, default_value_t = handles::DEFAULT_TAU)]
        tau0: f64,
        #[arg(long, default_value_t = handles::DEFAULT_SPACING)]
        spacing: f64,
        #[arg(long, default_value = "handles.json")]
        out: PathBuf,
    },
    /// Solve and vote manual drags given as `[{view, picks, targets}]`.
    Deform {
        #[arg(long)]
        mesh: PathBuf,
        /// Directory holding `labeling.csv` and `handles.json`.
        #[arg(long)]
        stage: PathBuf,
        #[arg(long)]
        drags: PathBuf,
        #[arg(long, default_value = "out.obj")]
        out: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Write the six axis renders, optionally with labeling or handle overlays.
    Render {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labeling: Option<PathBuf>,
        #[arg(long)]
        handles: Option<PathBuf>,
    },
    /// Membrane distortion of `def` relative to `ref`.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long = "def")]
        deformed: PathBuf,
    },
    /// Local REST service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        params: ParamArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Replay,
    Live,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum, default_value = "replay")]
    oracle: OracleKind,
    /// Replay: transcript to read. Live: where to record the transcript.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Directory of `{part}/{view}.png` masks.
    #[arg(long, default_value = "masks", conflicts_with = "mask_url")]
    masks: PathBuf,
    /// External segmenter endpoint instead of mask files.
    #[arg(long)]
    mask_url: Option<String>,
    #[arg(long, default_value_t = meshdrag::oracle::DEFAULT_RETRIES)]
    retries: u32,
    #[arg(long, default_value_t = meshdrag::oracle::DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 120)]
    timeout: u64,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long, default_value_t = meshdrag::deform::solve::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = meshdrag::deform::solve::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = segment::DEFAULT_W0)]
    w0: f64,
    #[arg(long, default_value_t = handles::DEFAULT_TAU)]
    tau0: f64,
    #[arg(long, default_value_t = handles::DEFAULT_SPACING)]
    spacing: f64,
    #[arg(long, default_value_t = 6)]
    views: usize,
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
    #[arg(long, default_value_t = false)]
    arap: bool,
}

fn config(params: &ParamArgs, oracle: Option<&OracleArgs>) -> Result<PipelineConfig, Box<dyn Error>> {
    let mut c = PipelineConfig {
        lambda: params.lambda,
        epsilon: params.epsilon,
        w0: params.w0,
        tau0: params.tau0,
        spacing: params.spacing,
        view_count: params.views,
        max_newton_iterations: params.max_iterations,
        deformer: if params.arap { Deformer::Arap } else { Deformer::Biharmonic },
        ..Default::default()
    };
    if let Some(o) = oracle {
        c.retries = o.retries;
        c.call_budget = o.budget;
        c.timeout_secs = o.timeout;
        c.oracle = match o.oracle {
            OracleKind::Live => OracleChoice::Live,
            OracleKind::Replay => OracleChoice::Replay { dir: o.transcript.clone().ok_or("--oracle replay needs --transcript")? },
        };
        c.masks = match &o.mask_url {
            Some(url) => MaskChoice::Http { url: url.clone() },
            None => MaskChoice::File { dir: o.masks.clone() },
        };
    }
    c.validate()?;
    Ok(c)
}

fn load_normalized(path: &Path) -> Result<(TriMesh, meshdrag::Normalization), Box<dyn Error>> {
    Ok(TriMesh::load(path)?.normalize_to_unit())
}

#[derive(Deserialize)]
struct Drag {
    view: ViewId,
    picks: Vec<[f64; 2]>,
    targets: Vec<[f64; 2]>,
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    match cli.command {
        Command::Run { mesh, text, out, oracle, params } => {
            let mut cfg = config(&params, Some(&oracle))?;
            cfg.output_dir = Some(out.clone());
            let input = TriMesh::load(&mesh)?;
            let engine = cfg.build_oracle()?;
            let result = pipeline::run_pipeline_with(&input, &text, &cfg, &engine);
            if let (OracleKind::Live, Some(dir)) = (oracle.oracle, &oracle.transcript) {
                engine.transcript().save(dir)?;
            }
            let res = result?;
            println!("wrote {} ({} oracle calls, distortion {:.6e})", out.join("out.obj").display(), res.report.api_calls, res.report.distortion);
        }
        Command::Segment { mesh, masks, w0, out } => {
            let (m, _) = load_normalized(&mesh)?;
            let backend = FileMaskBackend::new(&masks);
            let mut loaded = Vec::new();
            for v in ViewId::ALL {
                if let Some(p) = backend.path_for("", v) {
                    loaded.push(PixelMask::load_png(v, p)?);
                }
            }
            if loaded.is_empty() {
                return Err(format!("no view masks in {}", masks.display()).into());
            }
            let labeling = segment::segment_from_masks(&m, &meshdrag::raster::make_axis_views(), &loaded, w0)?;
            fs::write(&out, labeling.to_csv())?;
            println!("{} of {} faces deformable, energy {}", labeling.deformable_count(), m.num_faces(), labeling.energy);
        }
        Command::Handles { mesh, labeling, tau0, spacing, out } => {
            let (m, _) = load_normalized(&mesh)?;
            let labels = segment::lift_to_vertices(&FaceLabeling::from_csv(&fs::read_to_string(labeling)?)?, &m)?;
            let cfg = PipelineConfig { tau0, spacing, ..Default::default() };
            let set = pipeline::handles_stage(&m, &labels, &cfg)?;
            fs::write(&out, set.to_json())?;
            println!("{} handles (tau {}, {} halvings)", set.len(), set.tau_used, set.halvings);
        }
        Command::Deform { mesh, stage, drags, out, params } => {
            let (m, norm) = load_normalized(&mesh)?;
            let (_, labels, set) = pipeline::load_stage(&stage, &m)?;
            let drags: Vec<Drag> = serde_json::from_str(&fs::read_to_string(drags)?)?;
            let selections = drags
                .iter()
                .map(|d| handles::resolve_drags(&d.picks, &d.targets, &set, &CameraView::axis(d.view)))
                .collect::<Result<Vec<_>, _>>()?;
            let outcome = pipeline::deform_stage(&m, &labels, &set, &selections, &config(&params, None)?)?;
            for r in &outcome.results {
                println!("{}: {} iterations, objective {:.6e}, {:?}", r.view, r.iterations, r.objective, r.stop);
            }
            norm.invert_mesh(&outcome.mesh).save_obj(&out)?;
            println!("distortion {:.6e}", pipeline::distortion_metric(&m, &outcome.mesh)?);
        }
        Command::Render { mesh, out, labeling, handles: handle_file } => {
            let (m, _) = load_normalized(&mesh)?;
            let labeling = labeling.map(|p| fs::read_to_string(p).map_err(Box::<dyn Error>::from).and_then(|s| Ok(FaceLabeling::from_csv(&s)?))).transpose()?;
            let set = handle_file.map(|p| fs::read_to_string(p).map_err(Box::<dyn Error>::from).and_then(|s| Ok(HandleSuperSet::from_json(&s)?))).transpose()?;
            fs::create_dir_all(&out)?;
            for cam in meshdrag::raster::make_axis_views() {
                let buf = match (&labeling, &set) {
                    (_, Some(set)) => handles::render_overlay(&m, &cam, set),
                    (Some(l), None) => segment::render_labeling(&m, &cam, l),
                    (None, None) => meshdrag::raster::rasterize(&m, &cam),
                };
                buf.export_png(out.join(format!("{}.png", cam.id)))?;
            }
        }
        Command::Metrics { reference, deformed } => {
            let d = pipeline::distortion_metric(&TriMesh::load(reference)?, &TriMesh::load(deformed)?)?;
            println!("{d:.17e}");
        }
        Command::Serve { addr, oracle, params } => {
            let cfg = config(&params, Some(&oracle))?;
            tokio::runtime::Runtime::new()?.block_on(meshdrag::service::serve(cfg, addr))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
