//! Regenerates the bundled replay demo under `assets/demo/`: the horned
//! cube, its horn masks, a transcript of a scripted oracle run of
//! "elongate horns", and the SHA-256 of the resulting OBJ.
//!
//! cargo run --release --example record_demo

use std::fs;
use std::path::PathBuf;

use meshdrag::oracle::{prompts, FaceSetMaskBackend, FileMaskBackend, Oracle, OracleRequest, ReplayBackend, RequestKind, ScriptedBackend};
use meshdrag::pipeline::{self, PipelineConfig};
use meshdrag::raster::ViewId;
use meshdrag::{shapes, TriMesh};

const TEXT: &str = "elongate horns";
const LIFT_PX: f64 = 90.0;

fn script(req: &OracleRequest) -> String {
    match req.kind {
        RequestKind::Decompose => r#"{"sub_instructions": ["elongate the horns"]}"#.into(),
        RequestKind::IdentifyPart => r#"{"reasoning": "Both horns stand side by side when seen from the front or back.",
            "part": "horn", "images": ["Camera004.png", "Camera005.png"]}"#
            .into(),
        RequestKind::SelectHandles => {
            let mut pts = prompts::listed_points(&req.user).unwrap_or_default();
            pts.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])));
            // topmost point of each horn
            let mut picks = vec![pts[0]];
            if let Some(p) = pts.iter().find(|p| (p[0] - pts[0][0]).abs() > 100.0) {
                picks.push(*p);
            }
            let targets: Vec<[f64; 2]> = picks.iter().map(|p| [p[0], p[1] - LIFT_PX]).collect();
            serde_json::json!({
                "Reasoning": "The horns get longer by pulling their tips straight up.",
                "Direction": "Up",
                "Handle": picks,
                "New Position": targets,
            })
            .to_string()
        }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/demo");
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(dir.join("masks/horn"))?;

    let demo = shapes::demo_horned_cube();
    demo.mesh.save_obj(dir.join("horned_cube.obj"))?;
    fs::write(dir.join("instruction.txt"), format!("{TEXT}\n"))?;
    let input = TriMesh::load(dir.join("horned_cube.obj"))?;

    let (normalized, _) = input.normalize_to_unit();
    let faces = FaceSetMaskBackend::new(normalized).with_part("horn", &demo.horn_faces.concat());
    for v in ViewId::ALL {
        faces.mask("horn", v).expect("known part").save_png(dir.join(format!("masks/horn/{v}.png")))?;
    }

    let work = tempfile::tempdir()?;
    let config = PipelineConfig { output_dir: Some(work.path().join("record")), ..Default::default() };
    let oracle = Oracle::new(Box::new(ScriptedBackend::new(script)), Box::new(FileMaskBackend::new(dir.join("masks"))));
    let recorded = pipeline::run_pipeline_with(&input, TEXT, &config, &oracle)?;
    recorded.transcript.save(dir.join("transcript"))?;

    let config = PipelineConfig { output_dir: Some(work.path().join("replay")), ..Default::default() };
    let oracle = Oracle::new(Box::new(ReplayBackend::new(dir.join("transcript"))), Box::new(FileMaskBackend::new(dir.join("masks"))));
    let replayed = pipeline::run_pipeline_with(&input, TEXT, &config, &oracle)?;
    let a = fs::read(work.path().join("record/out.obj"))?;
    let b = fs::read(work.path().join("replay/out.obj"))?;
    assert_eq!(a, b, "replay diverged from the recorded run");

    let digest = meshdrag::oracle::sha256_hex(&b);
    fs::write(dir.join("expected_out.sha256"), format!("{digest}\n"))?;
    println!("{}", replayed.report.to_json());
    println!("out.obj sha256 {digest}");
    Ok(())
}
