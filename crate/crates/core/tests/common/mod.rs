#![allow(dead_code)]

use std::path::{Path, PathBuf};

use meshdrag::oracle::{parse_view_name, prompts, FaceSetMaskBackend, FileMaskBackend, Oracle, OracleRequest, ReplayBackend, RequestKind, ScriptedBackend};
use meshdrag::pipeline::{MaskChoice, OracleChoice, PipelineConfig};
use meshdrag::raster::ViewId;
use meshdrag::{shapes, TriMesh};

pub fn demo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/demo")
}

pub fn demo_mesh() -> TriMesh {
    TriMesh::load(demo_dir().join("horned_cube.obj")).unwrap()
}

pub fn demo_text() -> String {
    std::fs::read_to_string(demo_dir().join("instruction.txt")).unwrap().trim().to_string()
}

pub fn demo_config(out: Option<&Path>) -> PipelineConfig {
    PipelineConfig {
        oracle: OracleChoice::Replay { dir: demo_dir().join("transcript") },
        masks: MaskChoice::File { dir: demo_dir().join("masks") },
        output_dir: out.map(Path::to_path_buf),
        ..Default::default()
    }
}

pub fn demo_oracle() -> Oracle {
    Oracle::new(Box::new(ReplayBackend::new(demo_dir().join("transcript"))), Box::new(FileMaskBackend::new(demo_dir().join("masks"))))
}

/// Two horns on a box, named "horn one" and "horn two".
pub fn two_horns() -> shapes::HornedBox {
    shapes::demo_horned_cube()
}

/// Scripted oracle over [`two_horns`]: every sub-instruction names one horn
/// and is carried out from the +Z and -Z views by moving the top listed
/// handle to `drag(view, pick)`.
pub fn horn_oracle(
    input: &TriMesh,
    subs: Vec<String>,
    drag: impl Fn(ViewId, [f64; 2]) -> [f64; 2] + Send + Sync + 'static,
) -> Oracle {
    let h = two_horns();
    let (normalized, _) = input.normalize_to_unit();
    let masks = FaceSetMaskBackend::new(normalized).with_part("horn one", &h.horn_faces[0]).with_part("horn two", &h.horn_faces[1]);
    let script = move |req: &OracleRequest| match req.kind {
        RequestKind::Decompose => serde_json::json!({ "sub_instructions": subs }).to_string(),
        RequestKind::IdentifyPart => {
            let part = if req.user.contains("horn one") { "horn one" } else { "horn two" };
            serde_json::json!({"reasoning": "front view", "part": part, "images": ["Camera004.png", "Camera005.png"]}).to_string()
        }
        RequestKind::SelectHandles => {
            let mut pts = prompts::listed_points(&req.user).unwrap();
            pts.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])));
            let view = parse_view_name(&req.images[0].name).unwrap();
            let to = drag(view, pts[0]);
            let dir = if to[1] < pts[0][1] { "Up" } else if to[1] > pts[0][1] { "Down" } else { "Up" };
            serde_json::json!({"Reasoning": "move the tip", "Direction": dir, "Handle": [pts[0]], "New Position": [to]}).to_string()
        }
    };
    Oracle::new(Box::new(ScriptedBackend::new(script)), Box::new(masks))
}

pub fn max_vertex_gap(a: &TriMesh, b: &TriMesh) -> f64 {
    a.vertices().iter().zip(b.vertices()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}
