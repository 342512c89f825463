mod common;

use std::fs;

use common::*;
use meshdrag::handles::HandleSelection;
use meshdrag::pipeline::{self, PipelineConfig};
use meshdrag::raster::{CameraView, ViewId};
use meshdrag::segment::{FaceLabeling, PixelMask};

fn lift(_: ViewId, p: [f64; 2]) -> [f64; 2] {
    [p[0], p[1] - 60.0]
}

#[test]
fn disjoint_horn_edits_commute() {
    let input = two_horns().mesh;
    let cfg = PipelineConfig::default();
    let subs = |a: &str, b: &str| vec![a.to_string(), b.to_string()];

    let ab = horn_oracle(&input, subs("raise horn one", "raise horn two"), lift);
    let out_ab = pipeline::run_pipeline_with(&input, "raise both horns", &cfg, &ab).unwrap();
    let ba = horn_oracle(&input, subs("raise horn two", "raise horn one"), lift);
    let out_ba = pipeline::run_pipeline_with(&input, "raise both horns", &cfg, &ba).unwrap();

    assert_eq!(out_ab.mesh.faces(), input.faces());
    let gap = max_vertex_gap(&out_ab.mesh, &out_ba.mesh);
    assert!(gap < 1e-5, "orders differ by {gap}");
    assert!(max_vertex_gap(&out_ab.mesh, &input) > 1e-3);
    for step in &out_ab.report.steps {
        assert!(step.distortion > 0.0);
    }
}

#[test]
fn rest_targets_are_a_fixed_point() {
    let h = two_horns();
    let input = h.mesh.clone();
    let (normalized, _) = input.normalize_to_unit();
    // exact projections of every horn vertex, so the drag can land on the
    // unrounded rest pixel of whichever handle was listed
    let horn_vertices: Vec<_> = h.horn_faces[0].iter().flat_map(|&f| input.faces()[f]).map(|v| normalized.vertices()[v]).collect();
    let stay = move |view: ViewId, pick: [f64; 2]| {
        let cam = CameraView::axis(view);
        horn_vertices
            .iter()
            .map(|p| cam.project(p))
            .map(|q| [q.x, q.y])
            .min_by(|a, b| (a[0] - pick[0]).hypot(a[1] - pick[1]).total_cmp(&(b[0] - pick[0]).hypot(b[1] - pick[1])))
            .unwrap()
    };
    let oracle = horn_oracle(&input, vec!["keep horn one".into()], stay);
    let out = pipeline::run_pipeline_with(&input, "keep horn one", &PipelineConfig::default(), &oracle).unwrap();
    let gap = max_vertex_gap(&out.mesh, &input);
    assert!(gap < 1e-6, "moved by {gap}");
}

#[test]
fn replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = pipeline::run_pipeline(&demo_mesh(), &demo_text(), &demo_config(Some(&a))).unwrap();
    let rb = pipeline::run_pipeline(&demo_mesh(), &demo_text(), &demo_config(Some(&b))).unwrap();
    assert_eq!(fs::read(a.join("out.obj")).unwrap(), fs::read(b.join("out.obj")).unwrap());
    assert_eq!(ra.report.deterministic_json(), rb.report.deterministic_json());
    assert_eq!(ra.report.oracle_backend, "replay");
    assert_eq!(ra.mesh.faces(), demo_mesh().faces());
    // the replayed transcript is the one it was read from
    let replayed: Vec<_> = ra.transcript.records.iter().map(|r| r.hash.clone()).collect();
    let index: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(demo_dir().join("transcript/index.json")).unwrap()).unwrap();
    assert_eq!(replayed, index.iter().map(|e| e["hash"].as_str().unwrap().to_string()).collect::<Vec<_>>());
}

#[test]
fn persisted_stages_reproduce_downstream() {
    let dir = tempfile::tempdir().unwrap();
    pipeline::run_pipeline(&demo_mesh(), &demo_text(), &demo_config(Some(dir.path()))).unwrap();
    let step = dir.path().join("step_1");
    let (mesh, norm) = demo_mesh().normalize_to_unit();

    let views = pipeline::render_views(&mesh, 6).unwrap();
    let masks: Vec<PixelMask> = fs::read_dir(step.join("masks"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let view: ViewId = p.file_stem().unwrap().to_str().unwrap().parse().unwrap();
            PixelMask::load_png(view, &p).unwrap()
        })
        .collect();
    let labeling = pipeline::segment_stage(&mesh, &views, &masks, 2.0).unwrap();
    let saved = FaceLabeling::from_csv(&fs::read_to_string(step.join("labeling.csv")).unwrap()).unwrap();
    assert_eq!(labeling.labels, saved.labels);

    let (_, vlabels, set) = pipeline::load_stage(&step, &mesh).unwrap();
    let mut selections: Vec<HandleSelection> = Vec::new();
    for v in ViewId::ALL {
        let p = step.join(format!("view_{v}/selection.json"));
        if p.exists() {
            selections.push(serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap());
        }
    }
    assert!(!selections.is_empty());
    let outcome = pipeline::deform_stage(&mesh, &vlabels, &set, &selections, &PipelineConfig::default()).unwrap();
    assert_eq!(norm.invert_mesh(&outcome.mesh).to_obj_string(), fs::read_to_string(step.join("mesh.obj")).unwrap());
}

#[test]
fn failed_run_keeps_partial_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let err = pipeline::run_pipeline(&demo_mesh(), "something never recorded", &demo_config(Some(dir.path()))).unwrap_err();
    assert!(matches!(err, pipeline::PipelineError::Oracle(meshdrag::oracle::OracleError::ReplayMiss { .. })), "{err}");
    assert!(dir.path().join("transcript/index.json").exists());
    assert!(!dir.path().join("out.obj").exists());
}

#[test]
fn call_budget_aborts() {
    let oracle = demo_oracle().with_budget(2);
    let err = pipeline::run_pipeline_with(&demo_mesh(), &demo_text(), &demo_config(None), &oracle).unwrap_err();
    assert!(matches!(err, pipeline::PipelineError::Oracle(meshdrag::oracle::OracleError::BudgetExceeded(2))), "{err}");
}
