//! Manual multi-view drag without any oracle: segment the horns, detect
//! handles, drag the horn tips upward in two views, solve each view and vote.
//!
//! cargo run --release --example manual_drag

use meshdrag::handles;
use meshdrag::oracle::FaceSetMaskBackend;
use meshdrag::pipeline::{self, PipelineConfig};
use meshdrag::raster::{CameraView, ViewId};
use meshdrag::segment;
use meshdrag::shapes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = shapes::demo_horned_cube();
    let (mesh, norm) = demo.mesh.normalize_to_unit();
    let source = FaceSetMaskBackend::new(mesh.clone()).with_part("horn", &demo.horn_faces.concat());
    let views = pipeline::render_views(&mesh, 6)?;
    let masks: Vec<_> = ViewId::ALL.iter().map(|&v| source.mask("horn", v).unwrap()).collect();
    let cfg = PipelineConfig::default();

    let labeling = pipeline::segment_stage(&mesh, &views, &masks, cfg.w0)?;
    let vlabels = segment::lift_to_vertices(&labeling, &mesh)?;
    let set = pipeline::handles_stage(&mesh, &vlabels, &cfg)?;
    println!("{} deformable faces, {} handles", labeling.deformable_count(), set.len());

    let mut selections = Vec::new();
    for view in [ViewId::PosZ, ViewId::NegZ] {
        let cam = CameraView::axis(view);
        let picks = set.project(&cam);
        let targets: Vec<[f64; 2]> = picks.iter().map(|p| [p[0], p[1] - 60.0]).collect();
        selections.push(handles::resolve_drags(&picks, &targets, &set, &cam)?);
    }
    let out = pipeline::deform_stage(&mesh, &vlabels, &set, &selections, &cfg)?;
    for r in &out.results {
        println!("{}: {} Newton steps, objective {:.3e}, {:?}", r.view, r.iterations, r.objective, r.stop);
    }
    for (h, p) in set.handles.iter().zip(&out.handle_positions) {
        println!("handle {}: y {:.4} -> {:.4}", h.vertex, h.position[1], p.y);
    }
    println!("distortion {:.4e}", pipeline::distortion_metric(&mesh, &out.mesh)?);
    norm.invert_mesh(&out.mesh).save_obj("manual_drag.obj")?;
    println!("wrote manual_drag.obj");
    Ok(())
}
