//! Same drag applied through the biharmonic blend and through ARAP.
//!
//! cargo run --release --example arap_compare

use meshdrag::handles;
use meshdrag::oracle::FaceSetMaskBackend;
use meshdrag::pipeline::{self, Deformer, PipelineConfig};
use meshdrag::raster::{CameraView, ViewId};
use meshdrag::segment;
use meshdrag::shapes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = shapes::demo_horned_cube();
    let (mesh, _) = demo.mesh.normalize_to_unit();
    let source = FaceSetMaskBackend::new(mesh.clone()).with_part("horn", &demo.horn_faces[0]);
    let views = pipeline::render_views(&mesh, 6)?;
    let masks: Vec<_> = ViewId::ALL.iter().map(|&v| source.mask("horn", v).unwrap()).collect();
    let labeling = pipeline::segment_stage(&mesh, &views, &masks, 2.0)?;
    let vlabels = segment::lift_to_vertices(&labeling, &mesh)?;
    let set = pipeline::handles_stage(&mesh, &vlabels, &PipelineConfig::default())?;

    let cam = CameraView::axis(ViewId::PosZ);
    let picks = set.project(&cam);
    let targets: Vec<[f64; 2]> = picks.iter().map(|p| [p[0] + 150.0, p[1]]).collect();
    let selection = handles::resolve_drags(&picks, &targets, &set, &cam)?;

    for deformer in [Deformer::Biharmonic, Deformer::Arap] {
        let cfg = PipelineConfig { deformer, ..Default::default() };
        let out = pipeline::deform_stage(&mesh, &vlabels, &set, std::slice::from_ref(&selection), &cfg)?;
        let moved = mesh.vertices().iter().zip(out.mesh.vertices()).filter(|(a, b)| (*a - *b).norm() > 1e-9).count();
        println!("{deformer:?}: {moved} vertices moved, distortion {:.4e}", pipeline::distortion_metric(&mesh, &out.mesh)?);
    }
    Ok(())
}
