//! Multi-view graph-cut segmentation of the horns on the demo shape, from
//! masks rasterized out of the known horn faces.
//!
//! cargo run --release --example segment_parts

use meshdrag::oracle::FaceSetMaskBackend;
use meshdrag::raster::{make_axis_views, ViewId};
use meshdrag::segment::{self, DEFAULT_W0};
use meshdrag::shapes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = shapes::demo_horned_cube();
    let (mesh, _) = demo.mesh.normalize_to_unit();
    let truth = demo.horn_faces.concat();
    let source = FaceSetMaskBackend::new(mesh.clone()).with_part("horn", &truth);
    let views = make_axis_views();

    for chosen in [&[ViewId::PosZ][..], &[ViewId::PosZ, ViewId::NegZ], &ViewId::ALL] {
        let masks: Vec<_> = chosen.iter().map(|&v| source.mask("horn", v).unwrap()).collect();
        for w0 in [0.5, DEFAULT_W0, 8.0] {
            let l = segment::segment_from_masks(&mesh, &views, &masks, w0)?;
            let hits = truth.iter().filter(|&&f| l.labels[f]).count();
            println!(
                "views {:?} w0 {w0}: {} deformable faces, {hits}/{} horn faces, energy {}",
                chosen,
                l.deformable_count(),
                truth.len(),
                l.energy
            );
        }
    }

    let masks: Vec<_> = ViewId::ALL.iter().map(|&v| source.mask("horn", v).unwrap()).collect();
    let l = segment::segment_from_masks(&mesh, &views, &masks, DEFAULT_W0)?;
    segment::render_labeling(&mesh, &views[4], &l).export_png("labeling_+Z.png")?;
    std::fs::write("labeling.csv", l.to_csv())?;
    println!("wrote labeling_+Z.png and labeling.csv");
    Ok(())
}
