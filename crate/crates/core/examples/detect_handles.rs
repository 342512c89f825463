//! Curvature-based handle detection with adaptive threshold halving.
//!
//! cargo run --release --example detect_handles

use meshdrag::handles::{self, DEFAULT_SPACING, DEFAULT_TAU};
use meshdrag::raster::{CameraView, ViewId};
use meshdrag::segment::VertexLabeling;
use meshdrag::{shapes, TriMesh};

fn report(name: &str, mesh: &TriMesh, labels: Option<&VertexLabeling>) {
    match handles::detect_handles(mesh, labels, DEFAULT_TAU, DEFAULT_SPACING) {
        Ok(set) => println!("{name}: {} handles, tau {:.4} after {} halvings", set.len(), set.tau_used, set.halvings),
        Err(e) => println!("{name}: {e}"),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    report("cube", &shapes::cube(1.0), None);
    report("grid 10x10", &shapes::grid(10, 10, 1.0), None);
    report("icosphere 3", &shapes::icosphere(3), None);
    report("torus", &shapes::torus(32, 16, 1.0, 0.3), None);

    let demo = shapes::demo_horned_cube();
    let (mesh, _) = demo.mesh.normalize_to_unit();
    report("horned cube", &mesh, None);
    let mut labels = vec![false; mesh.num_vertices()];
    for &f in demo.horn_faces.iter().flatten() {
        for v in mesh.faces()[f] {
            labels[v] = true;
        }
    }
    let labels = VertexLabeling { labels };
    report("horns only", &mesh, Some(&labels));

    let set = handles::detect_handles(&mesh, None, DEFAULT_TAU, DEFAULT_SPACING)?;
    let cam = CameraView::axis(ViewId::PosZ);
    handles::render_overlay(&mesh, &cam, &set).export_png("handles_+Z.png")?;
    for (h, p) in set.handles.iter().zip(set.project(&cam)).take(5) {
        println!("vertex {} defect {:+.4} at pixel ({:.1}, {:.1})", h.vertex, h.defect, p[0], p[1]);
    }
    println!("wrote handles_+Z.png");
    Ok(())
}
