//! Renders the six axis views of a mesh and its face-id buffer.
//!
//! cargo run --release --example render_views -- [mesh.obj] [out_dir]

use std::path::PathBuf;

use meshdrag::raster::{self, make_axis_views};
use meshdrag::{shapes, TriMesh};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mesh = match args.next() {
        Some(p) => TriMesh::load(p)?,
        None => shapes::demo_horned_cube().mesh,
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "views".into()));
    std::fs::create_dir_all(&out)?;
    let (mesh, _) = mesh.normalize_to_unit();
    for cam in make_axis_views() {
        let buf = raster::rasterize(&mesh, &cam);
        buf.export_png(out.join(format!("{}.png", cam.id)))?;
        buf.export_face_id_pgm(out.join(format!("{}_faces.pgm", cam.id)))?;
        let visible = raster::face_footprints(&buf, mesh.num_faces());
        let seen = (0..mesh.num_faces()).filter(|&f| visible.is_visible(f)).count();
        println!("{}: {} px covered, {seen}/{} faces visible", cam.id, buf.covered_pixels(), mesh.num_faces());
    }
    Ok(())
}
