//! Biharmonic weights on a strip with a handle at each end, and the blend
//! they produce when one end is lifted.
//!
//! cargo run --release --example biharmonic_weights

use nalgebra::Vector3;

use meshdrag::deform::{apply_displacements, biharmonic_weights, biharmonic_weights_anchored};
use meshdrag::handles::HandleSuperSet;
use meshdrag::shapes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = shapes::grid(20, 2, 1.0);
    let (left, right) = (0, 20);
    let set = HandleSuperSet::from_vertices(&m, &[left, right]);
    let field = biharmonic_weights(&m, &set)?;
    println!("x      w_left  w_right");
    for i in (0..=20).step_by(4) {
        println!("{:.2}   {:.4}  {:.4}", m.vertices()[i].x, field.weights[(i, 0)], field.weights[(i, 1)]);
    }

    let rest = set.positions();
    let lifted = [rest[0], rest[1] + Vector3::new(0.0, 0.0, 0.3)];
    let out = apply_displacements(&field, m.vertices(), &rest, &lifted)?;
    println!("free blend, z along the bottom row: {:?}", (0..=20).step_by(5).map(|i| format!("{:.3}", out[i].z)).collect::<Vec<_>>());

    // pin the left half; only the right half follows the handle
    let fixed: Vec<bool> = m.vertices().iter().map(|p| p.x <= 0.5).collect();
    let anchored = biharmonic_weights_anchored(&m, &HandleSuperSet::from_vertices(&m, &[right]), &fixed)?;
    let out = apply_displacements(&anchored, m.vertices(), &[rest[1]], &[lifted[1]])?;
    println!("left half pinned:                  {:?}", (0..=20).step_by(5).map(|i| format!("{:.3}", out[i].z)).collect::<Vec<_>>());
    std::fs::write("weights.txt", field.to_triplets())?;
    Ok(())
}
