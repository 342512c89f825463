//! Membrane energy as a distortion measure: zero under rigid motion,
//! growing with stretch and bending of the surface metric.
//!
//! cargo run --release --example membrane_distortion

use nalgebra::{Point3, Rotation3, Vector3};

use meshdrag::deform::MembraneMaterial;
use meshdrag::pipeline::distortion_metric;
use meshdrag::shapes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = shapes::icosphere(2);
    let mat = MembraneMaterial::unit(&m);
    let rot = Rotation3::from_euler_angles(0.4, 1.1, -0.3);
    let rigid = m.with_vertices(m.vertices().iter().map(|p| rot * p + Vector3::new(2.0, 0.0, -1.0)).collect())?;
    println!("rigid motion:  {:.3e}", distortion_metric(&m, &rigid)?);
    for s in [1.01, 1.1, 1.5, 2.0] {
        let scaled: Vec<_> = m.vertices().iter().map(|p| Point3::from(p.coords * s)).collect();
        println!("uniform x{s:<4}  {:.6}", mat.energy(&scaled));
    }
    for s in [1.1, 1.5] {
        let stretched: Vec<_> = m.vertices().iter().map(|p| Point3::new(p.x * s, p.y, p.z)).collect();
        println!("stretch x {s:<4} {:.6}", mat.energy(&stretched));
    }
    let (_, grad) = mat.energy_and_gradient(&m.vertices().iter().map(|p| Point3::from(p.coords * 1.1)).collect::<Vec<_>>());
    let radial = grad.iter().zip(m.vertices()).filter(|(g, p)| g.dot(&p.coords) > 0.0).count();
    println!("under inflation {radial}/{} gradients point outward", grad.len());
    Ok(())
}
