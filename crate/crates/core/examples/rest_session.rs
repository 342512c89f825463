//! Drives the REST service through one manual editing session: upload a
//! mesh, set a labeling, detect handles, drag, and fetch the result.
//!
//! cargo run --release --example rest_session

use std::net::SocketAddr;

use serde_json::{json, Value};

use meshdrag::pipeline::PipelineConfig;
use meshdrag::service;
use meshdrag::shapes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let addr: SocketAddr = listener.local_addr()?;
    rt.spawn(async move { axum::serve(listener, service::router(PipelineConfig::default())).await });
    let base = format!("http://{addr}");

    let demo = shapes::demo_horned_cube();
    let created: Value = ureq::post(format!("{base}/sessions")).send(demo.mesh.to_obj_string())?.body_mut().read_json()?;
    let id = created["id"].as_str().unwrap().to_string();
    let s = format!("{base}/sessions/{id}");
    println!("session {id}: {} vertices", created["vertices"]);

    let png = ureq::get(format!("{s}/views/+Z.png")).call()?.body_mut().read_to_vec()?;
    println!("+Z view: {} bytes", png.len());

    let mut labels = vec![0u8; demo.mesh.num_faces()];
    for &f in demo.horn_faces.iter().flatten() {
        labels[f] = 1;
    }
    ureq::put(format!("{s}/labeling")).send_json(json!({ "labels": labels }))?;
    let handles: Value = ureq::post(format!("{s}/handles/detect")).send_json(json!({}))?.body_mut().read_json()?;
    let picks = handles["projected"]["+Z"].as_array().unwrap().clone();
    println!("{} handles", picks.len());

    let targets: Vec<Value> = picks.iter().map(|p| json!([p[0], p[1].as_f64().unwrap() - 60.0])).collect();
    let drag = json!({"mode": "manual", "targets": [{"view": "+Z", "picks": picks, "targets": targets}]});
    let out: Value = ureq::post(format!("{s}/deform")).send_json(drag)?.body_mut().read_json()?;
    println!("deformed: distortion {}, views {}", out["distortion"], out["views"]);

    let obj = ureq::get(format!("{s}/mesh.obj")).call()?.body_mut().read_to_string()?;
    std::fs::write("rest_session.obj", obj)?;
    let report: Value = ureq::get(format!("{s}/report")).call()?.body_mut().read_json()?;
    println!("stage {}", report["stage"]);
    Ok(())
}
