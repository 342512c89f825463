//! Runs the bundled "elongate horns" demo from its recorded transcript and
//! checks the output against the recorded digest.
//!
//! cargo run --release --example replay_demo -- [out_dir]

use std::path::PathBuf;

use meshdrag::pipeline::{self, MaskChoice, OracleChoice, PipelineConfig};
use meshdrag::TriMesh;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/demo");
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo_out".into()));
    let config = PipelineConfig {
        oracle: OracleChoice::Replay { dir: demo.join("transcript") },
        masks: MaskChoice::File { dir: demo.join("masks") },
        output_dir: Some(out.clone()),
        ..Default::default()
    };
    let text = std::fs::read_to_string(demo.join("instruction.txt"))?;
    let result = pipeline::run_pipeline(&TriMesh::load(demo.join("horned_cube.obj"))?, text.trim(), &config)?;
    let digest = meshdrag::oracle::sha256_hex(&std::fs::read(out.join("out.obj"))?);
    let expected = std::fs::read_to_string(demo.join("expected_out.sha256"))?;
    println!("{}", result.report.to_json());
    println!("out.obj {digest} ({})", if digest == expected.trim() { "matches recording" } else { "DIFFERS from recording" });
    Ok(())
}
