//! Full pipeline against a live OpenAI-compatible vision model, recording
//! the transcript for later replay. Needs ORACLE_API_KEY (and optionally
//! ORACLE_BASE_URL, ORACLE_MODEL) plus a mask directory or segmenter URL.
//!
//! cargo run --release --example live_oracle -- mesh.obj "raise the head" masks/ transcript/

use std::path::PathBuf;

use meshdrag::pipeline::{self, MaskChoice, OracleChoice, PipelineConfig};
use meshdrag::TriMesh;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [mesh, text, masks, transcript] = args.as_slice() else {
        eprintln!("usage: live_oracle <mesh> <text> <masks dir | http://segmenter> <transcript dir>");
        std::process::exit(2);
    };
    let masks = if masks.starts_with("http") { MaskChoice::Http { url: masks.clone() } } else { MaskChoice::File { dir: masks.into() } };
    let config = PipelineConfig { oracle: OracleChoice::Live, masks, output_dir: Some(PathBuf::from("live_out")), ..Default::default() };
    let oracle = config.build_oracle()?;
    let result = pipeline::run_pipeline_with(&TriMesh::load(mesh)?, text, &config, &oracle);
    oracle.transcript().save(transcript)?;
    let out = result?;
    println!("{} oracle calls, distortion {:.4e}; transcript in {transcript}", out.report.api_calls, out.report.distortion);
    Ok(())
}
