//! Sources of per-view part masks.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;

use base64::Engine as _;
use serde_json::json;

use super::{OracleError, Result};
use crate::mesh::TriMesh;
use crate::raster::{self, CameraView, RenderStyle, ViewId};
use crate::segment::PixelMask;

pub trait MaskBackend: Send + Sync {
    /// One mask per entry of `views`, each paired with its rendered PNG.
    fn masks(&self, part: &str, views: &[(ViewId, &[u8])]) -> Result<Vec<PixelMask>>;

    fn name(&self) -> &'static str;
}

/// Reads `{dir}/{part}/{view}.png`, falling back to `{dir}/{view}.png`.
#[derive(Debug, Clone)]
pub struct FileMaskBackend {
    pub dir: PathBuf,
}

impl FileMaskBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FileMaskBackend { dir: dir.into() }
    }

    pub fn path_for(&self, part: &str, view: ViewId) -> Option<PathBuf> {
        let file = format!("{view}.png");
        [self.dir.join(part).join(&file), self.dir.join(&file)].into_iter().find(|p| p.is_file())
    }
}

impl MaskBackend for FileMaskBackend {
    fn masks(&self, part: &str, views: &[(ViewId, &[u8])]) -> Result<Vec<PixelMask>> {
        views
            .iter()
            .map(|&(view, _)| {
                let path = self
                    .path_for(part, view)
                    .ok_or_else(|| OracleError::MaskMissing(self.dir.join(part).join(format!("{view}.png"))))?;
                Ok(PixelMask::load_png(view, &path)?)
            })
            .collect()
    }

    fn name(&self) -> &'static str {
        "file"
    }
}

/// Masks rasterized from known face sets, keyed by part name. Stands in for
/// a detector when the part's faces are known, e.g. on constructed shapes.
#[derive(Debug, Clone)]
pub struct FaceSetMaskBackend {
    mesh: TriMesh,
    parts: HashMap<String, Vec<bool>>,
}

impl FaceSetMaskBackend {
    pub fn new(mesh: TriMesh) -> Self {
        FaceSetMaskBackend { mesh, parts: HashMap::new() }
    }

    pub fn with_part(mut self, name: &str, faces: &[usize]) -> Self {
        let mut set = vec![false; self.mesh.num_faces()];
        for &f in faces {
            set[f] = true;
        }
        self.parts.insert(name.to_string(), set);
        self
    }

    pub fn mask(&self, part: &str, view: ViewId) -> Option<PixelMask> {
        let faces = self.parts.get(part)?;
        let buf = raster::rasterize_with(&self.mesh, &CameraView::axis(view), &RenderStyle { buffers_only: true, ..Default::default() });
        Some(PixelMask::from_faces(&buf, faces))
    }
}

impl MaskBackend for FaceSetMaskBackend {
    fn masks(&self, part: &str, views: &[(ViewId, &[u8])]) -> Result<Vec<PixelMask>> {
        views
            .iter()
            .map(|&(view, _)| self.mask(part, view).ok_or_else(|| OracleError::MaskMissing(PathBuf::from(part))))
            .collect()
    }

    fn name(&self) -> &'static str {
        "faces"
    }
}

/// Posts `{"prompt", "view", "image"}` (image as base64 PNG) to an external
/// detector/segmenter and expects a PNG mask body back.
pub struct HttpMaskBackend {
    url: String,
    agent: ureq::Agent,
}

impl HttpMaskBackend {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        HttpMaskBackend { url: url.into(), agent }
    }
}

impl MaskBackend for HttpMaskBackend {
    fn masks(&self, part: &str, views: &[(ViewId, &[u8])]) -> Result<Vec<PixelMask>> {
        views
            .iter()
            .map(|&(view, png)| {
                let body = json!({
                    "prompt": part,
                    "view": view,
                    "image": base64::engine::general_purpose::STANDARD.encode(png),
                });
                let mut resp =
                    self.agent.post(&self.url).send_json(body).map_err(|e| OracleError::BackendUnavailable(e.to_string()))?;
                let bytes = resp.body_mut().read_to_vec().map_err(|e| OracleError::BackendUnavailable(e.to_string()))?;
                Ok(PixelMask::from_png(view, &bytes)?)
            })
            .collect()
    }

    fn name(&self) -> &'static str {
        "http"
    }
}
