//! Language/vision oracle: instruction splitting, part naming and view
//! choice, part masks, and handle drags, behind pluggable backends.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub mod backend;
pub mod masks;
pub mod prompts;

pub use backend::{
    canonical_string, sha256_hex, LiveBackend, LiveConfig, NamedImage, OracleBackend, OracleRequest, ReplayBackend, RequestKind,
    ScriptedBackend, Transcript, TranscriptRecord,
};
pub use masks::{FaceSetMaskBackend, FileMaskBackend, HttpMaskBackend, MaskBackend};

use crate::raster::{ViewId, IMAGE_HEIGHT, IMAGE_WIDTH};
use crate::segment::{PixelMask, SegmentError};

/// Returned handle points must lie this close (pixels) to a listed handle.
pub const SNAP_TOLERANCE: f64 = 25.0;
pub const DEFAULT_RETRIES: u32 = 3;
pub const DEFAULT_BUDGET: usize = 20;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed {kind:?} reply after {attempts} attempts: {detail}")]
    MalformedReply { kind: RequestKind, attempts: u32, detail: String },
    #[error("reply selected no views")]
    EmptyViewSet,
    #[error("mask file missing: {0}")]
    MaskMissing(PathBuf),
    #[error("reply direction disagrees with its handle motion")]
    DirectionMismatch,
    #[error("oracle call budget of {0} exhausted")]
    BudgetExceeded(usize),
    #[error("no recorded reply for {kind:?} request {hash}")]
    ReplayMiss { hash: String, kind: RequestKind },
    #[error(transparent)]
    Mask(#[from] SegmentError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = OracleError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionPlan {
    pub original_text: String,
    pub sub_instructions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartQueryResult {
    pub part_name: String,
    pub chosen_views: Vec<ViewId>,
    pub reasoning: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    UpLeft,
    UpRight,
    DownLeft,
    DownRight,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphabetic()).collect::<String>().to_ascii_lowercase();
        Some(match key.as_str() {
            "up" => Direction::Up,
            "down" => Direction::Down,
            "left" => Direction::Left,
            "right" => Direction::Right,
            "upleft" | "leftup" => Direction::UpLeft,
            "upright" | "rightup" => Direction::UpRight,
            "downleft" | "leftdown" => Direction::DownLeft,
            "downright" | "rightdown" => Direction::DownRight,
            _ => return None,
        })
    }

    /// Image-space check with y growing downward.
    pub fn agrees(self, from: [f64; 2], to: [f64; 2]) -> bool {
        let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
        match self {
            Direction::Up => dy < 0.0,
            Direction::Down => dy > 0.0,
            Direction::Left => dx < 0.0,
            Direction::Right => dx > 0.0,
            Direction::UpLeft => dy < 0.0 && dx < 0.0,
            Direction::UpRight => dy < 0.0 && dx > 0.0,
            Direction::DownLeft => dy > 0.0 && dx < 0.0,
            Direction::DownRight => dy > 0.0 && dx > 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandleDragReply {
    pub reasoning: String,
    pub direction: Direction,
    pub handles: Vec<[f64; 2]>,
    pub new_positions: Vec<[f64; 2]>,
}

/// Handles moved by less than this many pixels count as staying put; the
/// listed coordinates are rounded to whole pixels.
pub const STATIONARY_PX: f64 = 1.0;

/// Every handle that actually moves must move in the stated direction.
pub fn verify_direction(reply: &HandleDragReply) -> bool {
    reply
        .handles
        .iter()
        .zip(&reply.new_positions)
        .filter(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1]) >= STATIONARY_PX)
        .all(|(a, b)| reply.direction.agrees(*a, *b))
}

/// `Camera.png`, `Camera001.png`, ... in +X, -X, +Y, -Y, +Z, -Z order.
pub fn view_image_name(view: ViewId) -> String {
    match view.index() {
        0 => "Camera.png".into(),
        i => format!("Camera{i:03}.png"),
    }
}

/// Accepts image names with or without `.png`, or view ids like `+X`.
pub fn parse_view_name(s: &str) -> Option<ViewId> {
    let s = s.trim();
    if let Ok(v) = s.parse::<ViewId>() {
        return Some(v);
    }
    let stem = s.strip_suffix(".png").unwrap_or(s);
    let rest = stem.strip_prefix("Camera")?;
    let i = if rest.is_empty() { 0 } else { rest.parse::<usize>().ok()? };
    ViewId::ALL.get(i).copied()
}

/// Drops a surrounding Markdown code fence, nothing else.
fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(body) = t.strip_prefix("```") {
        let body = body.split_once('\n').map_or("", |(_, rest)| rest);
        return body.trim_end().strip_suffix("```").unwrap_or(body).trim();
    }
    t
}

fn parse_points(v: &Value, key: &str) -> std::result::Result<Vec<[f64; 2]>, String> {
    let arr = v.get(key).and_then(Value::as_array).ok_or_else(|| format!("'{key}' must be a list of [x, y] pairs"))?;
    arr.iter()
        .map(|p| match p.as_array().map(Vec::as_slice) {
            Some([x, y]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok([x, y]),
                _ => Err(format!("'{key}' holds a non-numeric point")),
            },
            _ => Err(format!("'{key}' holds something other than an [x, y] pair")),
        })
        .collect()
}

fn parse_plan(text: &str) -> std::result::Result<Vec<String>, String> {
    let v: Value = serde_json::from_str(strip_fence(text)).map_err(|e| format!("not JSON: {e}"))?;
    let list = v.get("sub_instructions").and_then(Value::as_array).ok_or("missing 'sub_instructions' list")?;
    let items: Vec<String> = list.iter().filter_map(Value::as_str).map(|s| s.trim().to_string()).collect();
    if items.len() != list.len() || items.is_empty() || items.iter().any(String::is_empty) {
        return Err("'sub_instructions' must be a nonempty list of nonempty strings".into());
    }
    Ok(items)
}

const NO_VIEWS: &str = "'images' selects no view";

fn parse_part(text: &str) -> std::result::Result<PartQueryResult, String> {
    let v: Value = serde_json::from_str(strip_fence(text)).map_err(|e| format!("not JSON: {e}"))?;
    let part = v.get("part").and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty()).ok_or("missing 'part'")?;
    let images = v.get("images").and_then(Value::as_array).ok_or("missing 'images' list")?;
    let mut views = Vec::new();
    for img in images {
        let name = img.as_str().ok_or("'images' must hold strings")?;
        let view = parse_view_name(name).ok_or_else(|| format!("unknown image '{name}'"))?;
        if !views.contains(&view) {
            views.push(view);
        }
    }
    if views.is_empty() {
        return Err(NO_VIEWS.into());
    }
    let reasoning = v.get("reasoning").and_then(Value::as_str).unwrap_or_default().to_string();
    Ok(PartQueryResult { part_name: part.to_string(), chosen_views: views, reasoning })
}

fn parse_drag(text: &str, projected: &[[f64; 2]]) -> std::result::Result<HandleDragReply, String> {
    let v: Value = serde_json::from_str(strip_fence(text)).map_err(|e| format!("not JSON: {e}"))?;
    let reasoning = v.get("Reasoning").and_then(Value::as_str).filter(|s| !s.trim().is_empty()).ok_or("missing 'Reasoning'")?;
    let dir = v.get("Direction").and_then(Value::as_str).ok_or("missing 'Direction'")?;
    let direction = Direction::parse(dir).ok_or_else(|| format!("unknown direction '{dir}'"))?;
    let handles = parse_points(&v, "Handle")?;
    let new_positions = parse_points(&v, "New Position")?;
    if handles.is_empty() || handles.len() != new_positions.len() {
        return Err("'Handle' and 'New Position' must be nonempty and of equal length".into());
    }
    for p in handles.iter().chain(&new_positions) {
        if !(p[0] >= 0.0 && p[0] <= IMAGE_WIDTH as f64 && p[1] >= 0.0 && p[1] <= IMAGE_HEIGHT as f64) {
            return Err(format!("point ({}, {}) lies outside the image", p[0], p[1]));
        }
    }
    for h in &handles {
        let near = projected.iter().any(|q| ((q[0] - h[0]).powi(2) + (q[1] - h[1]).powi(2)).sqrt() <= SNAP_TOLERANCE);
        if !near {
            return Err(format!("handle ({}, {}) is not one of the listed points", h[0], h[1]));
        }
    }
    Ok(HandleDragReply { reasoning: reasoning.to_string(), direction, handles, new_positions })
}

/// Wraps a reply backend and a mask backend with retries, a call budget and
/// a transcript of every exchange.
pub struct Oracle {
    backend: Box<dyn OracleBackend>,
    masks: Box<dyn MaskBackend>,
    retries: u32,
    budget: usize,
    calls: AtomicUsize,
    transcript: Mutex<Transcript>,
}

impl Oracle {
    pub fn new(backend: Box<dyn OracleBackend>, masks: Box<dyn MaskBackend>) -> Self {
        Oracle {
            backend,
            masks,
            retries: DEFAULT_RETRIES,
            budget: DEFAULT_BUDGET,
            calls: AtomicUsize::new(0),
            transcript: Mutex::new(Transcript::default()),
        }
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn transcript(&self) -> Transcript {
        self.transcript.lock().unwrap().clone()
    }

    fn ask(&self, kind: RequestKind, system: &str, user: String, images: &[NamedImage], attempt: u32) -> Result<String> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.budget {
            self.calls.fetch_sub(1, Ordering::SeqCst);
            return Err(OracleError::BudgetExceeded(self.budget));
        }
        let request = OracleRequest { kind, system: system.to_string(), user, images: images.to_vec(), attempt };
        let response = self.backend.complete(&request)?;
        self.transcript.lock().unwrap().push(TranscriptRecord { kind, hash: request.hash(), request: request.canonical(), response: response.clone() });
        Ok(response)
    }

    /// Asks until `parse` accepts, at most `1 + retries` times starting at
    /// `first_attempt`. Returns the value and the next attempt number.
    fn ask_parsed<T>(
        &self,
        kind: RequestKind,
        system: &str,
        user: &str,
        images: &[NamedImage],
        first_attempt: u32,
        mut note: Option<String>,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<(T, u32)> {
        let mut detail = String::new();
        for k in 0..=self.retries {
            let attempt = first_attempt + k;
            let text = match &note {
                Some(n) => format!("{user}{}", prompts::retry_note(n)),
                None => user.to_string(),
            };
            let reply = self.ask(kind, system, text, images, attempt)?;
            match parse(&reply) {
                Ok(v) => return Ok((v, attempt + 1)),
                Err(e) => {
                    log::warn!("{kind:?} reply rejected: {e}");
                    detail = e.clone();
                    note = Some(e);
                }
            }
        }
        if kind == RequestKind::IdentifyPart && detail == NO_VIEWS {
            return Err(OracleError::EmptyViewSet);
        }
        Err(OracleError::MalformedReply { kind, attempts: self.retries + 1, detail })
    }

    pub fn decompose_instruction(&self, text: &str) -> Result<InstructionPlan> {
        let text = text.trim();
        if text.is_empty() {
            return Err(OracleError::MalformedReply { kind: RequestKind::Decompose, attempts: 0, detail: "empty instruction".into() });
        }
        let (subs, _) =
            self.ask_parsed(RequestKind::Decompose, prompts::DECOMPOSE_SYSTEM, &prompts::decompose_user(text), &[], 0, None, parse_plan)?;
        Ok(InstructionPlan { original_text: text.to_string(), sub_instructions: subs })
    }

    /// `images` holds the six renders in +X, -X, +Y, -Y, +Z, -Z order.
    pub fn identify_part_and_views(&self, sub_instruction: &str, images: &[(ViewId, Vec<u8>)]) -> Result<PartQueryResult> {
        let named: Vec<NamedImage> = images.iter().map(|(v, png)| NamedImage::new(view_image_name(*v), png.clone())).collect();
        let (r, _) = self.ask_parsed(
            RequestKind::IdentifyPart,
            prompts::IDENTIFY_SYSTEM,
            &prompts::identify_user(sub_instruction),
            &named,
            0,
            None,
            parse_part,
        )?;
        Ok(r)
    }

    pub fn masks_for_part(&self, part: &str, views: &[(ViewId, &[u8])]) -> Result<Vec<PixelMask>> {
        self.masks.masks(part, views)
    }

    /// Handle drag for one view. A reply whose direction disagrees with its
    /// motion is re-requested once.
    pub fn select_handles(&self, sub_instruction: &str, view: ViewId, overlay_png: &[u8], projected: &[[f64; 2]]) -> Result<HandleDragReply> {
        let images = [NamedImage::new(view_image_name(view), overlay_png.to_vec())];
        let system = prompts::select_handles_system();
        let user = prompts::select_handles_user(sub_instruction, projected);
        let parse = |t: &str| parse_drag(t, projected);
        let (reply, next) = self.ask_parsed(RequestKind::SelectHandles, &system, &user, &images, 0, None, parse)?;
        if verify_direction(&reply) {
            return Ok(reply);
        }
        let note = format!("direction {:?} does not match the motion from Handle to New Position", reply.direction);
        let (again, _) = self.ask_parsed(RequestKind::SelectHandles, &system, &user, &images, next, Some(note), parse)?;
        if verify_direction(&again) {
            Ok(again)
        } else {
            Err(OracleError::DirectionMismatch)
        }
    }
}
