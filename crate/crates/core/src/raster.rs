//! Offscreen software rendering from the six axis-aligned views.
//!
//! Cameras are orthographic and frame the unit box centered at the origin
//! with a 10% margin on each side of the image height. Pixel coordinates
//! have their origin at the top-left corner, x to the right and y down;
//! pixel `(i, j)` covers `[i, i+1) x [j, j+1)` and is sampled at its center.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::TriMesh;

pub const IMAGE_WIDTH: u32 = 1920;
pub const IMAGE_HEIGHT: u32 = 1080;
/// Fraction of the unit box added as margin on each side.
pub const FRAME_MARGIN: f64 = 0.1;
pub const NO_FACE: u32 = u32::MAX;

pub const BACKGROUND: [u8; 3] = [255, 255, 255];
pub const HANDLE_COLOR: [u8; 3] = [255, 220, 0];
pub const HANDLE_RADIUS: f64 = 6.0;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("unknown view id '{0}'")]
    UnknownView(String),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewId {
    #[serde(rename = "+X")]
    PosX,
    #[serde(rename = "-X")]
    NegX,
    #[serde(rename = "+Y")]
    PosY,
    #[serde(rename = "-Y")]
    NegY,
    #[serde(rename = "+Z")]
    PosZ,
    #[serde(rename = "-Z")]
    NegZ,
}

impl ViewId {
    pub const ALL: [ViewId; 6] = [ViewId::PosX, ViewId::NegX, ViewId::PosY, ViewId::NegY, ViewId::PosZ, ViewId::NegZ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViewId::PosX => "+X",
            ViewId::NegX => "-X",
            ViewId::PosY => "+Y",
            ViewId::NegY => "-Y",
            ViewId::PosZ => "+Z",
            ViewId::NegZ => "-Z",
        }
    }

    pub fn index(self) -> usize {
        ViewId::ALL.iter().position(|&v| v == self).unwrap()
    }

    /// (forward, up): the camera sits on the `+axis` side looking toward the origin.
    fn basis(self) -> (Vector3<f64>, Vector3<f64>) {
        let x = Vector3::x();
        let y = Vector3::y();
        let z = Vector3::z();
        match self {
            ViewId::PosX => (-x, y),
            ViewId::NegX => (x, y),
            ViewId::PosY => (-y, -z),
            ViewId::NegY => (y, z),
            ViewId::PosZ => (-z, y),
            ViewId::NegZ => (z, y),
        }
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViewId {
    type Err = RasterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ViewId::ALL
            .iter()
            .copied()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| RasterError::UnknownView(s.to_string()))
    }
}

/// Orthographic camera. `projection` rows map a homogeneous model point to
/// pixel x, pixel y and depth (larger is farther).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub id: ViewId,
    pub projection: [[f64; 4]; 3],
    pub width: u32,
    pub height: u32,
}

impl CameraView {
    pub fn axis(id: ViewId) -> Self {
        let (forward, up) = id.basis();
        let right = forward.cross(&up);
        let scale = IMAGE_HEIGHT as f64 / (1.0 + 2.0 * FRAME_MARGIN);
        let (cx, cy) = (IMAGE_WIDTH as f64 / 2.0, IMAGE_HEIGHT as f64 / 2.0);
        let projection = [
            [scale * right.x, scale * right.y, scale * right.z, cx],
            [-scale * up.x, -scale * up.y, -scale * up.z, cy],
            [forward.x, forward.y, forward.z, 1.0],
        ];
        CameraView { id, projection, width: IMAGE_WIDTH, height: IMAGE_HEIGHT }
    }

    /// Pixels per model unit.
    pub fn scale(&self) -> f64 {
        let r = &self.projection[0];
        (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
    }

    pub fn forward(&self) -> Vector3<f64> {
        let r = &self.projection[2];
        Vector3::new(r[0], r[1], r[2])
    }

    /// The 2x3 linear part of the pixel projection.
    pub fn linear_2x3(&self) -> nalgebra::Matrix2x3<f64> {
        let p = &self.projection;
        nalgebra::Matrix2x3::new(p[0][0], p[0][1], p[0][2], p[1][0], p[1][1], p[1][2])
    }

    pub fn offset(&self) -> nalgebra::Vector2<f64> {
        nalgebra::Vector2::new(self.projection[0][3], self.projection[1][3])
    }

    pub fn project(&self, p: &Point3<f64>) -> Point2<f64> {
        let r = |k: usize| {
            let row = &self.projection[k];
            row[0] * p.x + row[1] * p.y + row[2] * p.z + row[3]
        };
        Point2::new(r(0), r(1))
    }

    pub fn depth(&self, p: &Point3<f64>) -> f64 {
        let row = &self.projection[2];
        row[0] * p.x + row[1] * p.y + row[2] * p.z + row[3]
    }

    pub fn contains(&self, px: &Point2<f64>) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.width as f64 && px.y < self.height as f64
    }
}

/// The six axis-aligned cameras, in `ViewId::ALL` order.
pub fn make_axis_views() -> Vec<CameraView> {
    ViewId::ALL.iter().map(|&id| CameraView::axis(id)).collect()
}

#[derive(Debug, Clone, Default)]
pub struct RenderStyle<'a> {
    /// Skip shading; only the face-id and depth buffers are filled.
    pub buffers_only: bool,
    /// Faces tinted red (per face flag).
    pub highlight: Option<&'a [bool]>,
    /// Handle dots drawn on top where the handle is not occluded.
    pub handles: Option<&'a [Point3<f64>]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterBuffers {
    pub view: ViewId,
    pub width: u32,
    pub height: u32,
    pub face_id: Vec<u32>,
    pub depth: Vec<f64>,
    pub image: Vec<[u8; 3]>,
}

impl RasterBuffers {
    pub fn blank(view: ViewId, width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        RasterBuffers {
            view,
            width,
            height,
            face_id: vec![NO_FACE; n],
            depth: vec![f64::INFINITY; n],
            image: vec![BACKGROUND; n],
        }
    }

    pub fn face_at(&self, x: u32, y: u32) -> Option<usize> {
        let f = self.face_id[(y * self.width + x) as usize];
        (f != NO_FACE).then_some(f as usize)
    }

    pub fn covered_pixels(&self) -> usize {
        self.face_id.iter().filter(|&&f| f != NO_FACE).count()
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut data = Vec::with_capacity(self.image.len() * 3);
        for px in &self.image {
            data.extend_from_slice(px);
        }
        encode_png(self.width, self.height, png::ColorType::Rgb, png::BitDepth::Eight, &data)
    }

    pub fn export_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        fs::write(path, self.to_png()?)?;
        Ok(())
    }

    /// 16-bit binary PGM of `face id + 1` (0 = empty, saturating at 65535).
    pub fn export_face_id_pgm(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let mut out = io::BufWriter::new(fs::File::create(path)?);
        write!(out, "P5\n{} {}\n65535\n", self.width, self.height)?;
        for &f in &self.face_id {
            let v: u16 = if f == NO_FACE { 0 } else { (f as u64 + 1).min(65535) as u16 };
            out.write_all(&v.to_be_bytes())?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn encode_png(
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<Vec<u8>, RasterError> {
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header()?;
        writer.write_image_data(data)?;
        writer.finish()?;
    }
    Ok(bytes)
}

/// Edge function, evaluated with endpoints in a canonical order so that the
/// two triangles sharing an edge see exactly negated values.
fn edge(a: &Point2<f64>, b: &Point2<f64>, p: (f64, f64)) -> f64 {
    let raw = |a: &Point2<f64>, b: &Point2<f64>| (b.x - a.x) * (p.1 - a.y) - (b.y - a.y) * (p.0 - a.x);
    if (a.x, a.y) <= (b.x, b.y) {
        raw(a, b)
    } else {
        -raw(b, a)
    }
}

/// Top-left fill rule for edge a->b of a positively oriented triangle,
/// with `w(p) = A*x + B*y + C`: top-left when `A > 0 || (A == 0 && B > 0)`.
fn is_top_left(a: &Point2<f64>, b: &Point2<f64>) -> bool {
    let ca = -(b.y - a.y);
    let cb = b.x - a.x;
    ca > 0.0 || (ca == 0.0 && cb > 0.0)
}

pub fn rasterize(mesh: &TriMesh, view: &CameraView) -> RasterBuffers {
    rasterize_with(mesh, view, &RenderStyle::default())
}

/// Z-buffered fill of all front-facing triangles with flat Lambertian
/// shading under a headlight.
pub fn rasterize_with(mesh: &TriMesh, view: &CameraView, style: &RenderStyle<'_>) -> RasterBuffers {
    let (w, h) = (view.width, view.height);
    let mut buf = RasterBuffers::blank(view.id, w, h);
    let forward = view.forward();
    let verts = mesh.vertices();
    let screen: Vec<Point2<f64>> = verts.iter().map(|p| view.project(p)).collect();
    let depth: Vec<f64> = verts.iter().map(|p| view.depth(p)).collect();

    for (fi, f) in mesh.faces().iter().enumerate() {
        let normal = mesh.face_normal(fi);
        if normal.dot(&forward) >= 0.0 {
            continue;
        }
        let (mut a, mut b, c) = (f[0], f[1], f[2]);
        let mut area = edge(&screen[a], &screen[b], (screen[c].x, screen[c].y));
        if area == 0.0 {
            continue;
        }
        if area < 0.0 {
            std::mem::swap(&mut a, &mut b);
            area = -area;
        }
        let (pa, pb, pc) = (screen[a], screen[b], screen[c]);
        let x0 = pa.x.min(pb.x).min(pc.x).floor().max(0.0) as i64;
        let x1 = (pa.x.max(pb.x).max(pc.x).ceil() as i64).min(w as i64 - 1);
        let y0 = pa.y.min(pb.y).min(pc.y).floor().max(0.0) as i64;
        let y1 = (pa.y.max(pb.y).max(pc.y).ceil() as i64).min(h as i64 - 1);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let tl = [is_top_left(&pb, &pc), is_top_left(&pc, &pa), is_top_left(&pa, &pb)];
        let shade = {
            let cos = (normal.normalize().dot(&forward)).abs();
            (40.0 + 180.0 * cos).round() as u8
        };
        let highlighted = style.highlight.is_some_and(|hl| hl.get(fi).copied().unwrap_or(false));
        let color = if highlighted { [255, shade / 3, shade / 3] } else { [shade, shade, shade] };
        for y in y0..=y1 {
            let py = y as f64 + 0.5;
            for x in x0..=x1 {
                let p = (x as f64 + 0.5, py);
                let w0 = edge(&pb, &pc, p);
                let w1 = edge(&pc, &pa, p);
                let w2 = edge(&pa, &pb, p);
                let inside = (w0 > 0.0 || (w0 == 0.0 && tl[0]))
                    && (w1 > 0.0 || (w1 == 0.0 && tl[1]))
                    && (w2 > 0.0 || (w2 == 0.0 && tl[2]));
                if !inside {
                    continue;
                }
                let z = (w0 * depth[a] + w1 * depth[b] + w2 * depth[c]) / area;
                let idx = (y as u32 * w + x as u32) as usize;
                if z < buf.depth[idx] {
                    buf.depth[idx] = z;
                    buf.face_id[idx] = fi as u32;
                    if !style.buffers_only {
                        buf.image[idx] = color;
                    }
                }
            }
        }
    }

    if let (Some(handles), false) = (style.handles, style.buffers_only) {
        for p in handles {
            if handle_visible(&buf, view, p) {
                draw_dot(&mut buf, view.project(p), HANDLE_RADIUS, HANDLE_COLOR);
            }
        }
    }
    buf
}

/// A point is visible when its depth is within a small tolerance of the
/// depth buffer at its pixel.
pub fn handle_visible(buf: &RasterBuffers, view: &CameraView, p: &Point3<f64>) -> bool {
    let px = view.project(p);
    if !view.contains(&px) {
        return false;
    }
    let d = view.depth(p);
    let tol = 2e-3;
    // check a small neighborhood so vertices on silhouettes are not lost
    let (cx, cy) = (px.x.floor() as i64, px.y.floor() as i64);
    for dy in -1..=1 {
        for dx in -1..=1 {
            let (x, y) = (cx + dx, cy + dy);
            if x < 0 || y < 0 || x >= buf.width as i64 || y >= buf.height as i64 {
                continue;
            }
            let bd = buf.depth[(y as u32 * buf.width + x as u32) as usize];
            if d <= bd + tol {
                return true;
            }
        }
    }
    false
}

fn draw_dot(buf: &mut RasterBuffers, center: Point2<f64>, radius: f64, color: [u8; 3]) {
    let x0 = (center.x - radius).floor().max(0.0) as i64;
    let x1 = ((center.x + radius).ceil() as i64).min(buf.width as i64 - 1);
    let y0 = (center.y - radius).floor().max(0.0) as i64;
    let y1 = ((center.y + radius).ceil() as i64).min(buf.height as i64 - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 + 0.5 - center.x;
            let dy = y as f64 + 0.5 - center.y;
            if dx * dx + dy * dy <= radius * radius {
                buf.image[(y as u32 * buf.width + x as u32) as usize] = color;
            }
        }
    }
}

/// Visible pixel count and pixel indices per face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFootprints {
    pub view: ViewId,
    pub counts: Vec<u32>,
    pub pixels: Vec<Vec<u32>>,
}

impl FaceFootprints {
    pub fn is_visible(&self, face: usize) -> bool {
        self.counts[face] > 0
    }
}

pub fn face_footprints(buffers: &RasterBuffers, num_faces: usize) -> FaceFootprints {
    let mut counts = vec![0u32; num_faces];
    let mut pixels = vec![Vec::new(); num_faces];
    for (i, &f) in buffers.face_id.iter().enumerate() {
        if f != NO_FACE {
            counts[f as usize] += 1;
            pixels[f as usize].push(i as u32);
        }
    }
    FaceFootprints { view: buffers.view, counts, pixels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn tri(points: [[f64; 3]; 3]) -> TriMesh {
        TriMesh::new(points.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(), vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn view_parsing_and_centering() {
        assert_eq!("+x".parse::<ViewId>().unwrap(), ViewId::PosX);
        assert!("up".parse::<ViewId>().is_err());
        let views = make_axis_views();
        assert_eq!(views.len(), 6);
        let c = views[0].project(&Point3::new(0.5, 0.0, 0.0));
        assert_eq!((c.x, c.y), (960.0, 540.0));
        assert_eq!(make_axis_views(), views);
    }

    #[test]
    fn opposite_views_mirror_x() {
        let px = CameraView::axis(ViewId::PosX);
        let nx = CameraView::axis(ViewId::NegX);
        for p in [Point3::new(0.1, 0.2, 0.3), Point3::new(-0.4, 0.0, 0.45), Point3::new(0.0, -0.3, -0.2)] {
            let (a, b) = (px.project(&p), nx.project(&p));
            assert!((a.x + b.x - IMAGE_WIDTH as f64).abs() < 1e-9);
            assert!((a.y - b.y).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_box_fits_in_frame() {
        let cube = shapes::cube(1.0);
        for v in make_axis_views() {
            for p in cube.vertices() {
                let s = v.project(p);
                assert!(v.contains(&s));
                assert!(v.depth(p) > 0.0);
            }
        }
    }

    #[test]
    fn single_triangle_fills_footprint() {
        // facing +Z camera (normal +z)
        let m = tri([[-0.3, -0.3, 0.0], [0.3, -0.3, 0.0], [0.0, 0.3, 0.0]]);
        let view = CameraView::axis(ViewId::PosZ);
        let buf = rasterize(&m, &view);
        let fp = face_footprints(&buf, 1);
        assert!(fp.counts[0] > 1000);
        assert_eq!(fp.counts[0] as usize, buf.covered_pixels());
        // the back view culls it
        let back = rasterize(&m, &CameraView::axis(ViewId::NegZ));
        assert_eq!(back.covered_pixels(), 0);
        // the centroid pixel is covered
        let c = view.project(&Point3::new(0.0, -0.1, 0.0));
        assert_eq!(buf.face_at(c.x as u32, c.y as u32), Some(0));
    }

    #[test]
    fn nearer_triangle_wins() {
        let v = vec![
            Point3::new(-0.3, -0.3, 0.0),
            Point3::new(0.3, -0.3, 0.0),
            Point3::new(0.0, 0.3, 0.0),
            Point3::new(-0.3, -0.3, 0.2),
            Point3::new(0.3, -0.3, 0.2),
            Point3::new(0.0, 0.3, 0.2),
        ];
        let m = TriMesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let buf = rasterize(&m, &CameraView::axis(ViewId::PosZ));
        let fp = face_footprints(&buf, 2);
        assert_eq!(fp.counts[0], 0);
        assert!(fp.counts[1] > 0);
    }

    #[test]
    fn shared_edges_cover_each_pixel_once() {
        // a fan of triangles sharing edges tiles its hull with no gaps or overlap
        let m = shapes::grid(7, 5, 0.8);
        let shifted: Vec<_> = m.vertices().iter().map(|p| Point3::new(p.x - 0.4, p.y - 0.4, 0.0)).collect();
        let m = m.with_vertices(shifted).unwrap();
        let view = CameraView::axis(ViewId::PosZ);
        let buf = rasterize(&m, &view);
        let fp = face_footprints(&buf, m.num_faces());
        let total: u32 = fp.counts.iter().sum();
        assert_eq!(total as usize, buf.covered_pixels());
        // 0.8 units * 900 px/unit = 720 px square
        assert_eq!(buf.covered_pixels(), 720 * 720);
    }

    #[test]
    fn png_is_deterministic_and_full_size() {
        let m = shapes::icosphere(1);
        let view = CameraView::axis(ViewId::PosY);
        let a = rasterize(&m, &view).to_png().unwrap();
        let b = rasterize(&m, &view).to_png().unwrap();
        assert_eq!(a, b);
        let dec = png::Decoder::new(std::io::Cursor::new(&a)).read_info().unwrap();
        assert_eq!((dec.info().width, dec.info().height), (1920, 1080));
        let blank = RasterBuffers::blank(ViewId::PosX, IMAGE_WIDTH, IMAGE_HEIGHT);
        assert!(blank.image.iter().all(|&p| p == BACKGROUND));
    }

    #[test]
    fn handle_overlay_draws_yellow() {
        let m = shapes::cube(0.8);
        let view = CameraView::axis(ViewId::PosZ);
        let corner = Point3::new(0.4, 0.4, 0.4);
        let hidden = Point3::new(0.4, 0.4, -0.4);
        let buf = rasterize_with(&m, &view, &RenderStyle { handles: Some(&[corner, hidden]), ..Default::default() });
        let c = view.project(&corner);
        assert_eq!(buf.image[(c.y as u32 * buf.width + c.x as u32 - 2) as usize], HANDLE_COLOR);
        assert!(handle_visible(&buf, &view, &corner));
        // the back corner projects to the same pixel but is occluded
        assert!(!handle_visible(&buf, &view, &Point3::new(0.0, 0.0, -0.4)));
    }
}
