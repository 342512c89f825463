//! Multi-view mask lifting: per-view 2D masks become a binary per-face
//! labeling through an exact s-t minimum cut, then a per-vertex labeling.
//!
//! The energy minimized over labels `l(f)` in `{0, 1}` is
//!
//! ```text
//! sum_f sum_m mask(f, m) * (1 - l(f))
//!   + sum_f sum_m no_mask(f, m) * l(f)
//!   + sum_{f ~ g} w(f, g) * |l(f) - l(g)|
//! ```
//!
//! where `f ~ g` ranges over faces sharing an edge and `w(f, g)` scales with
//! the interior dihedral angle, so cuts prefer sharp creases.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maxflow::FlowGraph;
use crate::mesh::{MeshError, TriMesh};
use crate::raster::{self, CameraView, FaceFootprints, RasterBuffers, RenderStyle, ViewId, IMAGE_HEIGHT, IMAGE_WIDTH};

/// Default smoothness scale `w0`.
pub const DEFAULT_W0: f64 = 2.0;
/// A visible face counts as masked when at least this fraction of its
/// visible pixels lies inside the mask.
pub const MASK_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("mask for view {0} has no matching footprint")]
    ViewMismatch(ViewId),
    #[error("mask is {width}x{height}, expected {IMAGE_WIDTH}x{IMAGE_HEIGHT}")]
    MaskDimensions { width: u32, height: u32 },
    #[error("negative smoothness weight {weight} on faces ({f}, {g})")]
    NegativeWeight { f: usize, g: usize, weight: f64 },
    #[error("labeling has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("png decoding failed: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("labeling parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Raster(#[from] raster::RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SegmentError> = std::result::Result<T, E>;

/// Binary deformable-part mask for one view (`true` = inside).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub view: ViewId,
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl PixelMask {
    pub fn filled(view: ViewId, value: bool) -> Self {
        PixelMask { view, width: IMAGE_WIDTH, height: IMAGE_HEIGHT, bits: vec![value; (IMAGE_WIDTH * IMAGE_HEIGHT) as usize] }
    }

    /// Mask covering exactly the pixels where one of `faces` is visible.
    pub fn from_faces(buffers: &RasterBuffers, faces: &[bool]) -> Self {
        let bits = buffers
            .face_id
            .iter()
            .map(|&f| f != raster::NO_FACE && faces.get(f as usize).copied().unwrap_or(false))
            .collect();
        PixelMask { view: buffers.view, width: buffers.width, height: buffers.height, bits }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Decodes any PNG; a pixel is inside when its gray level is at least 128.
    /// Dimensions other than 1920x1080 are rejected.
    pub fn from_png(view: ViewId, bytes: &[u8]) -> Result<Self> {
        let mut dec = png::Decoder::new(Cursor::new(bytes));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info()?;
        let (width, height) = (reader.info().width, reader.info().height);
        if (width, height) != (IMAGE_WIDTH, IMAGE_HEIGHT) {
            return Err(SegmentError::MaskDimensions { width, height });
        }
        let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf)?;
        let channels = info.color_type.samples();
        let stride = info.line_size;
        let mut bits = Vec::with_capacity((width * height) as usize);
        for y in 0..height as usize {
            let row = &buf[y * stride..];
            for x in 0..width as usize {
                let px = &row[x * channels..x * channels + channels];
                let gray = match channels {
                    1 | 2 => px[0] as u32,
                    _ => (px[0] as u32 + px[1] as u32 + px[2] as u32) / 3,
                };
                bits.push(gray >= 128);
            }
        }
        Ok(PixelMask { view, width, height, bits })
    }

    pub fn load_png(view: ViewId, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_png(view, &std::fs::read(path)?)
    }

    /// 1-bit grayscale PNG, white = inside.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let row_bytes = (self.width as usize).div_ceil(8);
        let mut data = vec![0u8; row_bytes * self.height as usize];
        for y in 0..self.height as usize {
            for x in 0..self.width as usize {
                if self.bits[y * self.width as usize + x] {
                    data[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        Ok(raster::encode_png(self.width, self.height, png::ColorType::Grayscale, png::BitDepth::One, &data)?)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_png()?)?;
        Ok(())
    }
}

/// Per view and face, whether a visible face lies inside (`mask`) or
/// outside (`no_mask`) the view's mask. Invisible faces have neither.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskIndicators {
    pub num_faces: usize,
    pub views: Vec<ViewId>,
    pub mask: Vec<Vec<bool>>,
    pub no_mask: Vec<Vec<bool>>,
}

impl MaskIndicators {
    pub fn empty(num_faces: usize) -> Self {
        MaskIndicators { num_faces, views: Vec::new(), mask: Vec::new(), no_mask: Vec::new() }
    }

    pub fn push_view(&mut self, view: ViewId, mask: Vec<bool>, no_mask: Vec<bool>) {
        debug_assert!(mask.iter().zip(&no_mask).all(|(a, b)| !(a & b)));
        self.views.push(view);
        self.mask.push(mask);
        self.no_mask.push(no_mask);
    }

    /// Cost of labeling `f` as fixed (0): the number of views masking it.
    pub fn cost_fixed(&self, f: usize) -> f64 {
        self.mask.iter().filter(|m| m[f]).count() as f64
    }

    /// Cost of labeling `f` as deformable (1).
    pub fn cost_deformable(&self, f: usize) -> f64 {
        self.no_mask.iter().filter(|m| m[f]).count() as f64
    }
}

pub fn mask_indicators(num_faces: usize, masks: &[PixelMask], footprints: &[FaceFootprints]) -> Result<MaskIndicators> {
    let mut out = MaskIndicators::empty(num_faces);
    for mask in masks {
        if (mask.width, mask.height) != (IMAGE_WIDTH, IMAGE_HEIGHT) {
            return Err(SegmentError::MaskDimensions { width: mask.width, height: mask.height });
        }
        let fp = footprints.iter().find(|fp| fp.view == mask.view).ok_or(SegmentError::ViewMismatch(mask.view))?;
        let mut inside = vec![false; num_faces];
        let mut outside = vec![false; num_faces];
        for f in 0..num_faces {
            let visible = fp.counts[f];
            if visible == 0 {
                continue;
            }
            let masked = fp.pixels[f].iter().filter(|&&p| mask.bits[p as usize]).count();
            if masked as f64 >= MASK_FRACTION * visible as f64 {
                inside[f] = true;
            } else {
                outside[f] = true;
            }
        }
        out.push_view(mask.view, inside, outside);
    }
    Ok(out)
}

/// Nonnegative pairwise weights over edge-adjacent faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessWeights {
    pub pairs: Vec<(usize, usize, f64)>,
}

impl SmoothnessWeights {
    pub fn new(pairs: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(f, g, weight)) = pairs.iter().find(|p| !(p.2 >= 0.0)) {
            return Err(SegmentError::NegativeWeight { f, g, weight });
        }
        Ok(SmoothnessWeights { pairs })
    }

    pub fn get(&self, f: usize, g: usize) -> Option<f64> {
        let key = (f.min(g), f.max(g));
        self.pairs.iter().find(|p| (p.0.min(p.1), p.0.max(p.1)) == key).map(|p| p.2)
    }
}

/// `w(f, g) = w0 * theta(f, g) / pi`.
pub fn smoothness_weights(mesh: &TriMesh, w0: f64) -> Result<SmoothnessWeights> {
    let dihedral = mesh.dihedral_angles()?;
    SmoothnessWeights::new(dihedral.pairs().iter().map(|&(f, g, theta)| (f, g, w0 * theta / PI)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceLabeling {
    pub labels: Vec<bool>,
    pub energy: f64,
}

impl FaceLabeling {
    pub fn deformable_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("face,label\n");
        for (f, &l) in self.labels.iter().enumerate() {
            writeln!(s, "{},{}", f, l as u8).unwrap();
        }
        s
    }

    /// Parses `face,label` rows; the energy is not stored and reads back as NaN
    /// until recomputed with [`labeling_energy`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut labels = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("face")) {
                continue;
            }
            let (f, l) = line.split_once(',').ok_or_else(|| SegmentError::Parse(format!("line {}: '{line}'", i + 1)))?;
            let f: usize = f.trim().parse().map_err(|_| SegmentError::Parse(format!("line {}: bad face", i + 1)))?;
            if f != labels.len() {
                return Err(SegmentError::Parse(format!("line {}: faces must be listed in order", i + 1)));
            }
            labels.push(match l.trim() {
                "1" => true,
                "0" => false,
                other => return Err(SegmentError::Parse(format!("line {}: bad label '{other}'", i + 1))),
            });
        }
        Ok(FaceLabeling { labels, energy: f64::NAN })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexLabeling {
    pub labels: Vec<bool>,
}

impl VertexLabeling {
    pub fn all(n: usize, value: bool) -> Self {
        VertexLabeling { labels: vec![value; n] }
    }

    pub fn is_deformable(&self, v: usize) -> bool {
        self.labels[v]
    }

    pub fn deformable_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

pub fn labeling_energy(indicators: &MaskIndicators, weights: &SmoothnessWeights, labels: &[bool]) -> f64 {
    let unary: f64 = (0..indicators.num_faces)
        .map(|f| if labels[f] { indicators.cost_deformable(f) } else { indicators.cost_fixed(f) })
        .sum();
    let pairwise: f64 = weights.pairs.iter().filter(|&&(f, g, _)| labels[f] != labels[g]).map(|p| p.2).sum();
    unary + pairwise
}

/// Global minimizer by s-t minimum cut. Among equal-energy labelings the one
/// with the fewest deformable faces (the minimal source set) is returned.
pub fn graph_cut_segment(indicators: &MaskIndicators, weights: &SmoothnessWeights) -> FaceLabeling {
    let n = indicators.num_faces;
    let (s, t) = (n, n + 1);
    let mut g = FlowGraph::new(n + 2);
    for f in 0..n {
        let (c0, c1) = (indicators.cost_fixed(f), indicators.cost_deformable(f));
        if c0 > 0.0 {
            g.add_edge(s, f, c0, 0.0);
        }
        if c1 > 0.0 {
            g.add_edge(f, t, c1, 0.0);
        }
    }
    for &(f, h, w) in &weights.pairs {
        if w > 0.0 {
            g.add_edge(f, h, w, w);
        }
    }
    g.max_flow(s, t);
    let side = g.source_side(s);
    let labels: Vec<bool> = side[..n].to_vec();
    let energy = labeling_energy(indicators, weights, &labels);
    FaceLabeling { labels, energy }
}

/// A vertex is deformable when any incident face is.
pub fn lift_to_vertices(labeling: &FaceLabeling, mesh: &TriMesh) -> Result<VertexLabeling> {
    if labeling.labels.len() != mesh.num_faces() {
        return Err(SegmentError::LengthMismatch { expected: mesh.num_faces(), got: labeling.labels.len() });
    }
    let mut labels = vec![false; mesh.num_vertices()];
    for (f, face) in mesh.faces().iter().enumerate() {
        if labeling.labels[f] {
            for &v in face {
                labels[v] = true;
            }
        }
    }
    Ok(VertexLabeling { labels })
}

/// Full lift from masks to face labels over the given views.
pub fn segment_from_masks(mesh: &TriMesh, views: &[CameraView], masks: &[PixelMask], w0: f64) -> Result<FaceLabeling> {
    let footprints: Vec<FaceFootprints> = views
        .iter()
        .filter(|v| masks.iter().any(|m| m.view == v.id))
        .map(|v| {
            let buf = raster::rasterize_with(mesh, v, &RenderStyle { buffers_only: true, ..Default::default() });
            raster::face_footprints(&buf, mesh.num_faces())
        })
        .collect();
    let indicators = mask_indicators(mesh.num_faces(), masks, &footprints)?;
    let weights = smoothness_weights(mesh, w0)?;
    Ok(graph_cut_segment(&indicators, &weights))
}

/// Shaded render with deformable faces tinted red.
pub fn render_labeling(mesh: &TriMesh, view: &CameraView, labeling: &FaceLabeling) -> RasterBuffers {
    raster::rasterize_with(mesh, view, &RenderStyle { highlight: Some(&labeling.labels), ..Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn footprint(view: ViewId, counts: Vec<u32>, pixels: Vec<Vec<u32>>) -> FaceFootprints {
        FaceFootprints { view, counts, pixels }
    }

    #[test]
    fn indicator_thresholds() {
        let mut mask = PixelMask::filled(ViewId::PosX, false);
        // face 0: pixels 0..10, three masked; face 1: pixels 10..14 all masked; face 2 invisible
        for p in [0, 1, 2, 10, 11, 12, 13] {
            mask.bits[p] = true;
        }
        let fp = footprint(ViewId::PosX, vec![10, 4, 0], vec![(0..10).collect(), (10..14).collect(), vec![]]);
        let ind = mask_indicators(3, &[mask.clone()], &[fp]).unwrap();
        assert_eq!((ind.mask[0][0], ind.no_mask[0][0]), (false, true));
        assert_eq!((ind.mask[0][1], ind.no_mask[0][1]), (true, false));
        assert_eq!((ind.mask[0][2], ind.no_mask[0][2]), (false, false));

        let wrong = footprint(ViewId::NegX, vec![0; 3], vec![vec![]; 3]);
        assert!(matches!(mask_indicators(3, &[mask], &[wrong]), Err(SegmentError::ViewMismatch(ViewId::PosX))));
    }

    #[test]
    fn smoothness_weight_examples() {
        let flat = shapes::grid(1, 1, 1.0);
        let w = smoothness_weights(&flat, 2.0).unwrap();
        assert!((w.pairs[0].2 - 2.0).abs() < 1e-12);

        let cube = shapes::cube(1.0);
        let w = smoothness_weights(&cube, 2.0).unwrap();
        for &(f, g, wt) in &w.pairs {
            let coplanar = cube.face_normal(f).normalize().dot(&cube.face_normal(g).normalize()) > 0.99;
            assert!((wt - if coplanar { 2.0 } else { 1.0 }).abs() < 1e-12);
        }
        assert!(smoothness_weights(&cube, 0.0).unwrap().pairs.iter().all(|p| p.2 == 0.0));
        assert!(SmoothnessWeights::new(vec![(0, 1, -1.0)]).is_err());
    }

    #[test]
    fn graph_cut_trivial_cases() {
        let cube = shapes::cube(1.0);
        let n = cube.num_faces();
        let w = smoothness_weights(&cube, 2.0).unwrap();

        let mut all = MaskIndicators::empty(n);
        all.push_view(ViewId::PosX, vec![true; n], vec![false; n]);
        let l = graph_cut_segment(&all, &w);
        assert!(l.labels.iter().all(|&x| x));
        assert_eq!(l.energy, 0.0);

        let none = MaskIndicators::empty(n);
        let l = graph_cut_segment(&none, &w);
        assert!(l.labels.iter().all(|&x| !x));
        assert_eq!(l.energy, 0.0);
    }

    #[test]
    fn tetrahedron_matches_enumeration() {
        let tet = shapes::tetrahedron();
        let w = SmoothnessWeights::new(tet.face_adjacency().into_iter().map(|(f, g)| (f, g, 10.0)).collect()).unwrap();
        let mut ind = MaskIndicators::empty(4);
        ind.push_view(ViewId::PosX, vec![true, false, false, false], vec![false, true, false, false]);
        let l = graph_cut_segment(&ind, &w);
        let best = (0..16u32)
            .map(|bits| {
                let labels: Vec<bool> = (0..4).map(|k| bits >> k & 1 == 1).collect();
                labeling_energy(&ind, &w, &labels)
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(l.energy, best);
        // strong smoothing: everything fixed, one unit of unary cost
        assert_eq!(l.energy, 1.0);
        assert!(l.labels.iter().all(|&x| !x));
    }

    #[test]
    fn ties_prefer_fixed() {
        // one face masked in one view and unmasked in another: tie at energy 1
        let mut ind = MaskIndicators::empty(1);
        ind.push_view(ViewId::PosX, vec![true], vec![false]);
        ind.push_view(ViewId::NegX, vec![false], vec![true]);
        let l = graph_cut_segment(&ind, &SmoothnessWeights::new(vec![]).unwrap());
        assert_eq!(l.labels, vec![false]);
        assert_eq!(l.energy, 1.0);
    }

    #[test]
    fn lift_examples() {
        let fan = shapes::grid(2, 1, 1.0);
        let mut labels = vec![false; fan.num_faces()];
        labels[1] = true;
        let v = lift_to_vertices(&FaceLabeling { labels, energy: 0.0 }, &fan).unwrap();
        let expect: Vec<usize> = fan.faces()[1].to_vec();
        let got: Vec<usize> = (0..fan.num_vertices()).filter(|&i| v.labels[i]).collect();
        let mut e = expect.clone();
        e.sort();
        assert_eq!(got, e);

        let all = lift_to_vertices(&FaceLabeling { labels: vec![true; 4], energy: 0.0 }, &fan).unwrap();
        assert_eq!(all.deformable_count(), fan.num_vertices());
        let none = lift_to_vertices(&FaceLabeling { labels: vec![false; 4], energy: 0.0 }, &fan).unwrap();
        assert_eq!(none.deformable_count(), 0);
    }

    #[test]
    fn mask_png_round_trip_one_bit() {
        let mut m = PixelMask::filled(ViewId::NegY, false);
        for i in (0..m.bits.len()).step_by(7) {
            m.bits[i] = true;
        }
        let bytes = m.to_png().unwrap();
        let back = PixelMask::from_png(ViewId::NegY, &bytes).unwrap();
        assert_eq!(back, m);

        let white = PixelMask::filled(ViewId::PosX, true);
        let back = PixelMask::from_png(ViewId::PosX, &white.to_png().unwrap()).unwrap();
        assert_eq!(back.count(), (IMAGE_WIDTH * IMAGE_HEIGHT) as usize);

        let small = raster::encode_png(4, 4, png::ColorType::Grayscale, png::BitDepth::Eight, &[255; 16]).unwrap();
        assert!(matches!(PixelMask::from_png(ViewId::PosX, &small), Err(SegmentError::MaskDimensions { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let l = FaceLabeling { labels: vec![true, false, true], energy: 3.0 };
        let back = FaceLabeling::from_csv(&l.to_csv()).unwrap();
        assert_eq!(back.labels, l.labels);
        assert!(FaceLabeling::from_csv("face,label\n0,2\n").is_err());
    }

    #[test]
    fn cube_side_mask_selects_that_side() {
        let cube = shapes::subdivided_box(2, 1.0);
        let views = raster::make_axis_views();
        let facing: Vec<bool> = (0..cube.num_faces()).map(|f| cube.face_normal(f).normalize().x > 0.99).collect();
        let masks: Vec<PixelMask> =
            views.iter().map(|v| PixelMask::from_faces(&raster::rasterize(&cube, v), &facing)).collect();
        // eight masked faces against eight crease edges: a tie at w0 = 2
        let l = segment_from_masks(&cube, &views, &masks, DEFAULT_W0).unwrap();
        assert_eq!((l.deformable_count(), l.energy), (0, 8.0));
        let l = segment_from_masks(&cube, &views, &masks, 1.0).unwrap();
        assert_eq!(l.labels, facing);

        // faces no view sees are free, so a single view lets the label spread
        let l = segment_from_masks(&cube, &views, &masks[..1], 1.0).unwrap();
        assert!(l.labels.iter().all(|&x| x));
    }
}
