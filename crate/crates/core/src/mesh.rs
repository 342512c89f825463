//! Triangle mesh representation, file I/O and the discrete differential
//! quantities (dihedral angles, angle defects) used by the rest of the crate.
//!
//! A [`TriMesh`] is validated on construction and immutable afterwards.
//! Faces are expected to be wound consistently (counter-clockwise seen from
//! outside) for [`TriMesh::dihedral_angles`] to be meaningful.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative area threshold (times bbox-diagonal squared) below which a face
/// counts as degenerate.
pub const DEGENERATE_AREA_FACTOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("edge ({0}, {1}) is shared by more than two faces")]
    NonManifold(usize, usize),
    #[error("face {0} is degenerate")]
    DegenerateFace(usize),
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("faces {0} and {1} are wound inconsistently")]
    InconsistentWinding(usize, usize),
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("meshes have different topology")]
    TopologyMismatch,
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = MeshError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeshFormat {
    Obj,
    Off,
    Stl,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "off" => Ok(MeshFormat::Off),
            "stl" => Ok(MeshFormat::Stl),
            other => Err(MeshError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// An undirected mesh edge with one or two incident faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub faces: [usize; 2],
    pub face_count: u8,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.face_count == 1
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    face_neighbors: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
}

impl TriMesh {
    /// Builds a mesh and checks index ranges, degeneracy and manifoldness.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= n {
                    return Err(MeshError::IndexOutOfRange { face: fi, index: i, count: n });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace(fi));
            }
        }
        let diag = bbox_of(&vertices).diagonal();
        let min_area = DEGENERATE_AREA_FACTOR * diag * diag;
        for (fi, f) in faces.iter().enumerate() {
            if triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]) <= min_area {
                return Err(MeshError::DegenerateFace(fi));
            }
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                match edge_index.get(&key) {
                    Some(&ei) => {
                        let e = &mut edges[ei];
                        if e.face_count >= 2 {
                            return Err(MeshError::NonManifold(key.0, key.1));
                        }
                        e.faces[1] = fi;
                        e.face_count = 2;
                    }
                    None => {
                        edge_index.insert(key, edges.len());
                        edges.push(Edge { vertices: [key.0, key.1], faces: [fi, fi], face_count: 1 });
                    }
                }
            }
        }

        let mut face_neighbors = vec![Vec::new(); faces.len()];
        for e in edges.iter().filter(|e| e.face_count == 2) {
            face_neighbors[e.faces[0]].push(e.faces[1]);
            face_neighbors[e.faces[1]].push(e.faces[0]);
        }
        let mut vertex_faces = vec![Vec::new(); n];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }

        Ok(TriMesh { vertices, faces, edges, face_neighbors, vertex_faces })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Faces sharing an edge with `face`.
    pub fn face_neighbors(&self, face: usize) -> &[usize] {
        &self.face_neighbors[face]
    }

    /// Unordered pairs `(f, g)` with `f < g` of faces sharing an edge.
    pub fn face_adjacency(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter(|e| e.face_count == 2)
            .map(|e| (e.faces[0].min(e.faces[1]), e.faces[0].max(e.faces[1])))
            .collect()
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn interior_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.is_boundary()).count()
    }

    pub fn is_closed(&self) -> bool {
        self.edges.iter().all(|e| !e.is_boundary())
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    pub fn bbox(&self) -> Aabb {
        bbox_of(&self.vertices)
    }

    pub fn face_positions(&self, f: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal `(b - a) x (c - a)`.
    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.face_positions(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_normal(f).norm()
    }

    /// Same topology, new positions. Positions are not re-validated for
    /// degeneracy since deformed meshes may legitimately collapse faces.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::TopologyMismatch);
        }
        Ok(TriMesh { vertices, ..self.clone() })
    }

    pub fn same_topology(&self, other: &TriMesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    /// Connected components over vertex adjacency; returns a component id per vertex.
    pub fn vertex_components(&self) -> (usize, Vec<usize>) {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.vertices[0]), find(&mut parent, e.vertices[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut ids = vec![usize::MAX; n];
        let mut count = 0;
        let mut labels = vec![0; n];
        for v in 0..n {
            let r = find(&mut parent, v);
            if ids[r] == usize::MAX {
                ids[r] = count;
                count += 1;
            }
            labels[v] = ids[r];
        }
        (count, labels)
    }

    /// Interior dihedral angle for every pair of faces sharing an edge.
    ///
    /// The angle is measured through the inside of the surface: `pi` for
    /// coplanar faces, below `pi` at convex creases and above at concave ones.
    pub fn dihedral_angles(&self) -> Result<DihedralAngles> {
        let mut pairs = Vec::new();
        for e in self.edges.iter().filter(|e| e.face_count == 2) {
            let (f, g) = (e.faces[0], e.faces[1]);
            let (a, b) = (e.vertices[0], e.vertices[1]);
            let df = directed(&self.faces[f], a, b);
            let dg = directed(&self.faces[g], a, b);
            if df == dg {
                return Err(MeshError::InconsistentWinding(f, g));
            }
            let nf = self.face_normal(f).normalize();
            let ng = self.face_normal(g).normalize();
            let phi = nf.cross(&ng).norm().atan2(nf.dot(&ng));
            let opposite = self.faces[g].iter().copied().find(|&v| v != a && v != b).unwrap();
            let side = nf.dot(&(self.vertices[opposite] - self.vertices[a]));
            let theta = if side <= 0.0 { PI - phi } else { PI + phi };
            pairs.push((f.min(g), f.max(g), theta));
        }
        Ok(DihedralAngles::new(pairs))
    }

    /// Discrete Gaussian curvature per vertex: `2*pi` minus the incident
    /// corner angles at interior vertices, `pi` minus them on the boundary.
    pub fn angle_defects(&self) -> Vec<f64> {
        let n = self.vertices.len();
        let mut sums = vec![0.0; n];
        for f in 0..self.faces.len() {
            let angles = self.corner_angles(f);
            for (k, &v) in self.faces[f].iter().enumerate() {
                sums[v] += angles[k];
            }
        }
        let mut boundary = vec![false; n];
        for e in self.edges.iter().filter(|e| e.is_boundary()) {
            boundary[e.vertices[0]] = true;
            boundary[e.vertices[1]] = true;
        }
        (0..n)
            .map(|v| if boundary[v] { PI - sums[v] } else { 2.0 * PI - sums[v] })
            .collect()
    }

    /// Interior angles at the three corners of face `f`.
    pub fn corner_angles(&self, f: usize) -> [f64; 3] {
        let p = self.face_positions(f);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let u = p[(k + 1) % 3] - p[k];
            let w = p[(k + 2) % 3] - p[k];
            out[k] = u.cross(&w).norm().atan2(u.dot(&w));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let format = MeshFormat::from_path(path)?;
        Self::load_as(path, format)
    }

    pub fn load_as(path: impl AsRef<Path>, format: MeshFormat) -> Result<Self> {
        let bytes = fs::read(path)?;
        match format {
            MeshFormat::Obj => parse_obj(&String::from_utf8_lossy(&bytes)),
            MeshFormat::Off => parse_off(&String::from_utf8_lossy(&bytes)),
            MeshFormat::Stl => parse_stl(&bytes),
        }
    }

    /// OBJ text with 17 significant digits per coordinate, so a write/read
    /// round trip is bitwise exact.
    pub fn to_obj_string(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 72 + self.faces.len() * 24);
        for v in &self.vertices {
            writeln!(s, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z).unwrap();
        }
        for f in &self.faces {
            writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
        }
        s
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        file.write_all(self.to_obj_string().as_bytes())?;
        file.flush()?;
        Ok(())
    }

    /// Rescales into a unit box centered at the origin (longest side 1).
    pub fn normalize_to_unit(&self) -> (TriMesh, Normalization) {
        let bb = self.bbox();
        let center = (bb.min.coords + bb.max.coords) * 0.5;
        let extent = bb.extent().max();
        let record = Normalization { center, extent };
        let verts = self.vertices.iter().map(|p| record.apply(p)).collect();
        (TriMesh { vertices: verts, ..self.clone() }, record)
    }
}

fn directed(face: &[usize; 3], a: usize, b: usize) -> bool {
    (0..3).any(|k| face[k] == a && face[(k + 1) % 3] == b)
}

pub fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Inverse-able record of a [`TriMesh::normalize_to_unit`] call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: Vector3<f64>,
    pub extent: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization { center: Vector3::zeros(), extent: 1.0 }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p.coords - self.center) / self.extent)
    }

    pub fn invert(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(p.coords * self.extent + self.center)
    }

    pub fn apply_mesh(&self, mesh: &TriMesh) -> TriMesh {
        let verts = mesh.vertices.iter().map(|p| self.apply(p)).collect();
        TriMesh { vertices: verts, ..mesh.clone() }
    }

    pub fn invert_mesh(&self, mesh: &TriMesh) -> TriMesh {
        let verts = mesh.vertices.iter().map(|p| self.invert(p)).collect();
        TriMesh { vertices: verts, ..mesh.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }
}

fn bbox_of(points: &[Point3<f64>]) -> Aabb {
    let mut min = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut max = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min = min.inf(p);
        max = max.sup(p);
    }
    Aabb { min, max }
}

/// Symmetric lookup of per-edge dihedral angles.
#[derive(Debug, Clone)]
pub struct DihedralAngles {
    pairs: Vec<(usize, usize, f64)>,
    index: HashMap<(usize, usize), usize>,
}

impl DihedralAngles {
    fn new(pairs: Vec<(usize, usize, f64)>) -> Self {
        let index = pairs.iter().enumerate().map(|(i, &(f, g, _))| ((f, g), i)).collect();
        DihedralAngles { pairs, index }
    }

    pub fn get(&self, f: usize, g: usize) -> Option<f64> {
        self.index.get(&(f.min(g), f.max(g))).map(|&i| self.pairs[i].2)
    }

    /// `(f, g, theta)` with `f < g`, in edge order.
    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse { line, msg: msg.into() }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    tok.ok_or_else(|| parse_err(line, "missing coordinate"))?
        .parse::<f64>()
        .map_err(|e| parse_err(line, e.to_string()))
}

/// Fan-triangulates polygons; 1-based and negative (relative) indices.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line_no)?;
                let y = parse_f64(toks.next(), line_no)?;
                let z = parse_f64(toks.next(), line_no)?;
                verts.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in toks {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| parse_err(line_no, format!("bad face index '{t}'")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        verts.len() as i64 + i
                    } else {
                        return Err(parse_err(line_no, "face index 0 is invalid (indices are 1-based)"));
                    };
                    if resolved < 0 {
                        return Err(parse_err(line_no, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(parse_err(line_no, "face with fewer than 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(verts, faces)
}

pub fn parse_off(text: &str) -> Result<TriMesh> {
    let mut tokens = text
        .lines()
        .enumerate()
        .flat_map(|(ln, l)| {
            l.split('#').next().unwrap_or("").split_whitespace().map(move |t| (ln + 1, t)).collect::<Vec<_>>()
        })
        .peekable();
    match tokens.next() {
        Some((_, "OFF")) => {}
        Some((ln, t)) => return Err(parse_err(ln, format!("expected OFF header, found '{t}'"))),
        None => return Err(MeshError::EmptyMesh),
    }
    let mut next_usize = |what: &str| -> Result<usize> {
        let (ln, t) = tokens.next().ok_or_else(|| parse_err(0, format!("missing {what}")))?;
        t.parse().map_err(|_| parse_err(ln, format!("bad {what} '{t}'")))
    };
    let nv = next_usize("vertex count")?;
    let nf = next_usize("face count")?;
    let _ne = next_usize("edge count")?;
    let mut verts = Vec::with_capacity(nv);
    let mut coords = Vec::with_capacity(3);
    let mut faces = Vec::with_capacity(nf);
    let mut rest: Vec<(usize, &str)> = tokens.collect();
    rest.reverse();
    let mut pop = |what: &str| rest.pop().ok_or_else(|| parse_err(0, format!("unexpected end of file reading {what}")));
    for _ in 0..nv {
        coords.clear();
        for _ in 0..3 {
            let (ln, t) = pop("vertex")?;
            coords.push(t.parse::<f64>().map_err(|e| parse_err(ln, e.to_string()))?);
        }
        verts.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    for _ in 0..nf {
        let (ln, t) = pop("face")?;
        let k: usize = t.parse().map_err(|_| parse_err(ln, "bad face arity"))?;
        if k < 3 {
            return Err(parse_err(ln, "face with fewer than 3 vertices"));
        }
        let mut idx = Vec::with_capacity(k);
        for _ in 0..k {
            let (ln, t) = pop("face index")?;
            idx.push(t.parse::<usize>().map_err(|_| parse_err(ln, format!("bad face index '{t}'")))?);
        }
        for j in 1..k - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    TriMesh::new(verts, faces)
}

/// ASCII or binary STL; vertices are welded by exact coordinate match.
pub fn parse_stl(bytes: &[u8]) -> Result<TriMesh> {
    let tris = if is_binary_stl(bytes) { read_binary_stl(bytes)? } else { read_ascii_stl(&String::from_utf8_lossy(bytes))? };
    let mut lookup: HashMap<[u64; 3], usize> = HashMap::new();
    let mut verts = Vec::new();
    let mut faces = Vec::with_capacity(tris.len());
    for tri in tris {
        let mut f = [0usize; 3];
        for (k, p) in tri.iter().enumerate() {
            let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
            f[k] = *lookup.entry(key).or_insert_with(|| {
                verts.push(*p);
                verts.len() - 1
            });
        }
        faces.push(f);
    }
    TriMesh::new(verts, faces)
}

fn is_binary_stl(bytes: &[u8]) -> bool {
    if bytes.len() < 84 {
        return false;
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    bytes.len() == 84 + n * 50
}

fn read_binary_stl(bytes: &[u8]) -> Result<Vec<[Point3<f64>; 3]>> {
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    let f32_at = |o: usize| f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64;
    Ok((0..n)
        .map(|i| {
            let base = 84 + i * 50 + 12;
            let p = |k: usize| Point3::new(f32_at(base + k * 12), f32_at(base + k * 12 + 4), f32_at(base + k * 12 + 8));
            [p(0), p(1), p(2)]
        })
        .collect())
}

fn read_ascii_stl(text: &str) -> Result<Vec<[Point3<f64>; 3]>> {
    let mut tris = Vec::new();
    let mut cur = Vec::with_capacity(3);
    for (ln, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("vertex") => {
                let x = parse_f64(toks.next(), ln + 1)?;
                let y = parse_f64(toks.next(), ln + 1)?;
                let z = parse_f64(toks.next(), ln + 1)?;
                cur.push(Point3::new(x, y, z));
            }
            Some("endfacet") => {
                if cur.len() != 3 {
                    return Err(parse_err(ln + 1, "facet without exactly 3 vertices"));
                }
                tris.push([cur[0], cur[1], cur[2]]);
                cur.clear();
            }
            _ => {}
        }
    }
    Ok(tris)
}
