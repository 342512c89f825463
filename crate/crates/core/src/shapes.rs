//! Procedural meshes used by tests, examples and the bundled demo.
//!
//! All closed shapes are wound counter-clockwise seen from outside.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use crate::mesh::TriMesh;

/// Axis-aligned cube with side `size` centered at the origin (8 vertices, 12 faces).
pub fn cube(size: f64) -> TriMesh {
    subdivided_box(1, size)
}

/// Cube whose faces are split into `n x n` cells, two triangles each.
pub fn subdivided_box(n: usize, size: f64) -> TriMesh {
    let mut b = LatticeBuilder::new(n, size);
    for face in BoxFace::ALL {
        for a in 0..n {
            for c in 0..n {
                b.cell(face, a, c);
            }
        }
    }
    b.finish()
}

/// Regular tetrahedron inscribed in the unit sphere.
pub fn tetrahedron() -> TriMesh {
    let s = 1.0 / 3f64.sqrt();
    let v = vec![
        Point3::new(s, s, s),
        Point3::new(s, -s, -s),
        Point3::new(-s, s, -s),
        Point3::new(-s, -s, s),
    ];
    TriMesh::new(v, vec![[0, 2, 3], [0, 3, 1], [0, 1, 2], [1, 3, 2]]).unwrap()
}

pub fn octahedron() -> TriMesh {
    let v = vec![
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(-1.0, 0.0, 0.0),
        Point3::new(0.0, 1.0, 0.0),
        Point3::new(0.0, -1.0, 0.0),
        Point3::new(0.0, 0.0, 1.0),
        Point3::new(0.0, 0.0, -1.0),
    ];
    let f = vec![[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]];
    TriMesh::new(v, f).unwrap()
}

/// Regular icosahedron with vertices on the unit sphere.
pub fn icosahedron() -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let v = raw.iter().map(|&(x, y, z)| Point3::from(Vector3::new(x, y, z).normalize())).collect();
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriMesh::new(v, f).unwrap()
}

/// Loop-style 1-to-4 subdivision of the icosahedron, projected to the unit
/// sphere. `icosphere(3)` has 642 vertices.
pub fn icosphere(subdivisions: usize) -> TriMesh {
    let base = icosahedron();
    let mut verts: Vec<Point3<f64>> = base.vertices().to_vec();
    let mut faces: Vec<[usize; 3]> = base.faces().to_vec();
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3<f64>>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (verts[a].coords + verts[b].coords).normalize();
                verts.push(Point3::from(m));
                verts.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriMesh::new(verts, faces).unwrap()
}

/// Flat grid of `nx x ny` cells in the z=0 plane spanning `[0, size]`,
/// normal +z. Vertex `(i, j)` has index `j * (nx + 1) + i`.
pub fn grid(nx: usize, ny: usize, size: f64) -> TriMesh {
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Point3::new(size * i as f64 / nx as f64, size * j as f64 / ny as f64, 0.0));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut f = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            f.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            f.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(v, f).unwrap()
}

/// Straight strip of `n` cells along x (width 1, length `n`).
pub fn strip(n: usize) -> TriMesh {
    let m = grid(n, 1, 1.0);
    let v = m.vertices().iter().map(|p| Point3::new(p.x * n as f64, p.y, 0.0)).collect();
    m.with_vertices(v).unwrap()
}

pub fn torus(nu: usize, nv: usize, major: f64, minor: f64) -> TriMesh {
    let mut v = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let w = 2.0 * PI * j as f64 / nv as f64;
            let r = major + minor * w.cos();
            v.push(Point3::new(r * u.cos(), r * u.sin(), minor * w.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut f = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            f.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            f.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(v, f).unwrap()
}

/// Placement of a tapered horn on the top (+y) face of a subdivided box.
#[derive(Debug, Clone, Copy)]
pub struct HornSpec {
    /// Cell index along z.
    pub cell_z: usize,
    /// Cell index along x.
    pub cell_x: usize,
    pub rings: usize,
    pub ring_height: f64,
    /// Fraction by which each ring shrinks toward the cell center.
    pub taper: f64,
}

/// A box with horns, plus the face ranges belonging to each horn.
#[derive(Debug, Clone)]
pub struct HornedBox {
    pub mesh: TriMesh,
    /// Per horn, the faces of the horn surface.
    pub horn_faces: Vec<Vec<usize>>,
    /// Per horn, the apex vertex.
    pub tips: Vec<usize>,
}

/// Subdivided box of side `size` with `n x n` cells per face and horns
/// growing out of selected top cells.
pub fn horned_box(n: usize, size: f64, horns: &[HornSpec]) -> HornedBox {
    let mut b = LatticeBuilder::new(n, size);
    for face in BoxFace::ALL {
        for a in 0..n {
            for c in 0..n {
                if face == BoxFace::PosY && horns.iter().any(|h| h.cell_z == a && h.cell_x == c) {
                    continue;
                }
                b.cell(face, a, c);
            }
        }
    }
    let mut horn_faces = Vec::new();
    let mut tips = Vec::new();
    for h in horns {
        let start = b.faces.len();
        let corners = BoxFace::PosY.cell_corners(h.cell_z, h.cell_x);
        let mut ring: Vec<usize> = corners.iter().map(|&l| b.lattice_vertex(l)).collect();
        let center = ring.iter().fold(Vector3::zeros(), |acc, &i| acc + b.verts[i].coords) / 4.0;
        let base: Vec<Point3<f64>> = ring.iter().map(|&i| b.verts[i]).collect();
        for level in 1..=h.rings {
            let shrink = (1.0 - h.taper).powi(level as i32);
            let lift = Vector3::new(0.0, h.ring_height * level as f64, 0.0);
            let next: Vec<usize> = base
                .iter()
                .map(|p| {
                    let q = Point3::from(center + (p.coords - center) * shrink + lift);
                    b.push(q)
                })
                .collect();
            for k in 0..4 {
                let (a0, a1, b0, b1) = (ring[k], ring[(k + 1) % 4], next[k], next[(k + 1) % 4]);
                b.faces.push([a0, a1, b1]);
                b.faces.push([a0, b1, b0]);
            }
            ring = next;
        }
        let apex = b.push(Point3::from(center + Vector3::new(0.0, h.ring_height * (h.rings as f64 + 1.0), 0.0)));
        for k in 0..4 {
            b.faces.push([ring[k], ring[(k + 1) % 4], apex]);
        }
        horn_faces.push((start..b.faces.len()).collect());
        tips.push(apex);
    }
    HornedBox { mesh: b.finish(), horn_faces, tips }
}

/// The bundled demo shape: a 6x6-cell cube with two horns on top.
pub fn demo_horned_cube() -> HornedBox {
    let horn = |cell_x| HornSpec { cell_z: 2, cell_x, rings: 3, ring_height: 0.12, taper: 0.25 };
    horned_box(6, 1.0, &[horn(1), horn(4)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BoxFace {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl BoxFace {
    const ALL: [BoxFace; 6] = [BoxFace::PosX, BoxFace::NegX, BoxFace::PosY, BoxFace::NegY, BoxFace::PosZ, BoxFace::NegZ];

    /// (normal axis, fixed lattice coordinate is max?, u axis, v axis) with u x v = normal.
    fn frame(self) -> (usize, bool, usize, usize) {
        match self {
            BoxFace::PosX => (0, true, 1, 2),
            BoxFace::NegX => (0, false, 2, 1),
            BoxFace::PosY => (1, true, 2, 0),
            BoxFace::NegY => (1, false, 0, 2),
            BoxFace::PosZ => (2, true, 0, 1),
            BoxFace::NegZ => (2, false, 1, 0),
        }
    }

    /// Lattice corners of cell (a, c) in counter-clockwise order seen from outside.
    fn cell_corners(self, a: usize, c: usize) -> [[usize; 3]; 4] {
        [self.lattice(a, c), self.lattice(a + 1, c), self.lattice(a + 1, c + 1), self.lattice(a, c + 1)]
    }

    fn lattice(self, u: usize, v: usize) -> [usize; 3] {
        // usize::MAX marks the far side; LatticeBuilder substitutes n
        let (normal, at_max, ua, va) = self.frame();
        let mut l = [0usize; 3];
        l[normal] = if at_max { usize::MAX } else { 0 };
        l[ua] = u;
        l[va] = v;
        l
    }
}

struct LatticeBuilder {
    n: usize,
    size: f64,
    verts: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    lookup: HashMap<[usize; 3], usize>,
}

impl LatticeBuilder {
    fn new(n: usize, size: f64) -> Self {
        LatticeBuilder { n, size, verts: Vec::new(), faces: Vec::new(), lookup: HashMap::new() }
    }

    fn lattice_vertex(&mut self, mut l: [usize; 3]) -> usize {
        for c in l.iter_mut() {
            if *c == usize::MAX {
                *c = self.n;
            }
        }
        if let Some(&i) = self.lookup.get(&l) {
            return i;
        }
        let h = self.size / self.n as f64;
        let p = Point3::new(
            l[0] as f64 * h - self.size / 2.0,
            l[1] as f64 * h - self.size / 2.0,
            l[2] as f64 * h - self.size / 2.0,
        );
        let i = self.push(p);
        self.lookup.insert(l, i);
        i
    }

    fn push(&mut self, p: Point3<f64>) -> usize {
        self.verts.push(p);
        self.verts.len() - 1
    }

    fn cell(&mut self, face: BoxFace, a: usize, c: usize) {
        let q = face.cell_corners(a, c).map(|l| self.lattice_vertex(l));
        self.faces.push([q[0], q[1], q[2]]);
        self.faces.push([q[0], q[2], q[3]]);
    }

    fn finish(self) -> TriMesh {
        TriMesh::new(self.verts, self.faces).expect("procedural mesh is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_volume(m: &TriMesh) -> f64 {
        m.faces()
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| m.vertices()[i].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    #[test]
    fn closed_shapes_are_outward_and_consistent() {
        for m in [cube(1.0), subdivided_box(3, 2.0), tetrahedron(), octahedron(), icosahedron(), icosphere(2)] {
            assert!(m.is_closed());
            assert_eq!(m.euler_characteristic(), 2);
            assert!(signed_volume(&m) > 0.0);
            m.dihedral_angles().unwrap();
        }
        assert!((signed_volume(&cube(1.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn icosphere_counts() {
        assert_eq!(icosphere(3).num_vertices(), 642);
        assert_eq!(icosphere(3).num_faces(), 1280);
    }

    #[test]
    fn horned_cube_is_closed_genus_zero() {
        let hb = demo_horned_cube();
        let m = &hb.mesh;
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
        assert!(signed_volume(m) > 1.0);
        m.dihedral_angles().unwrap();
        assert_eq!(hb.horn_faces.len(), 2);
        for (faces, &tip) in hb.horn_faces.iter().zip(&hb.tips) {
            assert_eq!(faces.len(), 3 * 8 + 4);
            assert!(m.vertices()[tip].y > 0.8);
        }
    }
}
