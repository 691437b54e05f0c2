//! Tetrahedral meshes with canonically oriented edges and faces.

mod generate;
mod io;

pub use generate::{generate, generate_box, generate_box_with_cavity, Aabb, BoxSide, DomainKind, DomainSpec, ImpedanceAssignment};
pub use io::{read_mesh, read_mesh_from, roundtrip, write_mesh, write_mesh_to};

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::{Error, Result};

pub type Point = Vector3<f64>;

/// Local vertex pairs of the six tet edges.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Local vertex triples of the four tet faces; face `k` is opposite vertex `k`.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceLabel {
    Interior,
    GammaI,
    GammaO,
}

/// Global entity index together with its orientation relative to the tet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Oriented {
    pub index: usize,
    pub sign: i8,
}

/// Tetrahedral mesh with derived edge/face numbering.
///
/// Edges are stored as `(tail, head)` with `tail < head`, faces as ascending
/// vertex triples. For edges the tet-local sign compares the global direction
/// with the local one (`LOCAL_EDGES` order on stored tet vertices); for faces
/// it is `+1` when the canonical normal `(v1-v0)×(v2-v0)` points out of the tet.
#[derive(Debug, Clone)]
pub struct TetMesh {
    vertices: Vec<Point>,
    tets: Vec<[usize; 4]>,
    edges: Vec<[usize; 2]>,
    faces: Vec<[usize; 3]>,
    tet_to_edges: Vec<[Oriented; 6]>,
    tet_to_faces: Vec<[Oriented; 4]>,
    face_label: Vec<FaceLabel>,
    face_tets: Vec<u8>,
}

impl TetMesh {
    /// Builds the derived entity structure from raw vertices, tets and a
    /// label for every boundary face (keyed by ascending vertex triple).
    ///
    /// Every boundary face must be labeled and no interior face may be.
    pub fn from_parts(
        vertices: Vec<Point>,
        tets: Vec<[usize; 4]>,
        boundary: &HashMap<[usize; 3], FaceLabel>,
    ) -> Result<Self> {
        let nv = vertices.len();
        let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
        let mut face_ids: HashMap<[usize; 3], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut faces = Vec::new();
        let mut face_tets: Vec<u8> = Vec::new();
        let mut tet_to_edges = Vec::with_capacity(tets.len());
        let mut tet_to_faces = Vec::with_capacity(tets.len());

        for (t, tet) in tets.iter().enumerate() {
            if tet.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidSpec(format!("tet {t} references a vertex out of range")));
            }
            let vol = signed_volume(&vertices, tet);
            if vol <= 0.0 {
                return Err(Error::InvalidSpec(format!("tet {t} has nonpositive volume {vol:e}")));
            }
            let mut te = [Oriented { index: 0, sign: 1 }; 6];
            for (l, [i, j]) in LOCAL_EDGES.iter().enumerate() {
                let (a, b) = (tet[*i], tet[*j]);
                let key = [a.min(b), a.max(b)];
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
                te[l] = Oriented { index: id, sign: if a < b { 1 } else { -1 } };
            }
            let mut tf = [Oriented { index: 0, sign: 1 }; 4];
            for (l, local) in LOCAL_FACES.iter().enumerate() {
                let mut key = [tet[local[0]], tet[local[1]], tet[local[2]]];
                key.sort_unstable();
                let id = *face_ids.entry(key).or_insert_with(|| {
                    faces.push(key);
                    face_tets.push(0);
                    faces.len() - 1
                });
                face_tets[id] += 1;
                if face_tets[id] > 2 {
                    return Err(Error::InvalidSpec(format!(
                        "face {key:?} shared by more than two tets"
                    )));
                }
                let opposite = vertices[tet[l]];
                let n = face_normal(&vertices, &key);
                let outward = n.dot(&(opposite - vertices[key[0]])) < 0.0;
                tf[l] = Oriented { index: id, sign: if outward { 1 } else { -1 } };
            }
            tet_to_edges.push(te);
            tet_to_faces.push(tf);
        }

        let mut face_label = vec![FaceLabel::Interior; faces.len()];
        let mut n_boundary = 0;
        for (f, key) in faces.iter().enumerate() {
            let given = boundary.get(key).copied();
            match (face_tets[f], given) {
                (1, Some(l @ (FaceLabel::GammaI | FaceLabel::GammaO))) => {
                    face_label[f] = l;
                    n_boundary += 1;
                }
                (1, _) => {
                    return Err(Error::InvalidSpec(format!("boundary face {key:?} is not labeled")))
                }
                (_, Some(_)) => {
                    return Err(Error::InvalidSpec(format!("interior face {key:?} carries a boundary label")))
                }
                _ => {}
            }
        }
        if n_boundary != boundary.len() {
            return Err(Error::InvalidSpec(
                "boundary list contains faces that are not mesh faces".into(),
            ));
        }

        Ok(Self { vertices, tets, edges, faces, tet_to_edges, tet_to_faces, face_label, face_tets })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn tet_edges(&self, t: usize) -> &[Oriented; 6] {
        &self.tet_to_edges[t]
    }

    pub fn tet_faces(&self, t: usize) -> &[Oriented; 4] {
        &self.tet_to_faces[t]
    }

    pub fn face_label(&self, f: usize) -> FaceLabel {
        self.face_label[f]
    }

    pub fn face_labels(&self) -> &[FaceLabel] {
        &self.face_label
    }

    /// Number of tets sharing face `f` (1 or 2).
    pub fn face_multiplicity(&self, f: usize) -> usize {
        self.face_tets[f] as usize
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.face_label.iter().filter(|l| **l != FaceLabel::Interior).count()
    }

    pub fn count_label(&self, label: FaceLabel) -> usize {
        self.face_label.iter().filter(|l| **l == label).count()
    }

    /// V − E + F − T.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_faces() as i64
            - self.num_tets() as i64
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.vertices, &self.tets[t])
    }

    /// Compensated sum of all tet volumes.
    pub fn total_volume(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for t in 0..self.num_tets() {
            let v = self.tet_volume(t);
            let s = sum + v;
            comp += if sum.abs() >= v.abs() { (sum - s) + v } else { (v - s) + sum };
            sum = s;
        }
        sum + comp
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        self.tets[t].map(|v| self.vertices[v])
    }

    pub fn tet_centroid(&self, t: usize) -> Point {
        let p = self.tet_points(t);
        (p[0] + p[1] + p[2] + p[3]) * 0.25
    }

    /// Canonical (unnormalized) normal of face `f`; its length is twice the area.
    pub fn face_normal(&self, f: usize) -> Point {
        face_normal(&self.vertices, &self.faces[f])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_normal(f).norm()
    }

    /// Labeled boundary faces keyed by vertex triple, as consumed by [`TetMesh::from_parts`].
    pub fn boundary_map(&self) -> HashMap<[usize; 3], FaceLabel> {
        self.faces
            .iter()
            .zip(&self.face_label)
            .filter(|(_, l)| **l != FaceLabel::Interior)
            .map(|(f, l)| (*f, *l))
            .collect()
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for e in &self.edges {
            if e[0] >= e[1] {
                return Err(format!("edge {e:?} not increasing"));
            }
        }
        for f in &self.faces {
            if !(f[0] < f[1] && f[1] < f[2]) {
                return Err(format!("face {f:?} not increasing"));
            }
        }
        for (f, (&m, &l)) in self.face_tets.iter().zip(&self.face_label).enumerate() {
            match (m, l) {
                (2, FaceLabel::Interior) => {}
                (1, FaceLabel::GammaI | FaceLabel::GammaO) => {}
                _ => return Err(format!("face {f} multiplicity {m} label {l:?}")),
            }
        }
        for t in 0..self.num_tets() {
            if self.tet_volume(t) <= 0.0 {
                return Err(format!("tet {t} not positively oriented"));
            }
        }
        Ok(())
    }
}

pub(crate) fn signed_volume(vertices: &[Point], tet: &[usize; 4]) -> f64 {
    let p0 = vertices[tet[0]];
    let a = vertices[tet[1]] - p0;
    let b = vertices[tet[2]] - p0;
    let c = vertices[tet[3]] - p0;
    a.dot(&b.cross(&c)) / 6.0
}

fn face_normal(vertices: &[Point], face: &[usize; 3]) -> Point {
    let p0 = vertices[face[0]];
    (vertices[face[1]] - p0).cross(&(vertices[face[2]] - p0))
}
