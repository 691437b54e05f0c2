//! Discrete deRham complex on a [`TetMesh`]: free-DOF maps under the
//! impedance/perfect-conductor boundary split, signed incidence matrices and
//! canonical interpolation.

pub mod whitney;

use std::collections::HashMap;

use crate::linalg::{IntMatrix, SparseMatrix};
use crate::mesh::{FaceLabel, Point, TetMesh};
use crate::quadrature::{segment_rule, tet_rule, triangle_rule};

/// Global ↔ free index map for one family of mesh entities.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    to_free: Vec<Option<usize>>,
    to_global: Vec<usize>,
}

impl DofMap {
    fn from_mask(free: impl Iterator<Item = bool>) -> Self {
        let mut to_global = Vec::new();
        let to_free = free
            .enumerate()
            .map(|(g, is_free)| {
                is_free.then(|| {
                    to_global.push(g);
                    to_global.len() - 1
                })
            })
            .collect();
        Self { to_free, to_global }
    }

    pub fn len(&self) -> usize {
        self.to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_global.is_empty()
    }

    pub fn num_entities(&self) -> usize {
        self.to_free.len()
    }

    pub fn free(&self, global: usize) -> Option<usize> {
        self.to_free[global]
    }

    pub fn global(&self, free: usize) -> usize {
        self.to_global[free]
    }

    pub fn globals(&self) -> &[usize] {
        &self.to_global
    }

    /// Scatters a free-DOF vector to all entities (constrained ones get 0).
    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_entities()];
        for (k, g) in self.to_global.iter().enumerate() {
            out[*g] = free[k];
        }
        out
    }

    /// Gathers the free entries of an all-entity vector.
    pub fn restrict(&self, all: &[f64]) -> Vec<f64> {
        self.to_global.iter().map(|g| all[*g]).collect()
    }
}

/// Free DOFs of H_{h,0}(grad), H_{h,imp}(curl), H_{h,imp}(div) and L²_h.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMaps {
    pub p: DofMap,
    pub e: DofMap,
    pub b: DofMap,
    pub l2: DofMap,
}

impl DofMaps {
    pub fn total(&self) -> usize {
        self.p.len() + self.e.len() + self.b.len()
    }
}

/// Vertices on any boundary face, edges of Γ_o faces and Γ_o faces are constrained.
pub fn build_dof_maps(mesh: &TetMesh) -> DofMaps {
    let mut vertex_on_boundary = vec![false; mesh.num_vertices()];
    let mut face_on_gamma_o = vec![false; mesh.num_faces()];
    for (f, face) in mesh.faces().iter().enumerate() {
        match mesh.face_label(f) {
            FaceLabel::Interior => {}
            label => {
                for &v in face {
                    vertex_on_boundary[v] = true;
                }
                face_on_gamma_o[f] = label == FaceLabel::GammaO;
            }
        }
    }
    let edge_ids = edge_lookup(mesh);
    let mut edge_on_gamma_o = vec![false; mesh.num_edges()];
    for (f, face) in mesh.faces().iter().enumerate() {
        if face_on_gamma_o[f] {
            for [a, b] in face_edges(face) {
                edge_on_gamma_o[edge_ids[&[a, b]]] = true;
            }
        }
    }
    DofMaps {
        p: DofMap::from_mask(vertex_on_boundary.iter().map(|c| !c)),
        e: DofMap::from_mask(edge_on_gamma_o.iter().map(|c| !c)),
        b: DofMap::from_mask(face_on_gamma_o.iter().map(|c| !c)),
        l2: DofMap::from_mask(std::iter::repeat_n(true, mesh.num_tets())),
    }
}

/// Free edges lying on some Γ_i face.
pub fn gamma_i_edges(mesh: &TetMesh, dofs: &DofMaps) -> Vec<usize> {
    let edge_ids = edge_lookup(mesh);
    let mut on = vec![false; mesh.num_edges()];
    for (f, face) in mesh.faces().iter().enumerate() {
        if mesh.face_label(f) == FaceLabel::GammaI {
            for key in face_edges(face) {
                on[edge_ids[&key]] = true;
            }
        }
    }
    (0..mesh.num_edges()).filter(|e| on[*e] && dofs.e.free(*e).is_some()).collect()
}

/// The three edges of an ascending face triple, each ascending, in the order
/// (a,b), (b,c), (a,c).
pub fn face_edges(face: &[usize; 3]) -> [[usize; 2]; 3] {
    [[face[0], face[1]], [face[1], face[2]], [face[0], face[2]]]
}

/// Boundary circulation signs matching [`face_edges`] for the canonical normal.
pub const FACE_EDGE_SIGNS: [i64; 3] = [1, 1, -1];

pub fn edge_lookup(mesh: &TetMesh) -> HashMap<[usize; 2], usize> {
    mesh.edges().iter().enumerate().map(|(i, e)| (*e, i)).collect()
}

/// Signed incidence matrices of grad, curl and div restricted to free DOFs.
#[derive(Debug, Clone)]
pub struct IncidenceMatrices {
    /// e_dofs × p_dofs
    pub g: IntMatrix,
    /// b_dofs × e_dofs
    pub k: IntMatrix,
    /// l2_dofs × b_dofs
    pub d: IntMatrix,
}

impl IncidenceMatrices {
    pub fn g_f64(&self) -> SparseMatrix {
        self.g.to_f64()
    }

    pub fn k_f64(&self) -> SparseMatrix {
        self.k.to_f64()
    }

    pub fn d_f64(&self) -> SparseMatrix {
        self.d.to_f64()
    }
}

/// Incidence matrices over all mesh entities, ignoring boundary conditions.
pub fn build_full_incidence(mesh: &TetMesh) -> IncidenceMatrices {
    let g_trip = mesh
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(e, [a, b])| [(e, *b, 1i64), (e, *a, -1i64)])
        .collect();
    let edge_ids = edge_lookup(mesh);
    let mut k_trip = Vec::with_capacity(3 * mesh.num_faces());
    for (f, face) in mesh.faces().iter().enumerate() {
        for (key, s) in face_edges(face).iter().zip(FACE_EDGE_SIGNS) {
            k_trip.push((f, edge_ids[key], s));
        }
    }
    let mut d_trip = Vec::with_capacity(4 * mesh.num_tets());
    for t in 0..mesh.num_tets() {
        for of in mesh.tet_faces(t) {
            d_trip.push((t, of.index, of.sign as i64));
        }
    }
    IncidenceMatrices {
        g: IntMatrix::from_triplets(mesh.num_edges(), mesh.num_vertices(), g_trip).expect("valid mesh"),
        k: IntMatrix::from_triplets(mesh.num_faces(), mesh.num_edges(), k_trip).expect("valid mesh"),
        d: IntMatrix::from_triplets(mesh.num_tets(), mesh.num_faces(), d_trip).expect("valid mesh"),
    }
}

fn restrict(a: &IntMatrix, rows: &DofMap, cols: &DofMap) -> IntMatrix {
    let trip = a
        .triplets()
        .filter_map(|(r, c, v)| Some((rows.free(r)?, cols.free(c)?, v)))
        .collect();
    IntMatrix::from_triplets(rows.len(), cols.len(), trip).expect("restricted indices in range")
}

/// `G`, `K`, `D` on free DOFs: rows and columns of constrained entities removed.
pub fn build_incidence(mesh: &TetMesh, dofs: &DofMaps) -> IncidenceMatrices {
    let full = build_full_incidence(mesh);
    IncidenceMatrices {
        g: restrict(&full.g, &dofs.e, &dofs.p),
        k: restrict(&full.k, &dofs.b, &dofs.e),
        d: restrict(&full.d, &dofs.l2, &dofs.b),
    }
}

/// Line integral `∫_e f·t ds` along every edge (tail → head).
pub fn interp_curl_all(mesh: &TetMesh, f: impl Fn(&Point) -> Point) -> Vec<f64> {
    let v = mesh.vertices();
    mesh.edges()
        .iter()
        .map(|[a, b]| {
            let t = v[*b] - v[*a];
            segment_rule()
                .iter()
                .map(|(s, w)| w * f(&(v[*a] * s[0] + v[*b] * s[1])).dot(&t))
                .sum()
        })
        .collect()
}

/// Canonical Nédélec interpolant on free edges.
pub fn interp_curl(mesh: &TetMesh, dofs: &DofMaps, f: impl Fn(&Point) -> Point) -> Vec<f64> {
    dofs.e.restrict(&interp_curl_all(mesh, f))
}

/// Flux `∫_f g·n dA` through every face along its canonical normal.
pub fn interp_div_all(mesh: &TetMesh, g: impl Fn(&Point) -> Point) -> Vec<f64> {
    let v = mesh.vertices();
    mesh.faces()
        .iter()
        .enumerate()
        .map(|(fi, [a, b, c])| {
            let n = mesh.face_normal(fi);
            triangle_rule()
                .iter()
                .map(|(s, w)| w * 0.5 * g(&(v[*a] * s[0] + v[*b] * s[1] + v[*c] * s[2])).dot(&n))
                .sum()
        })
        .collect()
}

/// Canonical Raviart–Thomas interpolant on free faces.
pub fn interp_div(mesh: &TetMesh, dofs: &DofMaps, g: impl Fn(&Point) -> Point) -> Vec<f64> {
    dofs.b.restrict(&interp_div_all(mesh, g))
}

/// Nodal values on free vertices.
pub fn interp_grad(mesh: &TetMesh, dofs: &DofMaps, f: impl Fn(&Point) -> f64) -> Vec<f64> {
    dofs.p.globals().iter().map(|v| f(&mesh.vertices()[*v])).collect()
}

/// Cell integrals `∫_T f` (the L² DOFs) with the 4-point rule.
pub fn interp_l2(mesh: &TetMesh, f: impl Fn(&Point) -> f64) -> Vec<f64> {
    (0..mesh.num_tets())
        .map(|t| {
            let p = mesh.tet_points(t);
            mesh.tet_volume(t)
                * tet_rule()
                    .iter()
                    .map(|(l, w)| w * f(&whitney::point_at(&p, l)))
                    .sum::<f64>()
        })
        .collect()
}
