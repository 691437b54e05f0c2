//! Weighted Whitney mass matrices, the impedance surface matrix and the
//! per-cell coefficient fields.

use std::path::Path;

use rayon::prelude::*;

use crate::complex::whitney::{barycentric_gradients, edge_basis, face_basis, point_at};
use crate::complex::{DofMap, DofMaps};
use crate::linalg::{write_matrix_market, SparseMatrix};
use crate::mesh::{FaceLabel, Point, TetMesh};
use crate::quadrature::{tet_rule, triangle_rule};
use crate::{Error, Result};

/// Region where a jump coefficient takes its non-unit value, selected by
/// cell centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpRegion {
    /// `r_in ≤ |x − center| ≤ r_out` (Euclidean).
    Shell { center: Point, r_in: f64, r_out: f64 },
    /// `r_in ≤ |x − center|_∞ ≤ r_out`.
    BoxShell { center: Point, r_in: f64, r_out: f64 },
}

impl JumpRegion {
    /// Shell around the middle of the unit cube, between the default cavity
    /// `[0.25, 0.75]³` and the outer boundary.
    pub fn default_shell() -> Self {
        JumpRegion::Shell { center: Point::new(0.5, 0.5, 0.5), r_in: 0.35, r_out: 0.45 }
    }

    pub fn contains(&self, x: &Point) -> bool {
        match *self {
            JumpRegion::Shell { center, r_in, r_out } => {
                let r = (x - center).norm();
                r_in <= r && r <= r_out
            }
            JumpRegion::BoxShell { center, r_in, r_out } => {
                let r = (x - center).amax();
                r_in <= r && r <= r_out
            }
        }
    }
}

/// Piecewise-constant permittivity and inverse permeability, one value per tet.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub eps: Vec<f64>,
    pub mu_inv: Vec<f64>,
}

impl CoefficientField {
    pub fn constant(mesh: &TetMesh, eps: f64, mu_inv: f64) -> Result<Self> {
        Self::new(vec![eps; mesh.num_tets()], vec![mu_inv; mesh.num_tets()])
    }

    pub fn new(eps: Vec<f64>, mu_inv: Vec<f64>) -> Result<Self> {
        let field = Self { eps, mu_inv };
        field.validate()?;
        Ok(field)
    }

    /// ε = `value` inside `region`, 1 elsewhere; μ⁻¹ = 1.
    pub fn eps_jump(mesh: &TetMesh, region: &JumpRegion, value: f64) -> Result<Self> {
        Self::new(band(mesh, region, value), vec![1.0; mesh.num_tets()])
    }

    /// μ⁻¹ = `value` inside `region`, 1 elsewhere; ε = 1.
    pub fn mu_inv_jump(mesh: &TetMesh, region: &JumpRegion, value: f64) -> Result<Self> {
        Self::new(vec![1.0; mesh.num_tets()], band(mesh, region, value))
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.len() != self.mu_inv.len() {
            return Err(Error::InvalidCoefficient("eps and mu_inv differ in length".into()));
        }
        for (name, v) in [("eps", &self.eps), ("mu_inv", &self.mu_inv)] {
            if let Some((t, x)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidCoefficient(format!("{name}[{t}] = {x}")));
            }
        }
        Ok(())
    }

    fn check_mesh(&self, mesh: &TetMesh) -> Result<()> {
        self.validate()?;
        if self.eps.len() != mesh.num_tets() {
            return Err(Error::InvalidCoefficient(format!(
                "{} cell values for {} tets",
                self.eps.len(),
                mesh.num_tets()
            )));
        }
        Ok(())
    }
}

fn band(mesh: &TetMesh, region: &JumpRegion, value: f64) -> Vec<f64> {
    (0..mesh.num_tets())
        .map(|t| if region.contains(&mesh.tet_centroid(t)) { value } else { 1.0 })
        .collect()
}

/// Position of each global vertex of tet `t` in local numbering.
fn local_of(tet: &[usize; 4], v: usize) -> usize {
    tet.iter().position(|x| *x == v).expect("vertex belongs to tet")
}

type Local<const N: usize> = ([Option<usize>; N], [[f64; N]; N]);

fn scatter<const N: usize>(n: usize, locals: Vec<Local<N>>) -> SparseMatrix {
    let mut trip = Vec::with_capacity(locals.len() * N * N);
    for (dofs, m) in locals {
        for i in 0..N {
            let Some(r) = dofs[i] else { continue };
            for j in 0..N {
                if let Some(c) = dofs[j] {
                    trip.push((r, c, m[i][j]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, trip).expect("dof indices in range")
}

/// Local P1 mass `∫_T λ_i λ_j` by quadrature.
pub fn local_mass_p(p: &[Point; 4]) -> [[f64; 4]; 4] {
    let (_, vol) = barycentric_gradients(p);
    let mut m = [[0.0; 4]; 4];
    for (lam, w) in tet_rule() {
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] += w * vol * lam[i] * lam[j];
            }
        }
    }
    m
}

/// Local edge mass with unit weight; edge `k` runs between local vertices `edges[k]`.
pub fn local_mass_e(p: &[Point; 4], edges: &[[usize; 2]; 6]) -> [[f64; 6]; 6] {
    let (g, vol) = barycentric_gradients(p);
    let mut m = [[0.0; 6]; 6];
    for (lam, w) in tet_rule() {
        let phi = edges.map(|[i, j]| edge_basis(&lam, &g, i, j));
        for a in 0..6 {
            for b in 0..6 {
                m[a][b] += w * vol * phi[a].dot(&phi[b]);
            }
        }
    }
    m
}

/// Local face mass with unit weight; face `k` has local vertices `faces[k]`.
pub fn local_mass_b(p: &[Point; 4], faces: &[[usize; 3]; 4]) -> [[f64; 4]; 4] {
    let (g, vol) = barycentric_gradients(p);
    let mut m = [[0.0; 4]; 4];
    for (lam, w) in tet_rule() {
        let psi = faces.map(|[i, j, k]| face_basis(&lam, &g, i, j, k));
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] += w * vol * psi[a].dot(&psi[b]);
            }
        }
    }
    m
}

pub fn assemble_mass_p(mesh: &TetMesh, dofs: &DofMaps) -> SparseMatrix {
    let locals = (0..mesh.num_tets())
        .into_par_iter()
        .map(|t| {
            let tet = mesh.tets()[t];
            (tet.map(|v| dofs.p.free(v)), local_mass_p(&mesh.tet_points(t)))
        })
        .collect();
    scatter(dofs.p.len(), locals)
}

fn tet_edge_dofs(mesh: &TetMesh, t: usize, map: &DofMap) -> ([Option<usize>; 6], [[usize; 2]; 6]) {
    let tet = mesh.tets()[t];
    let ids = mesh.tet_edges(t).map(|o| o.index);
    let local = ids.map(|e| {
        let [a, b] = mesh.edges()[e];
        [local_of(&tet, a), local_of(&tet, b)]
    });
    (ids.map(|e| map.free(e)), local)
}

fn tet_face_dofs(mesh: &TetMesh, t: usize, map: &DofMap) -> ([Option<usize>; 4], [[usize; 3]; 4]) {
    let tet = mesh.tets()[t];
    let ids = mesh.tet_faces(t).map(|o| o.index);
    let local = ids.map(|f| mesh.faces()[f].map(|v| local_of(&tet, v)));
    (ids.map(|f| map.free(f)), local)
}

fn scale<const N: usize>(mut m: [[f64; N]; N], s: f64) -> [[f64; N]; N] {
    m.iter_mut().flatten().for_each(|x| *x *= s);
    m
}

/// ε-weighted Nédélec mass matrix on free edges.
pub fn assemble_mass_e(mesh: &TetMesh, dofs: &DofMaps, coeff: &CoefficientField) -> Result<SparseMatrix> {
    coeff.check_mesh(mesh)?;
    let locals = (0..mesh.num_tets())
        .into_par_iter()
        .map(|t| {
            let (ids, local) = tet_edge_dofs(mesh, t, &dofs.e);
            (ids, scale(local_mass_e(&mesh.tet_points(t), &local), coeff.eps[t]))
        })
        .collect();
    Ok(scatter(dofs.e.len(), locals))
}

/// μ⁻¹-weighted Raviart–Thomas mass matrix on free faces.
pub fn assemble_mass_b(mesh: &TetMesh, dofs: &DofMaps, coeff: &CoefficientField) -> Result<SparseMatrix> {
    coeff.check_mesh(mesh)?;
    let locals = (0..mesh.num_tets())
        .into_par_iter()
        .map(|t| {
            let (ids, local) = tet_face_dofs(mesh, t, &dofs.b);
            (ids, scale(local_mass_b(&mesh.tet_points(t), &local), coeff.mu_inv[t]))
        })
        .collect();
    Ok(scatter(dofs.b.len(), locals))
}

/// Load vector `∫_Ω f·φ_e` on free edges.
pub fn assemble_load_e(mesh: &TetMesh, dofs: &DofMaps, f: &(dyn Fn(&Point) -> Point + Sync)) -> Vec<f64> {
    let locals: Vec<_> = (0..mesh.num_tets())
        .into_par_iter()
        .map(|t| {
            let p = mesh.tet_points(t);
            let (g, vol) = barycentric_gradients(&p);
            let (ids, local) = tet_edge_dofs(mesh, t, &dofs.e);
            let mut v = [0.0; 6];
            for (lam, w) in tet_rule() {
                let fx = f(&point_at(&p, &lam));
                for (k, [i, j]) in local.iter().enumerate() {
                    v[k] += w * vol * fx.dot(&edge_basis(&lam, &g, *i, *j));
                }
            }
            (ids, v)
        })
        .collect();
    let mut out = vec![0.0; dofs.e.len()];
    for (ids, v) in locals {
        for (id, x) in ids.iter().zip(v) {
            if let Some(r) = id {
                out[*r] += x;
            }
        }
    }
    out
}

/// Mass matrix of the piecewise-constant space. The L² DOF is the cell
/// integral, so the basis function on `T` is `1/|T|` and the mass is `1/|T|`.
pub fn assemble_mass_l2(mesh: &TetMesh) -> SparseMatrix {
    let d: Vec<f64> = (0..mesh.num_tets()).map(|t| 1.0 / mesh.tet_volume(t)).collect();
    SparseMatrix::from_diagonal(&d)
}

/// 2D Whitney edge mass on a triangle with edges (0,1), (1,2), (0,2).
pub fn local_impedance(p: &[Point; 3]) -> [[f64; 3]; 3] {
    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let two_area = n.norm();
    let nh = n / two_area;
    let g = [0, 1, 2].map(|i| nh.cross(&(p[(i + 2) % 3] - p[(i + 1) % 3])) / two_area);
    let edges = [[0, 1], [1, 2], [0, 2]];
    let mut m = [[0.0; 3]; 3];
    for (lam, w) in triangle_rule() {
        let phi = edges.map(|[i, j]| g[j] * lam[i] - g[i] * lam[j]);
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += w * 0.5 * two_area * phi[a].dot(&phi[b]);
            }
        }
    }
    m
}

/// Impedance matrix `(1+γ)∫_{Γ_i} E_t·F_t` on free edges.
pub fn assemble_impedance(mesh: &TetMesh, dofs: &DofMaps, gamma: f64) -> Result<SparseMatrix> {
    if !(gamma > -1.0) {
        return Err(Error::InvalidCoefficient(format!("gamma = {gamma} must exceed -1")));
    }
    let edge_ids = crate::complex::edge_lookup(mesh);
    let locals = (0..mesh.num_faces())
        .filter(|f| mesh.face_label(*f) == FaceLabel::GammaI)
        .map(|f| {
            let face = mesh.faces()[f];
            let ids = crate::complex::face_edges(&face).map(|key| dofs.e.free(edge_ids[&key]));
            (ids, scale(local_impedance(&face.map(|v| mesh.vertices()[v])), 1.0 + gamma))
        })
        .collect();
    Ok(scatter(dofs.e.len(), locals))
}

/// All matrices of one discretization.
#[derive(Debug, Clone)]
pub struct AssembledForms {
    pub mp: SparseMatrix,
    pub me: SparseMatrix,
    pub mb: SparseMatrix,
    pub m0: SparseMatrix,
    pub z: SparseMatrix,
    pub gamma: f64,
}

impl AssembledForms {
    pub fn assemble(mesh: &TetMesh, dofs: &DofMaps, coeff: &CoefficientField, gamma: f64) -> Result<Self> {
        Ok(Self {
            mp: assemble_mass_p(mesh, dofs),
            me: assemble_mass_e(mesh, dofs, coeff)?,
            mb: assemble_mass_b(mesh, dofs, coeff)?,
            m0: assemble_mass_l2(mesh),
            z: assemble_impedance(mesh, dofs, gamma)?,
            gamma,
        })
    }

    /// Writes `Mp.mtx`, `Me.mtx`, `Mb.mtx`, `M0.mtx`, `Z.mtx` into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, m) in [("Mp", &self.mp), ("Me", &self.me), ("Mb", &self.mb), ("M0", &self.m0), ("Z", &self.z)] {
            write_matrix_market(m, dir.join(format!("{name}.mtx")))?;
        }
        Ok(())
    }
}
