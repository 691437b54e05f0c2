//! Lowest-order Whitney basis functions on a tetrahedron.
//!
//! All functions take barycentric coordinates `lam` of the evaluation point
//! and the constant barycentric gradients of the tet. Indices are tet-local;
//! the orientation of an edge/face basis function follows the order in which
//! its local vertices are passed.

use crate::mesh::Point;

/// Gradients of the four barycentric coordinates; also returns the volume.
pub fn barycentric_gradients(p: &[Point; 4]) -> ([Point; 4], f64) {
    let a = p[1] - p[0];
    let b = p[2] - p[0];
    let c = p[3] - p[0];
    let det = a.dot(&b.cross(&c));
    let g1 = b.cross(&c) / det;
    let g2 = c.cross(&a) / det;
    let g3 = a.cross(&b) / det;
    let g0 = -(g1 + g2 + g3);
    ([g0, g1, g2, g3], det / 6.0)
}

/// Edge function `λ_i ∇λ_j − λ_j ∇λ_i`, unit circulation along `i → j`.
pub fn edge_basis(lam: &[f64; 4], g: &[Point; 4], i: usize, j: usize) -> Point {
    g[j] * lam[i] - g[i] * lam[j]
}

/// Curl of the edge function: `2 ∇λ_i × ∇λ_j`.
pub fn edge_basis_curl(g: &[Point; 4], i: usize, j: usize) -> Point {
    g[i].cross(&g[j]) * 2.0
}

/// Face function `2(λ_i ∇λ_j×∇λ_k + λ_j ∇λ_k×∇λ_i + λ_k ∇λ_i×∇λ_j)`, unit flux
/// through the face in the direction of `(x_j−x_i)×(x_k−x_i)`.
pub fn face_basis(lam: &[f64; 4], g: &[Point; 4], i: usize, j: usize, k: usize) -> Point {
    (g[j].cross(&g[k]) * lam[i] + g[k].cross(&g[i]) * lam[j] + g[i].cross(&g[j]) * lam[k]) * 2.0
}

/// Divergence of the face function: `6 ∇λ_i·(∇λ_j×∇λ_k)`.
pub fn face_basis_div(g: &[Point; 4], i: usize, j: usize, k: usize) -> f64 {
    6.0 * g[i].dot(&g[j].cross(&g[k]))
}

pub fn point_at(p: &[Point; 4], lam: &[f64; 4]) -> Point {
    p[0] * lam[0] + p[1] * lam[1] + p[2] * lam[2] + p[3] * lam[3]
}
