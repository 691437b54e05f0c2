use super::{fgmres, Preconditioner, Smoother, SolverConfig};
use crate::linalg::{axpy, dot, norm2, SparseMatrix};
use crate::{Error, Result};

/// A [`Smoother`] bound to a particular matrix.
#[derive(Debug, Clone)]
pub struct SmootherOp<'a> {
    a: &'a SparseMatrix,
    kind: Smoother,
    inv_diag: Vec<f64>,
}

impl<'a> SmootherOp<'a> {
    pub fn new(a: &'a SparseMatrix, kind: Smoother) -> Result<Self> {
        let diag = a.diagonal();
        if kind != Smoother::None {
            if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
                return Err(Error::Solver { block: "smoother", msg: format!("nonpositive diagonal at row {i}") });
            }
        }
        Ok(Self { a, kind, inv_diag: diag.iter().map(|d| 1.0 / d).collect() })
    }
}

impl Preconditioner for SmootherOp<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        match self.kind {
            Smoother::None => z.copy_from_slice(r),
            Smoother::Jacobi => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
                    *zi = ri * di;
                }
            }
            Smoother::SymmetricGaussSeidel => {
                // (D+L) D⁻¹ (D+U) z = r
                let (rp, ci, va) = (self.a.row_ptr(), self.a.col_idx(), self.a.values());
                let n = r.len();
                for i in 0..n {
                    let mut s = r[i];
                    for k in rp[i]..rp[i + 1] {
                        if ci[k] < i {
                            s -= va[k] * z[ci[k]];
                        }
                    }
                    z[i] = s * self.inv_diag[i];
                }
                for i in (0..n).rev() {
                    let mut s = 0.0;
                    for k in rp[i]..rp[i + 1] {
                        if ci[k] > i {
                            s += va[k] * z[ci[k]];
                        }
                    }
                    z[i] -= s * self.inv_diag[i];
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgStats {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

/// Preconditioned CG from a zero initial guess until `‖b − Ax‖ ≤ tol·‖b‖`.
pub fn pcg(a: &SparseMatrix, m: &SmootherOp, b: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, PcgStats)> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::Shape(format!("pcg: {}x{} matrix, rhs {}", a.rows(), a.cols(), b.len())));
    }
    let mut x = vec![0.0; n];
    let bn = norm2(b);
    if bn == 0.0 {
        return Ok((x, PcgStats { iterations: 0, rel_residual: 0.0, converged: true }));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=maxit {
        a.mul_into(&p, &mut ap);
        let curv = dot(&p, &ap);
        if !(curv > 0.0) {
            return Err(Error::Indefinite { iteration: it, curvature: curv });
        }
        let alpha = rz / curv;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rel = norm2(&r) / bn;
        if rel <= tol {
            return Ok((x, PcgStats { iterations: it, rel_residual: rel, converged: true }));
        }
        m.apply(&r, &mut z)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok((x, PcgStats { iterations: maxit, rel_residual: rel, converged: false }))
}

/// Right-preconditioned GMRES for nonsymmetric inner blocks.
pub fn gmres_inner(a: &SparseMatrix, m: &SmootherOp, b: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, PcgStats)> {
    let cfg = SolverConfig { outer_tol: tol, outer_maxit: maxit, restart: maxit.min(100), ..Default::default() };
    let (x, s) = fgmres(a, m, b, &vec![0.0; b.len()], &cfg)?;
    Ok((x, PcgStats { iterations: s.iterations, rel_residual: s.rel_residual, converged: s.converged() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_mass_e, CoefficientField};
    use crate::complex::build_dof_maps;
    use crate::mesh::{generate, DomainSpec};
    use nalgebra::DVector;

    fn laplacian(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = SparseMatrix::identity(7);
        let b: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let m = SmootherOp::new(&a, Smoother::Jacobi).unwrap();
        let (x, s) = pcg(&a, &m, &b, 1e-12, 10).unwrap();
        assert_eq!(s.iterations, 1);
        assert_eq!(x, b);
    }

    #[test]
    fn mass_solve_matches_dense_within_conditioning() {
        let mesh = generate(&DomainSpec::unit_box(2)).unwrap();
        let d = build_dof_maps(&mesh);
        let me = assemble_mass_e(&mesh, &d, &CoefficientField::constant(&mesh, 1.0, 1.0).unwrap()).unwrap();
        let b: Vec<f64> = (0..me.rows()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let dense = me.to_dense();
        let exact = dense.clone().cholesky().unwrap().solve(&DVector::from_vec(b.clone()));
        let sv = dense.singular_values();
        let kappa = sv.max() / sv.min();
        let tol = 1e-8;
        for kind in [Smoother::None, Smoother::Jacobi, Smoother::SymmetricGaussSeidel] {
            let m = SmootherOp::new(&me, kind).unwrap();
            let (x, s) = pcg(&me, &m, &b, tol, 500).unwrap();
            assert!(s.converged);
            let err = (DVector::from_vec(x) - &exact).norm() / exact.norm();
            assert!(err <= tol * kappa, "{kind:?}: {err} > {}", tol * kappa);
        }
    }

    #[test]
    fn sgs_beats_jacobi_on_laplacian() {
        let a = laplacian(200);
        let b = vec![1.0; 200];
        let its = |k| pcg(&a, &SmootherOp::new(&a, k).unwrap(), &b, 1e-8, 2000).unwrap().1.iterations;
        assert!(its(Smoother::SymmetricGaussSeidel) < its(Smoother::Jacobi));
    }

    #[test]
    fn negative_curvature_is_an_error() {
        let a = SparseMatrix::from_diagonal(&[1.0, -1.0]);
        let m = SmootherOp::new(&a, Smoother::None).unwrap();
        assert!(matches!(pcg(&a, &m, &[1.0, 1.0], 1e-10, 10), Err(Error::Indefinite { .. })));
        assert!(SmootherOp::new(&a, Smoother::Jacobi).is_err());
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let a = laplacian(5);
        let (x, s) = pcg(&a, &SmootherOp::new(&a, Smoother::Jacobi).unwrap(), &[0.0; 5], 1e-8, 10).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gmres_inner_solves_nonsymmetric_system() {
        let mut t: Vec<_> = laplacian(50).triplets().collect();
        t.push((0, 10, 0.5));
        let a = SparseMatrix::from_triplets(50, 50, t).unwrap();
        let b = vec![1.0; 50];
        let (x, s) = gmres_inner(&a, &SmootherOp::new(&a, Smoother::Jacobi).unwrap(), &b, 1e-10, 200).unwrap();
        assert!(s.converged);
        let r: Vec<f64> = a.spmv(&x).unwrap().iter().zip(&b).map(|(u, v)| u - v).collect();
        assert!(norm2(&r) <= 1e-9 * norm2(&b));
    }
}
