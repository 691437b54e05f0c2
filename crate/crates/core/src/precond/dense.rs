//! Dense oracles for small meshes: the LDU check, the weighted-norm matrix and
//! the inf-sup constant.

use nalgebra::DMatrix;

use super::{build_schur, SchurComplements};
use crate::assembly::AssembledForms;
use crate::complex::IncidenceMatrices;
use crate::krylov::Preconditioner;
use crate::linalg::{build_system, BlockLayout, LinearOperator, SparseMatrix, SystemOperator};
use crate::Result;

fn put(a: &mut DMatrix<f64>, m: &SparseMatrix, r0: usize, c0: usize, s: f64) {
    for (r, c, v) in m.triplets() {
        a[(r0 + r, c0 + c)] += s * v;
    }
}

fn identity_blocks(l: BlockLayout) -> DMatrix<f64> {
    DMatrix::identity(l.total(), l.total())
}

/// Dense `(ℒ, 𝒟, 𝒰)` of the exact block factorization.
pub fn ldu_factors(
    op: &SystemOperator,
    schur: &SchurComplements,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let l = op.layout;
    let (b, e, p) = (l.b().start, l.e().start, l.p().start);
    let h = op.tau / 2.0;
    let mut lo = identity_blocks(l);
    let kt = op.k.transpose();
    let gt = op.g.transpose();
    put(&mut lo, &kt, e, b, -h);
    put(&mut lo, &gt, p, e, -h);
    let mut up = identity_blocks(l);
    put(&mut up, &op.k, b, e, h);
    put(&mut up, &op.g, e, p, h);
    let n = l.total();
    let mut d = DMatrix::zeros(n, n);
    put(&mut d, &op.mb, b, b, 2.0 / op.tau);
    put(&mut d, &schur.s_e, e, e, 1.0);
    put(&mut d, &schur.s_p, p, p, 1.0);
    (lo, d, up)
}

/// Largest entry of `|𝒜 − ℒ𝒟𝒰|`, together with `max|𝒜|` for relative scaling.
pub fn verify_ldu(forms: &AssembledForms, inc: &IncidenceMatrices, tau: f64) -> Result<(f64, f64)> {
    let op = build_system(tau, forms, inc, false)?;
    let schur = build_schur(forms, inc, tau)?;
    let (lo, d, up) = ldu_factors(&op, &schur);
    let a = op.to_dense();
    let err = (&a - lo * d * up).amax();
    Ok((err, a.amax()))
}

/// Block-diagonal matrix of the weighted norms `‖·‖_div`, `‖·‖_curl`, `‖·‖_grad`:
/// `diag((2/τ)Mb + DᵀM0D, S_E, S_p)`.
pub fn norm_matrix(forms: &AssembledForms, inc: &IncidenceMatrices, tau: f64) -> Result<DMatrix<f64>> {
    let aux = build_system(tau, forms, inc, true)?;
    let schur = build_schur(forms, inc, tau)?;
    let l = aux.layout;
    let mut n = DMatrix::zeros(l.total(), l.total());
    put(&mut n, &aux.a11, l.b().start, l.b().start, 1.0);
    put(&mut n, &schur.s_e, l.e().start, l.e().start, 1.0);
    put(&mut n, &schur.s_p, l.p().start, l.p().start, 1.0);
    Ok(n)
}

/// Smallest singular value of `N^{-1/2} 𝒜^aux N^{-1/2}`, i.e. the discrete
/// inf-sup constant of the auxiliary operator in the weighted norms.
pub fn inf_sup_constant(forms: &AssembledForms, inc: &IncidenceMatrices, tau: f64) -> Result<f64> {
    let a = build_system(tau, forms, inc, true)?.to_dense();
    let n = norm_matrix(forms, inc, tau)?;
    let eig = n.symmetric_eigen();
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    let w = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let s = (&w * a * &w).singular_values();
    Ok(s.min())
}

/// Dense `P𝒜`, built column by column.
pub fn preconditioned_dense<P: Preconditioner + ?Sized>(op: &SystemOperator, pre: &P) -> Result<DMatrix<f64>> {
    let n = op.dim();
    let mut out = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut y);
        pre.apply(&y, &mut z)?;
        out.set_column(j, &nalgebra::DVector::from_column_slice(&z));
        e[j] = 0.0;
    }
    Ok(out)
}

/// Eigenvalues of a general dense matrix via a bounded Schur iteration.
///
/// The QR sweep stalls on near-multiples of the identity (e.g. exactly
/// preconditioned operators), so the eigenvalues are computed for the
/// centred, normalized `(M − cI)/s` with `c = tr M / n` and mapped back. If
/// that still stalls, a few extra shifts are tried.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let c = m.trace() / n as f64;
    let dev = m - DMatrix::identity(n, n) * c;
    let s = dev.amax();
    if s == 0.0 {
        return Ok(vec![nalgebra::Complex::new(c, 0.0); n]);
    }
    for shift in [0.0, 0.37, -1.61, 2.9] {
        let shifted = &dev / s + DMatrix::identity(n, n) * shift;
        if let Some(schur) = shifted.try_schur(1e-14, 100_000) {
            return Ok(schur.complex_eigenvalues().iter().map(|z| (z - shift) * s + c).collect());
        }
    }
    Err(crate::Error::Solver { block: "eigen", msg: "Schur iteration did not converge".into() })
}
