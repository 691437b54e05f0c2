//! Block preconditioners for the Crank–Nicolson system and the exact block
//! LDU factorization behind them.
//!
//! With `𝒜 = ℒ𝒟𝒰`, `𝒟 = diag((2/τ)Mb, S_E, S_p)` and
//!
//! ```text
//! ℒ⁻¹ = [ I          0        0 ]     𝒰⁻¹ = [ I  −(τ/2)K     0     ]
//!       [ (τ/2)Kᵀ    I        0 ]           [ 0     I     −(τ/2)G  ]
//!       [ 0        (τ/2)Gᵀ    I ]           [ 0     0        I     ]
//! ```
//!
//! both inverses are exact because `K G = 0`.

mod dense;

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

pub use dense::{dense_eigenvalues, inf_sup_constant, ldu_factors, norm_matrix, preconditioned_dense, verify_ldu};

use crate::assembly::AssembledForms;
use crate::complex::IncidenceMatrices;
use crate::krylov::{pcg, Preconditioner, Smoother, SmootherOp, SolverConfig};
use crate::linalg::{SparseMatrix, SystemOperator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrecondKind {
    WD,
    WL,
    WU,
    XLD,
    XDU,
    XLDU,
}

impl PrecondKind {
    pub const ALL: [PrecondKind; 6] =
        [PrecondKind::WD, PrecondKind::WL, PrecondKind::WU, PrecondKind::XLD, PrecondKind::XDU, PrecondKind::XLDU];

    pub fn name(self) -> &'static str {
        match self {
            PrecondKind::WD => "WD",
            PrecondKind::WL => "WL",
            PrecondKind::WU => "WU",
            PrecondKind::XLD => "XLD",
            PrecondKind::XDU => "XDU",
            PrecondKind::XLDU => "XLDU",
        }
    }

    pub fn is_triangular(self) -> bool {
        matches!(self, PrecondKind::WL | PrecondKind::WU | PrecondKind::XLD | PrecondKind::XDU)
    }
}

impl fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrecondKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '_').collect::<String>().to_ascii_uppercase();
        PrecondKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preconditioner `{s}`")))
    }
}

/// `S_E = (τ/2)KᵀMbK + (2/τ)Me + Z` and `S_p = (τ/2)GᵀMeG + (2/τ)Mp`.
#[derive(Debug, Clone)]
pub struct SchurComplements {
    pub s_e: SparseMatrix,
    pub s_p: SparseMatrix,
}

pub fn build_schur(forms: &AssembledForms, inc: &IncidenceMatrices, tau: f64) -> Result<SchurComplements> {
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!("time step {tau} must be positive")));
    }
    let (k, g) = (inc.k_f64(), inc.g_f64());
    let ktmbk = k.transpose().spgemm(&forms.mb.spgemm(&k)?)?;
    let gtmeg = g.transpose().spgemm(&forms.me.spgemm(&g)?)?;
    let s_e = ktmbk.add_scaled(tau / 2.0, &forms.me, 2.0 / tau)?.add_scaled(1.0, &forms.z, 1.0)?;
    let s_p = gtmeg.add_scaled(tau / 2.0, &forms.mp, 2.0 / tau)?;
    Ok(SchurComplements { s_e, s_p })
}

/// Tolerances of the three diagonal-block solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecondConfig {
    pub kind: PrecondKind,
    /// Relative tolerance of the (2/τ)Mb solve; must be tight to keep B solenoidal.
    pub qb_tol: f64,
    pub inner_tol: f64,
    pub inner_maxit: usize,
    pub smoother: Smoother,
}

impl PrecondConfig {
    pub fn new(kind: PrecondKind, solver: &SolverConfig) -> Self {
        Self {
            kind,
            qb_tol: 1e-12,
            inner_tol: solver.inner_tol,
            inner_maxit: solver.inner_maxit,
            smoother: solver.smoother,
        }
    }

    /// All three blocks solved to `tol`.
    pub fn exact(kind: PrecondKind, tol: f64) -> Self {
        Self { kind, qb_tol: tol, inner_tol: tol, inner_maxit: 10_000, smoother: Smoother::SymmetricGaussSeidel }
    }
}

/// One of the six block preconditioners bound to a system and its Schur complements.
pub struct BlockPreconditioner<'a> {
    cfg: PrecondConfig,
    op: &'a SystemOperator,
    schur: &'a SchurComplements,
    m_b: SmootherOp<'a>,
    m_e: SmootherOp<'a>,
    m_p: SmootherOp<'a>,
    inner_iterations: Cell<[usize; 3]>,
}

impl<'a> BlockPreconditioner<'a> {
    pub fn new(op: &'a SystemOperator, schur: &'a SchurComplements, cfg: PrecondConfig) -> Result<Self> {
        let l = op.layout;
        if schur.s_e.rows() != l.ne || schur.s_p.rows() != l.np {
            return Err(Error::Shape("Schur complements do not match the system layout".into()));
        }
        Ok(Self {
            cfg,
            op,
            schur,
            m_b: SmootherOp::new(&op.a11, Smoother::Jacobi)?,
            m_e: SmootherOp::new(&schur.s_e, cfg.smoother)?,
            m_p: SmootherOp::new(&schur.s_p, cfg.smoother)?,
            inner_iterations: Cell::new([0; 3]),
        })
    }

    pub fn kind(&self) -> PrecondKind {
        self.cfg.kind
    }

    /// Accumulated inner iterations of the (B, E, p) block solves.
    pub fn inner_iterations(&self) -> [usize; 3] {
        self.inner_iterations.get()
    }

    fn solve(&self, block: usize, r: &[f64]) -> Result<Vec<f64>> {
        let (a, m, tol, name) = match block {
            0 => (&self.op.a11, &self.m_b, self.cfg.qb_tol, "Q_B"),
            1 => (&self.schur.s_e, &self.m_e, self.cfg.inner_tol, "Q_E"),
            _ => (&self.schur.s_p, &self.m_p, self.cfg.inner_tol, "Q_p"),
        };
        let maxit = if block == 0 { self.cfg.inner_maxit.max(1000) } else { self.cfg.inner_maxit };
        let (x, s) = pcg(a, m, r, tol, maxit).map_err(|e| Error::Solver { block: name, msg: e.to_string() })?;
        if !s.converged {
            return Err(Error::Solver {
                block: name,
                msg: format!("no convergence in {maxit} iterations (residual {:.3e})", s.rel_residual),
            });
        }
        let mut it = self.inner_iterations.get();
        it[block] += s.iterations;
        self.inner_iterations.set(it);
        Ok(x)
    }

    /// `Q_B`: exact-to-tolerance inverse of the (1,1) block.
    pub fn apply_qb(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.solve(0, r)
    }

    pub fn apply_qe(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.solve(1, r)
    }

    pub fn apply_qp(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.solve(2, r)
    }

    fn apply_w_d(&self, v: (&[f64], &[f64], &[f64])) -> Result<[Vec<f64>; 3]> {
        Ok([self.apply_qb(v.0)?, self.apply_qe(v.1)?, self.apply_qp(v.2)?])
    }

    fn apply_w_l(&self, v: (&[f64], &[f64], &[f64])) -> Result<[Vec<f64>; 3]> {
        let zb = self.apply_qb(v.0)?;
        let mut re = v.1.to_vec();
        self.op.kt_mb.mul_add_into(1.0, &zb, &mut re);
        let ze = self.apply_qe(&re)?;
        let mut rp = v.2.to_vec();
        self.op.gt_me.mul_add_into(1.0, &ze, &mut rp);
        let zp = self.apply_qp(&rp)?;
        Ok([zb, ze, zp])
    }

    fn apply_w_u(&self, v: (&[f64], &[f64], &[f64])) -> Result<[Vec<f64>; 3]> {
        let zp = self.apply_qp(v.2)?;
        let mut re = v.1.to_vec();
        self.op.me_g.mul_add_into(-1.0, &zp, &mut re);
        let ze = self.apply_qe(&re)?;
        // Q_B (v_B − Mb K z_E) with Q_B·Mb K = (τ/2)K applied exactly
        let mut zb = self.apply_qb(v.0)?;
        self.op.k.mul_add_into(-self.op.tau / 2.0, &ze, &mut zb);
        Ok([zb, ze, zp])
    }

    /// `ℒ⁻¹ v`
    pub fn apply_l_inv(&self, v: (&[f64], &[f64], &[f64])) -> [Vec<f64>; 3] {
        let h = self.op.tau / 2.0;
        let mut we = v.1.to_vec();
        self.op.k.transpose_mul_add(h, v.0, &mut we);
        let mut wp = v.2.to_vec();
        self.op.g.transpose_mul_add(h, v.1, &mut wp);
        [v.0.to_vec(), we, wp]
    }

    /// `𝒰⁻¹ v`
    pub fn apply_u_inv(&self, v: [Vec<f64>; 3]) -> [Vec<f64>; 3] {
        let h = self.op.tau / 2.0;
        let [mut zb, mut ze, zp] = v;
        self.op.k.mul_add_into(-h, &ze, &mut zb);
        self.op.g.mul_add_into(-h, &zp, &mut ze);
        [zb, ze, zp]
    }

    fn apply_blocks(&self, v: (&[f64], &[f64], &[f64])) -> Result<[Vec<f64>; 3]> {
        match self.cfg.kind {
            PrecondKind::WD => self.apply_w_d(v),
            PrecondKind::WL => self.apply_w_l(v),
            PrecondKind::WU => self.apply_w_u(v),
            PrecondKind::XLD => {
                let w = self.apply_l_inv(v);
                self.apply_w_d((&w[0], &w[1], &w[2]))
            }
            PrecondKind::XDU => Ok(self.apply_u_inv(self.apply_w_d(v)?)),
            PrecondKind::XLDU => {
                let w = self.apply_l_inv(v);
                Ok(self.apply_u_inv(self.apply_w_d((&w[0], &w[1], &w[2]))?))
            }
        }
    }
}

impl Preconditioner for BlockPreconditioner<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        let l = self.op.layout;
        l.check(r)?;
        let out = self.apply_blocks(l.split(r))?;
        z[l.b()].copy_from_slice(&out[0]);
        z[l.e()].copy_from_slice(&out[1]);
        z[l.p()].copy_from_slice(&out[2]);
        Ok(())
    }
}
