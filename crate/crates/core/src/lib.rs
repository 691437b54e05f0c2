//! Structure-preserving finite-element solver for the time-dependent Maxwell
//! system with impedance (dissipative) boundary conditions.
//!
//! The discretization couples lowest-order Raviart–Thomas (B), Nédélec (E)
//! and Lagrange (p) spaces on tetrahedra with a Crank–Nicolson step. Each
//! step is a 3×3 block system solved by flexible GMRES with one of six block
//! preconditioners built on the exact sequence `K·G = 0`, `D·K = 0`.
//!
//! Module map:
//! - [`mesh`]: Kuhn-subdivided box / box-with-cavity meshes and their text format.
//! - [`complex`]: free-DOF maps, incidence matrices, canonical interpolation.
//! - [`assembly`]: weighted mass matrices and the impedance surface matrix.
//! - [`linalg`]: CSR matrices, block vectors, the system operator, dense helpers.
//! - [`krylov`]: FGMRES, preconditioned CG and inner GMRES.
//! - [`precond`]: Schur complements and the W/X block preconditioners.
//! - [`timestepper`]: initial data, right-hand sides and the time loop.
//! - [`bench`]: experiment grids and result tables.

// `!(x <= tol)` is deliberate: it treats NaN as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod bench;
pub mod complex;
pub mod error;
pub mod krylov;
pub mod linalg;
pub mod mesh;
pub mod precond;
pub mod quadrature;
pub mod timestepper;

pub use error::{Error, Result};
