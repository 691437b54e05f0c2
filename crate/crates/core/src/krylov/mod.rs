//! Flexible GMRES for the block system and CG/GMRES for inner block solves.

mod cg;
mod fgmres;

use std::time::Duration;

pub use cg::{gmres_inner, pcg, PcgStats, SmootherOp};
pub use fgmres::{fgmres, fgmres_monitored, fgmres_tracking_divergence};

use crate::{Error, Result};

/// Preconditioner for the inner SPD solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoother {
    None,
    Jacobi,
    SymmetricGaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub outer_tol: f64,
    pub outer_maxit: usize,
    pub restart: usize,
    pub inner_tol: f64,
    pub inner_maxit: usize,
    pub smoother: Smoother,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-8,
            outer_maxit: 500,
            restart: 100,
            inner_tol: 1e-2,
            inner_maxit: 1000,
            smoother: Smoother::Jacobi,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |t: f64| t > 0.0 && t < 1.0;
        if !in_unit(self.outer_tol) || !in_unit(self.inner_tol) {
            return Err(Error::InvalidConfig(format!(
                "tolerances must lie in (0,1): outer {}, inner {}",
                self.outer_tol, self.inner_tol
            )));
        }
        if self.restart == 0 || self.outer_maxit == 0 || self.inner_maxit == 0 {
            return Err(Error::InvalidConfig("restart and iteration limits must be at least 1".into()));
        }
        Ok(())
    }
}

/// Anything applied as `z = M⁻¹ r`; may vary between calls (inner solves).
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()>;
}

/// `M = I`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        z.copy_from_slice(r);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// Arnoldi produced a zero vector before the tolerance was met.
    Breakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
    /// Relative residual estimates; `history[0] = 1`, length `iterations + 1`.
    pub history: Vec<f64>,
    /// `‖D·B^l‖∞` for every iterate, including the initial guess.
    pub div_history: Vec<f64>,
    /// `‖B^l‖∞` alongside `div_history`.
    pub b_norm_history: Vec<f64>,
    pub wall_time: Duration,
    pub status: SolveStatus,
}

impl SolveStats {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Largest `‖D·B^l‖∞ / max(1, ‖B^l‖∞)` over the recorded iterates.
    pub fn max_relative_divergence(&self) -> f64 {
        self.div_history
            .iter()
            .zip(&self.b_norm_history)
            .map(|(d, b)| d / b.max(1.0))
            .fold(0.0, f64::max)
    }
}
