//! Sparse matrices, block vectors and the Crank–Nicolson system operator.

pub mod block;
pub mod mtx;
pub mod sparse;
mod system;

pub use block::{axpy, dot, norm2, norm_inf, BlockLayout, BlockVector};
pub use mtx::{read_matrix_market, read_matrix_market_from, write_matrix_market, write_matrix_market_to};
pub use sparse::{CsrMatrix, IntMatrix, Scalar, SparseMatrix};
pub use system::{build_system, SystemOperator};

/// Anything that can act as `y = A x` on flat vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.rows(), self.cols());
        self.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_into(x, y)
    }
}
