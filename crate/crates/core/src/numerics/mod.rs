//! Complex dense linear algebra used by every solver in the crate.

mod eig;
mod matrix;
pub mod solve;

pub use eig::{herm_eig, shifted_pinv_apply, shifted_pinv_gains, HermitianEig};
pub use matrix::ComplexMatrix;
pub use solve::{cholesky, inverse, logdet_hpd, solve_hpd};
