//! N-representable one-body density matrices.
//!
//! The crate builds idempotent, trace-normalized density matrices
//! (projectors) with the constrained Clinton purification iteration and uses
//! them in four workflows:
//!
//! * fitting a projector to X-ray structure factors computed from an s-type
//!   Gaussian basis ([`scattering`]),
//! * assembling a whole-molecule density matrix from fragment (kernel)
//!   density matrices and purifying it ([`kem`]),
//! * decomposing a whole-system projector back into kernel subspace matrices
//!   ([`subspace`]),
//! * the idealized fragment-method cost model ([`cost`]).

pub mod cli;
pub mod cost;
pub mod error;
pub mod io;
pub mod kem;
pub mod matrix;
pub mod purification;
pub mod scattering;
pub mod subspace;

pub use error::{Error, Result};
pub use matrix::{
    fractional_power, idempotency_residual, sym_eigendecompose, trace_product, DenseSymMatrix,
    EigenDecomposition,
};
pub use purification::{
    clinton_iterate, mcweeny_step, occupation_spectrum, solve_multipliers, ObservableConstraint,
    Projector, PurificationOptions,
};
