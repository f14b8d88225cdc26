//! Dense matrices, factorizations and seeded randomness.

pub mod io;
pub mod linalg;
pub mod matrix;
pub mod rng;

pub use linalg::{qr_orthonormal, spectral_norm, svd, SvdFactors};
pub use matrix::{is_deterministic, set_deterministic, Matrix};
pub use rng::{gaussian_matrix, stream_key, RngStream};
