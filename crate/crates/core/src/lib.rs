//! Importance-sampled subspace selection for low-rank optimizers.
//!
//! The crate is organized bottom-up:
//!
//! - [`matcore`]: dense matrices, SVD/QR, seeded random streams.
//! - [`subspace`]: dominant, importance-sampled and random projectors.
//! - [`optimizers`]: GaLore/Fira/Adafactor/Adam-mini/8-bit/MSGD updates.
//! - [`objectives`]: gradient oracles (noisy quadratics, a small MLP).
//! - [`metrics`]: subspace overlap and update-spectrum diagnostics.
//! - [`theory`]: step-size schedule, horizon check, projection-bound verifier.

pub mod error;
pub mod matcore;
pub mod metrics;
pub mod objectives;
pub mod optimizers;
pub mod subspace;
pub mod theory;

pub use error::{Error, Result};
pub use matcore::{Matrix, RngStream};
