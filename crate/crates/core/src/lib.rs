//! Hybrid hierarchical sparse autoencoder (HH-SAE).
//!
//! The model factorizes an input `x` into a stiff, low-rank linear context
//! reconstruction and a sparse innovation stream:
//!
//! ```text
//! z_dense   = W_enc0 x
//! x_hat_ctx = W_dec0 z_dense + b_dec0                      (L0, linear)
//! x_resid   = x - detach(x_hat_ctx)
//! z1        = TopK_k1(gate(x_resid) * magnitude(x_resid))   (L1, gated top-k atoms)
//! x_hat     = x_hat_ctx + W_dec1 z1 + b_dec1
//! z2        = TopK_k2(relu(W_enc2 detach(z1) + b_enc2))     (L2, compository motifs)
//! z1_hat    = W_dec2 z2 + b_dec2
//! ```
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; file formats, CSV ingestion and the command-line driver live in
//! the companion `hhsae` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod assignment;
pub mod data;
pub mod discovery;
mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod synthesis;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::Matrix;
