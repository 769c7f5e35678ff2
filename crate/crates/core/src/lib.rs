//! Proxy-based deep metric learning over precomputed backbone token features.
//!
//! The crate trains a linear projection head together with one learnable proxy
//! vector per class. The objective is the proxy-anchor loss plus an optional
//! soft-orthogonality penalty `λ·‖PᵀP − I‖_F²` on the proxy matrix, which keeps
//! proxies of different classes from collapsing onto the same direction.
//!
//! Modules roughly follow the data path:
//!
//! - [`linalg`]: dense vector/matrix primitives (norms, cosine, Gram matrices).
//! - [`data`]: in-memory token feature sets (CLS/DIST token states per sample).
//! - [`head`]: token pooling, the linear projection head, proxy initialization.
//! - [`loss`]: proxy-anchor loss, soft-orthogonality penalty, and the combined
//!   objective, each with exact analytic gradients.
//! - [`optim`]: AdamW with decoupled weight decay, per-group learning rates,
//!   step decay, and a warm-up ramp.
//! - [`sampler`] and [`trainer`]: deterministic mini-batch training loop.
//! - [`eval`]: exact cosine nearest-neighbor retrieval, P@1 and MAP@R.
//! - [`gradcheck`]: central finite-difference validation of the analytic
//!   gradients.
//!
//! All numerics are `f64`. Every operation is deterministic given its seed;
//! repeated runs produce bit-identical parameters and logs.
//!
//! The crate is `no_std`-compatible (with `alloc`): disable default features
//! and enable `libm` to build without the standard library. File formats and
//! the command-line interface live in the companion `pirt-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// Index-driven loops mirror the row/column structure of the math throughout.
#![allow(clippy::needless_range_loop)]

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("pirt-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod head;
pub mod linalg;
pub mod loss;
mod math;
pub mod optim;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Matrix;
