//! Transductive node classification by atomic decomposition.
//!
//! Pipeline: generate a planted-partition instance with subspace-aligned
//! features ([`datagen`]), fit per-node mixed models with an alternating
//! conditional-gradient solver ([`cado`]) or a spectral baseline
//! ([`baseline`]), then score predictions and recovery diagnostics
//! ([`recovery`], [`harness`]).

pub mod baseline;
pub mod cado;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod io;
pub mod numerics;
pub mod objective;
pub mod recovery;

pub use error::{Error, Result};
