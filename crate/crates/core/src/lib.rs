//! Invertible normalization of teacher features for multi-teacher distillation.
//!
//! The crate fits the statistics of a teacher's feature distribution, builds one of
//! six invertible normalizers from them (global and per-channel standardization, PCA,
//! ZCA and Hadamard whitening, and PHI-S), and provides the tooling around them:
//! Hadamard matrix construction, error-geometry diagnostics, a small distillation
//! harness, and folding a normalizer's inverse into a final linear layer.

pub mod analysis;
pub mod distill;
pub mod error;
pub mod format;
pub mod fuse;
pub mod hadamard;
pub mod linalg;
pub mod moments;
pub mod normalize;

pub use error::{Error, Result};
