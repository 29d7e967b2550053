//! Alternating least squares matrix factorization with mixed dimension
//! embeddings.
//!
//! Three trainers share one closed-form machinery: a fixed-dimension
//! baseline, a zero-padded variant that stores only the live prefix of each
//! embedding, and a projected variant that maps short embeddings into the
//! common space through trainable per-dimension projection matrices. The
//! crate also ships the dataset preprocessing pipeline, popularity-based
//! dimension assignment, ranking metrics, and an experiment harness that
//! sweeps model sizes and emits CSV summaries.
//!
//! The linear-algebra kernels in [`linalg`] are generic over the scalar type
//! (see [`scalar::Scalar`]); the training pipeline itself is pinned to `f64`
//! through the [`Real`] alias — Gram matrices accumulated over millions of
//! ratings need the headroom.

pub mod data;
pub mod eval;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod solvers;

mod error;

pub use error::{Error, Result};

/// Scalar type used by the training pipeline.
pub type Real = f64;

/// Dense vector over [`Real`].
pub type Vector = linalg::DenseVector<Real>;

/// Dense row-major matrix over [`Real`].
pub type Matrix = linalg::DenseMatrix<Real>;

/// Normal equations accumulator over [`Real`].
pub type Normals = linalg::NormalEquations<Real>;
