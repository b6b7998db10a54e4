//! Co-adaptive sparse inference for decoder-only transformers.
//!
//! The crate implements two coupled pruning mechanisms on a small synthetic
//! transformer and the analysis tooling needed to check why they work:
//!
//! - **Core neurons**: per input, the FFN neurons that fire most often across
//!   tokens. Decoding restricts every FFN to this subset.
//! - **Core tokens**: prompt tokens whose activated neurons overlap the core
//!   set above an adaptive knee threshold. Everything else is dropped from the
//!   KV cache after a configurable layer.
//!
//! Alongside the engine there is a validator suite that measures the
//! geometric claims the selection rests on (weight-matrix orthogonality,
//! activation-angle vs. co-activation correlation, projection-score vs.
//! intersection matching) and a FLOPs/memory cost model for dense vs. sparse
//! inference.
//!
//! Reference numerics run in f64. Data-parallel inner loops use rayon when
//! the `parallel` feature (default) is enabled; disabling it yields a fully
//! sequential build with identical results.

pub mod criteria;
pub mod engine;
pub mod error;
pub mod model;
pub mod numerics;
pub mod par;
pub mod sparsity;

pub use error::{CoreError, Result};
