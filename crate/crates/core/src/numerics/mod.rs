//! Deterministic numeric primitives shared by all modules.
//!
//! Everything here is a pure function over immutable inputs and safe to call
//! concurrently.

pub mod knee;
pub mod linalg;
pub mod stats;

pub use knee::{knee_threshold, Knee};
pub use linalg::{
    activation, cosine, dot, gram_deviation_from_scaled_identity, householder_q, layer_norm,
    matmul, matmul_nt, matmul_seq, norm, orthogonality_deviation, projection_magnitude, softmax,
    unit_normalize, vec_mat, ActivationKind, Matrix,
};
pub use stats::{
    average_ranks, binned_means, pearson, quantile_threshold, spearman, top_count, Bin,
};
