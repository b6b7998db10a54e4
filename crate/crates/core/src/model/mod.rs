//! Toy decoder-only transformer: config, synthetic weights, dense forward
//! with tracing, and the weight file format.

mod config;
mod forward;
mod init;
mod io;
mod trace;
mod weights;

pub use config::ModelConfig;
pub use forward::{
    attention_block, cached_attention_row, causal_attention, embed_tokens, ffn_block,
    forward_dense, ln_affine, positional_encoding, qkv,
};
pub use init::init_synthetic;
pub use io::{load_weights, save_weights, FORMAT_VERSION};
pub use trace::{ActivationTrace, LayerTrace};
pub use weights::{LayerWeights, Weights};
