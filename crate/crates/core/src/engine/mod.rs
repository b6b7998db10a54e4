//! The sparse inference pipeline: pre-filling with core-neuron capture and
//! one-shot token pruning, neuron-sparse decoding over the pruned caches,
//! and cost accounting.

mod cost;
mod decode;
mod kv;
mod params;
mod prefill;

pub use cost::{flops_model, memory_model, CostReport, FlopsConfig, MemoryReport};
pub use decode::{
    argmax_token, decode_step, ffn_token_masked, generate, token_count_stats, GenerationOutput,
    PrefillSummary, TokenCountStats,
};
pub use kv::LayerKv;
pub use params::SparsityParams;
pub use prefill::{lm_head, prefill, PrefillState};

#[cfg(test)]
mod tests;
