//! Closed-form FLOPs and memory accounting for dense vs. sparse inference.
//!
//! Counting convention (one multiply-accumulate = 2 FLOPs), per layer and
//! per token:
//!
//! - attention projections (q, k, v, o):      8 * d^2
//! - attention scores + weighted values:      4 * n * d   (n = attended tokens)
//! - FFN:                                     4 * d * m   (6 * d * m gated)
//! - LM head, once per emitted token:         2 * d * V
//!
//! Prefill attends with n = full prompt before the pruning layer and
//! n = kept tokens after; its FFNs stay dense (activations are captured
//! there). Decode attends over the cache and scales the FFN term by the
//! resident neuron fraction beta. Per-token decode cost is quoted at the
//! prefill cache length (generation growth is passed in explicitly).

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::ModelConfig;

pub const COST_SCHEMA_VERSION: u32 = 1;
const CONVENTION: &str =
    "mac=2flops; attn-proj 8d^2; scores+values 4nd; ffn 4dm (6dm gated); lm-head 2dV";

/// Architecture numbers the cost model needs; decoupled from `ModelConfig`
/// so published model presets (which use gated FFNs) can be costed without
/// instantiating weights.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlopsConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub gated_ffn: bool,
    /// Prompt tokens eligible for pruning under this preset (image tokens).
    pub image_tokens: usize,
}

impl FlopsConfig {
    pub fn llava7b() -> Self {
        FlopsConfig {
            n_layers: 32,
            d_model: 4096,
            d_ffn: 11008,
            n_heads: 32,
            vocab_size: 32000,
            gated_ffn: true,
            image_tokens: 611,
        }
    }

    pub fn llava13b() -> Self {
        FlopsConfig {
            n_layers: 40,
            d_model: 5120,
            d_ffn: 13824,
            n_heads: 40,
            vocab_size: 32000,
            gated_ffn: true,
            image_tokens: 611,
        }
    }

    pub fn from_model(cfg: &ModelConfig) -> Self {
        FlopsConfig {
            n_layers: cfg.n_layers,
            d_model: cfg.d_model,
            d_ffn: cfg.d_ffn,
            n_heads: cfg.n_heads,
            vocab_size: cfg.vocab_size,
            gated_ffn: false,
            image_tokens: 0,
        }
    }

    fn ffn_flops(&self) -> f64 {
        let factor = if self.gated_ffn { 6.0 } else { 4.0 };
        factor * self.d_model as f64 * self.d_ffn as f64
    }

    fn per_token_layer_flops(&self, attended: f64, ffn_fraction: f64) -> f64 {
        let d = self.d_model as f64;
        8.0 * d * d + 4.0 * attended * d + self.ffn_flops() * ffn_fraction
    }

    fn lm_head_flops(&self) -> f64 {
        2.0 * self.d_model as f64 * self.vocab_size as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub schema_version: u32,
    pub convention: String,
    pub n_prompt: usize,
    pub n_kept: usize,
    pub prune_layer: usize,
    pub beta: f64,
    pub n_generated: usize,
    pub prefill_flops_dense: f64,
    pub prefill_flops_sparse: f64,
    pub decode_flops_per_token_dense: f64,
    pub decode_flops_per_token_sparse: f64,
    /// Cached (layer, token) K/V slots after prefill plus generation.
    pub kv_cache_entries_dense: u64,
    pub kv_cache_entries_sparse: u64,
    pub ffn_weight_fraction_resident: f64,
    /// Tokens alive at each layer during sparse prefill.
    pub token_counts_per_layer: Vec<usize>,
}

impl CostReport {
    pub fn prefill_ratio(&self) -> f64 {
        self.prefill_flops_sparse / self.prefill_flops_dense
    }

    pub fn decode_ratio(&self) -> f64 {
        self.decode_flops_per_token_sparse / self.decode_flops_per_token_dense
    }

    pub fn kv_ratio(&self) -> f64 {
        self.kv_cache_entries_sparse as f64 / self.kv_cache_entries_dense as f64
    }
}

pub fn flops_model(
    cfg: &FlopsConfig,
    n_prompt: usize,
    n_kept: usize,
    prune_layer: usize,
    beta: f64,
    n_generated: usize,
) -> Result<CostReport> {
    if n_prompt == 0 || cfg.n_layers == 0 || cfg.d_model == 0 {
        return Err(CoreError::InvalidParam("counts must be positive".into()));
    }
    if n_kept > n_prompt {
        return Err(CoreError::InvalidParam(format!(
            "n_kept {n_kept} exceeds n_prompt {n_prompt}"
        )));
    }
    if n_kept == 0 {
        return Err(CoreError::InvalidParam("n_kept must be positive".into()));
    }
    if prune_layer >= cfg.n_layers {
        return Err(CoreError::InvalidParam(format!(
            "prune_layer {prune_layer} out of range for {} layers",
            cfg.n_layers
        )));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(CoreError::InvalidParam(format!(
            "beta must be in (0, 1], got {beta}"
        )));
    }

    let mut prefill_dense = 0.0;
    let mut prefill_sparse = 0.0;
    let mut decode_dense = 0.0;
    let mut decode_sparse = 0.0;
    let mut kv_dense: u64 = 0;
    let mut kv_sparse: u64 = 0;
    let mut token_counts = Vec::with_capacity(cfg.n_layers);
    for layer in 0..cfg.n_layers {
        let alive = if layer < prune_layer { n_prompt } else { n_kept };
        token_counts.push(alive);
        prefill_dense += n_prompt as f64 * cfg.per_token_layer_flops(n_prompt as f64, 1.0);
        prefill_sparse += alive as f64 * cfg.per_token_layer_flops(alive as f64, 1.0);
        let cache_dense = (n_prompt + n_generated) as f64;
        let cache_sparse = (alive + n_generated) as f64;
        decode_dense += cfg.per_token_layer_flops(cache_dense, 1.0);
        decode_sparse += cfg.per_token_layer_flops(cache_sparse, beta);
        kv_dense += (n_prompt + n_generated) as u64;
        kv_sparse += (alive + n_generated) as u64;
    }
    decode_dense += cfg.lm_head_flops();
    decode_sparse += cfg.lm_head_flops();

    Ok(CostReport {
        schema_version: COST_SCHEMA_VERSION,
        convention: CONVENTION.to_string(),
        n_prompt,
        n_kept,
        prune_layer,
        beta,
        n_generated,
        prefill_flops_dense: prefill_dense,
        prefill_flops_sparse: prefill_sparse,
        decode_flops_per_token_dense: decode_dense,
        decode_flops_per_token_sparse: decode_sparse,
        kv_cache_entries_dense: kv_dense,
        kv_cache_entries_sparse: kv_sparse,
        ffn_weight_fraction_resident: beta,
        token_counts_per_layer: token_counts,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryReport {
    pub schema_version: u32,
    pub kv_bytes_dense: u64,
    pub kv_bytes_sparse: u64,
    pub ffn_weight_bytes_dense: u64,
    pub ffn_weight_bytes_sparse: u64,
}

impl MemoryReport {
    pub fn kv_ratio(&self) -> f64 {
        self.kv_bytes_sparse as f64 / self.kv_bytes_dense as f64
    }

    pub fn ffn_ratio(&self) -> f64 {
        self.ffn_weight_bytes_sparse as f64 / self.ffn_weight_bytes_dense as f64
    }
}

/// KV bytes are `2 * L * n * d * bytes`; resident FFN weight bytes are the
/// beta fraction of the up/down projection storage.
pub fn memory_model(
    cfg: &FlopsConfig,
    n_cached_dense: usize,
    n_cached_sparse: usize,
    beta: f64,
    bytes_per_value: usize,
) -> Result<MemoryReport> {
    if n_cached_dense == 0 || bytes_per_value == 0 {
        return Err(CoreError::InvalidParam("counts must be positive".into()));
    }
    if n_cached_sparse > n_cached_dense {
        return Err(CoreError::InvalidParam(
            "sparse cache larger than dense".into(),
        ));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(CoreError::InvalidParam(format!(
            "beta must be in (0, 1], got {beta}"
        )));
    }
    let kv = |n: usize| (2 * cfg.n_layers * n * cfg.d_model * bytes_per_value) as u64;
    let ffn_total = (2 * cfg.n_layers * cfg.d_model * cfg.d_ffn * bytes_per_value) as u64;
    Ok(MemoryReport {
        schema_version: COST_SCHEMA_VERSION,
        kv_bytes_dense: kv(n_cached_dense),
        kv_bytes_sparse: kv(n_cached_sparse),
        ffn_weight_bytes_dense: ffn_total,
        ffn_weight_bytes_sparse: (ffn_total as f64 * beta).round() as u64,
    })
}
