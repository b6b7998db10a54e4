use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::ModelConfig;

/// Knobs for co-adaptive sparse inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityParams {
    /// Per-token fraction of positive activations kept as core neurons.
    pub rho: f64,
    /// Fraction of FFN neurons kept in the sentence core set.
    pub beta: f64,
    /// Layer whose FFN activations drive token pruning.
    pub prune_layer: usize,
    /// Half-open token range `[start, end)` eligible for pruning; everything
    /// outside it, and the final prompt token, is protected.
    pub prunable_span: (usize, usize),
    pub enable_token_pruning: bool,
    pub enable_neuron_sparsity: bool,
    /// Keep dropped tokens in the KV caches of layers before the pruning
    /// layer. New tokens can still attend to them there; disabling evicts
    /// them everywhere.
    pub keep_pruned_in_early_kv: bool,
}

impl Default for SparsityParams {
    fn default() -> Self {
        SparsityParams {
            rho: 0.2,
            beta: 0.4,
            prune_layer: 2,
            prunable_span: (0, 0),
            enable_token_pruning: true,
            enable_neuron_sparsity: true,
            keep_pruned_in_early_kv: true,
        }
    }
}

impl SparsityParams {
    pub fn validate(&self, config: &ModelConfig, prompt_len: usize) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(CoreError::InvalidParam(format!(
                "rho must be in (0, 1], got {}",
                self.rho
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(CoreError::InvalidParam(format!(
                "beta must be in (0, 1], got {}",
                self.beta
            )));
        }
        if self.prune_layer >= config.n_layers {
            return Err(CoreError::InvalidParam(format!(
                "prune_layer {} out of range for {} layers",
                self.prune_layer, config.n_layers
            )));
        }
        if self.enable_token_pruning {
            let (s, e) = self.prunable_span;
            if s >= e {
                return Err(CoreError::InvalidParam(
                    "prunable span is empty; disable token pruning or widen it".into(),
                ));
            }
            if e > prompt_len {
                return Err(CoreError::InvalidParam(format!(
                    "prunable span {s}..{e} exceeds prompt length {prompt_len}"
                )));
            }
        }
        Ok(())
    }
}
