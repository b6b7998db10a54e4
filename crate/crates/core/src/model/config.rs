use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::ActivationKind;

/// Architecture of the toy decoder: pre-norm residual blocks with multi-head
/// attention and a two-matrix FFN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub activation_kind: ActivationKind,
    pub max_seq_len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0
            || self.d_model == 0
            || self.d_ffn == 0
            || self.n_heads == 0
            || self.vocab_size == 0
            || self.max_seq_len == 0
        {
            return Err(CoreError::InvalidParam(
                "all model dimensions must be >= 1".into(),
            ));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(CoreError::InvalidParam(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_ffn < self.d_model {
            return Err(CoreError::InvalidParam(format!(
                "d_ffn {} must be >= d_model {}",
                self.d_ffn, self.d_model
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Small default used throughout the tests: 4 layers, d=32, ffn=128.
    pub fn toy() -> Self {
        ModelConfig {
            n_layers: 4,
            d_model: 32,
            d_ffn: 128,
            n_heads: 4,
            vocab_size: 256,
            activation_kind: ActivationKind::Relu,
            max_seq_len: 128,
        }
    }
}
