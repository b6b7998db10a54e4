use crate::numerics::Matrix;

/// Everything recorded for one layer during pre-filling. The token axis of a
/// layer's tensors matches the number of tokens that actually traversed it,
/// so it shrinks at the pruning layer.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Original prompt position of each row in this layer's tensors.
    pub original_positions: Vec<usize>,
    /// Residual stream entering the attention block (pre-norm), one row per
    /// token. This is the hidden state the importance criteria reason about.
    pub attn_inputs: Matrix,
    /// Per-head attention matrices; row t holds the distribution token t
    /// pays over positions <= t.
    pub attn_scores: Vec<Matrix>,
    /// Value vectors (normalized input times W_v), one row per token.
    pub values: Matrix,
    /// Attention context per token (head-wise weighted value sums,
    /// concatenated, before the output projection).
    pub attn_outputs: Matrix,
    /// FFN input after the second layer norm.
    pub ffn_inputs: Matrix,
    /// Post-activation FFN intermediates, one row per token, d_ffn wide.
    pub ffn_activations: Matrix,
    /// FFN output before the residual add.
    pub ffn_outputs: Matrix,
}

impl LayerTrace {
    pub fn token_count(&self) -> usize {
        self.original_positions.len()
    }

    /// Head-averaged attention row for one query token.
    pub fn mean_attention_row(&self, token: usize) -> Vec<f64> {
        let t = self.token_count();
        let h = self.attn_scores.len() as f64;
        let mut out = vec![0.0; t];
        for head in &self.attn_scores {
            for (o, &a) in out.iter_mut().zip(head.row(token)) {
                *o += a / h;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct ActivationTrace {
    pub layers: Vec<LayerTrace>,
}

impl ActivationTrace {
    pub fn layer(&self, idx: usize) -> Option<&LayerTrace> {
        self.layers.get(idx)
    }
}
