use crate::error::Result;
use crate::model::ModelConfig;
use crate::numerics::Matrix;

/// Per-layer parameters. Matrices are stored row-major f64; the weight file
/// quantizes to f32 on save.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub w_q: Matrix, // d_model x d_model
    pub w_k: Matrix, // d_model x d_model
    pub w_v: Matrix, // d_model x d_model
    pub w_o: Matrix, // d_model x d_model
    pub w_u: Matrix, // d_model x d_ffn
    pub w_d: Matrix, // d_ffn x d_model
    pub ln_attn_gain: Vec<f64>,
    pub ln_attn_bias: Vec<f64>,
    pub ln_ffn_gain: Vec<f64>,
    pub ln_ffn_bias: Vec<f64>,
}

/// Full parameter set, immutable after construction and shareable across
/// threads. Carries its own config plus generation provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub config: ModelConfig,
    pub seed: u64,
    pub orthogonality_mix: f64,
    pub scale: f64,
    pub embedding: Matrix, // vocab_size x d_model, also used as the LM head
    pub layers: Vec<LayerWeights>,
    pub final_ln_gain: Vec<f64>,
    pub final_ln_bias: Vec<f64>,
}

impl Weights {
    /// Shape and finiteness check over every tensor.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let d = self.config.d_model;
        let m = self.config.d_ffn;
        let v = self.config.vocab_size;
        let check = |mat: &Matrix, rows: usize, cols: usize, what: &str| {
            if mat.rows() != rows || mat.cols() != cols {
                return Err(crate::error::CoreError::InvalidParam(format!(
                    "{what}: expected {rows}x{cols}, got {}x{}",
                    mat.rows(),
                    mat.cols()
                )));
            }
            if !mat.is_finite() {
                return Err(crate::error::CoreError::InvalidParam(format!(
                    "{what}: non-finite entries"
                )));
            }
            Ok(())
        };
        check(&self.embedding, v, d, "embedding")?;
        if self.layers.len() != self.config.n_layers {
            return Err(crate::error::CoreError::InvalidParam(format!(
                "expected {} layers, got {}",
                self.config.n_layers,
                self.layers.len()
            )));
        }
        for (i, lw) in self.layers.iter().enumerate() {
            check(&lw.w_q, d, d, &format!("layer {i} w_q"))?;
            check(&lw.w_k, d, d, &format!("layer {i} w_k"))?;
            check(&lw.w_v, d, d, &format!("layer {i} w_v"))?;
            check(&lw.w_o, d, d, &format!("layer {i} w_o"))?;
            check(&lw.w_u, d, m, &format!("layer {i} w_u"))?;
            check(&lw.w_d, m, d, &format!("layer {i} w_d"))?;
            for (vec, what) in [
                (&lw.ln_attn_gain, "ln_attn_gain"),
                (&lw.ln_attn_bias, "ln_attn_bias"),
                (&lw.ln_ffn_gain, "ln_ffn_gain"),
                (&lw.ln_ffn_bias, "ln_ffn_bias"),
            ] {
                if vec.len() != d || !vec.iter().all(|x| x.is_finite()) {
                    return Err(crate::error::CoreError::InvalidParam(format!(
                        "layer {i} {what}: bad length or non-finite"
                    )));
                }
            }
        }
        if self.final_ln_gain.len() != d || self.final_ln_bias.len() != d {
            return Err(crate::error::CoreError::InvalidParam(
                "final layer norm parameter length mismatch".into(),
            ));
        }
        Ok(())
    }
}
