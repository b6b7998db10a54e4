//! Dense reference forward pass with full activation tracing.
//!
//! This path recomputes everything from scratch for a whole sequence and is
//! the oracle the cached engine is checked against. Layer math:
//!
//! pre-norm attention   h <- h + W_o * concat_heads(softmax(q k^T / sqrt(dh)) v)
//! pre-norm FFN         h <- h + sigma(ln(h) W_u) W_d
//!
//! followed by a final layer norm and a tied-embedding LM head.

use crate::error::{CoreError, Result};
use crate::model::{ActivationTrace, LayerTrace, LayerWeights, Weights};
use crate::numerics::{
    activation, dot, layer_norm, matmul, matmul_nt, softmax, ActivationKind, Matrix,
};

/// Sinusoidal positional encoding row.
pub fn positional_encoding(pos: usize, d_model: usize) -> Vec<f64> {
    let mut pe = vec![0.0; d_model];
    for i in 0..d_model / 2 {
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
        let angle = pos as f64 * freq;
        pe[2 * i] = angle.sin();
        pe[2 * i + 1] = angle.cos();
    }
    if d_model % 2 == 1 {
        let i = d_model / 2;
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
        pe[d_model - 1] = (pos as f64 * freq).sin();
    }
    pe
}

/// Layer norm with affine parameters.
pub fn ln_affine(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    layer_norm(x)
        .iter()
        .zip(gain.iter().zip(bias))
        .map(|(v, (g, b))| v * g + b)
        .collect()
}

/// Embed a token sequence: embedding row plus positional encoding. Positions
/// may differ from 0..n when decoding continues a pruned prompt.
pub fn embed_tokens(weights: &Weights, token_ids: &[u32], positions: &[usize]) -> Result<Matrix> {
    let d = weights.config.d_model;
    let mut data = Vec::with_capacity(token_ids.len() * d);
    for (&id, &pos) in token_ids.iter().zip(positions) {
        if id as usize >= weights.config.vocab_size {
            return Err(CoreError::VocabError(id, weights.config.vocab_size));
        }
        let row = weights.embedding.row(id as usize);
        let pe = positional_encoding(pos, d);
        data.extend(row.iter().zip(&pe).map(|(e, p)| e + p));
    }
    Matrix::from_vec(token_ids.len(), d, data)
}

fn ln_rows(h: &Matrix, gain: &[f64], bias: &[f64]) -> Matrix {
    let rows: Vec<Vec<f64>> = h.iter_rows().map(|r| ln_affine(r, gain, bias)).collect();
    Matrix::from_rows(&rows).expect("uniform rows")
}

/// Query/key/value projections for a batch of normalized rows.
pub fn qkv(lw: &LayerWeights, normed: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
    Ok((
        matmul(normed, &lw.w_q)?,
        matmul(normed, &lw.w_k)?,
        matmul(normed, &lw.w_v)?,
    ))
}

/// Causal multi-head attention given projected q/k/v. Returns the per-head
/// score matrices and the concatenated context (pre `W_o`).
pub fn causal_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    n_heads: usize,
) -> (Vec<Matrix>, Matrix) {
    let t = q.rows();
    let d = q.cols();
    let dh = d / n_heads;
    let inv_sqrt = 1.0 / (dh as f64).sqrt();

    let mut heads = Vec::with_capacity(n_heads);
    let mut context = Matrix::zeros(t, d);
    for head in 0..n_heads {
        let lo = head * dh;
        let hi = lo + dh;
        let mut alpha = Matrix::zeros(t, t);
        for qt in 0..t {
            let qrow = &q.row(qt)[lo..hi];
            let logits: Vec<f64> = (0..=qt)
                .map(|i| dot(qrow, &k.row(i)[lo..hi]) * inv_sqrt)
                .collect();
            let probs = softmax(&logits);
            for (i, &p) in probs.iter().enumerate() {
                alpha.set(qt, i, p);
                let vrow = &v.row(i)[lo..hi];
                let crow = context.row_mut(qt);
                for (c, &vv) in crow[lo..hi].iter_mut().zip(vrow) {
                    *c += p * vv;
                }
            }
        }
        heads.push(alpha);
    }
    (heads, context)
}

/// Single-query attention over cached key/value rows (the query attends to
/// every cached row, which must all be at earlier or equal positions).
/// Returns the per-head attention rows and the concatenated context.
pub fn cached_attention_row(
    q_row: &[f64],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    n_heads: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = q_row.len();
    let dh = d / n_heads;
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    let mut context = vec![0.0; d];
    let mut head_rows = Vec::with_capacity(n_heads);
    for head in 0..n_heads {
        let lo = head * dh;
        let hi = lo + dh;
        let logits: Vec<f64> = keys
            .iter()
            .map(|k| dot(&q_row[lo..hi], &k[lo..hi]) * inv_sqrt)
            .collect();
        let probs = softmax(&logits);
        for (i, &p) in probs.iter().enumerate() {
            for (c, &vv) in context[lo..hi].iter_mut().zip(&values[i][lo..hi]) {
                *c += p * vv;
            }
        }
        head_rows.push(probs);
    }
    (head_rows, context)
}

/// Causal multi-head attention over a full sequence. Returns the per-head
/// score matrices, the value rows, the concatenated context (pre `W_o`) and
/// the projected attention output.
pub fn attention_block(
    lw: &LayerWeights,
    normed: &Matrix,
    n_heads: usize,
) -> Result<(Vec<Matrix>, Matrix, Matrix, Matrix)> {
    let (q, k, v) = qkv(lw, normed)?;
    let (heads, context) = causal_attention(&q, &k, &v, n_heads);
    let attn_out = matmul(&context, &lw.w_o)?;
    Ok((heads, v, context, attn_out))
}

/// FFN intermediates and output for a batch of normalized rows.
pub fn ffn_block(
    lw: &LayerWeights,
    normed: &Matrix,
    kind: ActivationKind,
) -> Result<(Matrix, Matrix)> {
    let pre = matmul(normed, &lw.w_u)?;
    let act_rows: Vec<Vec<f64>> = pre.iter_rows().map(|r| activation(r, kind)).collect();
    let a = Matrix::from_rows(&act_rows)?;
    let y = matmul(&a, &lw.w_d)?;
    Ok((a, y))
}

/// Full forward over a token sequence, recording every traced tensor.
/// Logits row `t` depends only on tokens at positions `<= t`.
pub fn forward_dense(weights: &Weights, token_ids: &[u32]) -> Result<(Matrix, ActivationTrace)> {
    let cfg = &weights.config;
    if token_ids.is_empty() {
        return Err(CoreError::EmptySet);
    }
    if token_ids.len() > cfg.max_seq_len {
        return Err(CoreError::SequenceOverflow(token_ids.len(), cfg.max_seq_len));
    }
    let positions: Vec<usize> = (0..token_ids.len()).collect();
    let mut h = embed_tokens(weights, token_ids, &positions)?;
    let mut trace = ActivationTrace::default();

    for lw in &weights.layers {
        let attn_inputs = h.clone();
        let normed = ln_rows(&h, &lw.ln_attn_gain, &lw.ln_attn_bias);
        let (attn_scores, values, context, attn_out) =
            attention_block(lw, &normed, cfg.n_heads)?;
        h = h.add(&attn_out)?;

        let ffn_in = ln_rows(&h, &lw.ln_ffn_gain, &lw.ln_ffn_bias);
        let (a, y) = ffn_block(lw, &ffn_in, cfg.activation_kind)?;
        h = h.add(&y)?;

        trace.layers.push(LayerTrace {
            original_positions: positions.clone(),
            attn_inputs,
            attn_scores,
            values,
            attn_outputs: context,
            ffn_inputs: ffn_in,
            ffn_activations: a,
            ffn_outputs: y,
        });
    }

    let final_normed = ln_rows(&h, &weights.final_ln_gain, &weights.final_ln_bias);
    let logits = matmul_nt(&final_normed, &weights.embedding)?;
    Ok((logits, trace))
}
