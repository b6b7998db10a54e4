//! Pre-filling: one pass over the prompt that populates the KV caches,
//! records a sentence core-neuron set per layer, and performs one-shot token
//! pruning at the configured layer.
//!
//! Layers before the pruning layer see every prompt token. At the pruning
//! layer the FFN activations of all tokens are captured, intersection counts
//! against that layer's core set pick the surviving tokens, and everything
//! else is dropped from the hidden state and from the caches of layers at or
//! beyond the pruning layer. Later layers, and their core sets, see only the
//! survivors, in original order.

use crate::error::{CoreError, Result};
use crate::model::{
    causal_attention, embed_tokens, ffn_block, ln_affine, qkv, ActivationTrace, LayerTrace,
    Weights,
};
use crate::numerics::{matmul, top_count, Matrix};
use crate::sparsity::{
    activated_set, intersection_counts, select_core_tokens, sentence_core_neurons,
    CoreTokenSelection, FrequencyTable, SentenceCoreSet,
};

use super::kv::LayerKv;
use super::params::SparsityParams;

/// Everything decoding needs after the prompt pass.
#[derive(Debug, Clone)]
pub struct PrefillState {
    pub params: SparsityParams,
    /// One core set per layer, each of size `ceil(beta * d_ffn)`.
    pub core_sets: Vec<SentenceCoreSet>,
    pub frequency_tables: Vec<FrequencyTable>,
    pub selection: Option<CoreTokenSelection>,
    pub kv: Vec<LayerKv>,
    pub n_prompt: usize,
    pub n_generated: usize,
    /// Original-sequence position for the next decoded token.
    pub next_position: usize,
    /// Set when the count distribution was degenerate and pruning was
    /// skipped.
    pub degenerate_pruning: bool,
    /// Per-layer neuron membership bitmaps derived from the core sets.
    pub neuron_masks: Vec<Vec<bool>>,
}

impl PrefillState {
    pub fn kept_tokens(&self) -> usize {
        self.kv
            .last()
            .map(|kv| kv.len() - self.n_generated)
            .unwrap_or(0)
    }
}

fn ln_rows(h: &Matrix, gain: &[f64], bias: &[f64]) -> Matrix {
    let rows: Vec<Vec<f64>> = h.iter_rows().map(|r| ln_affine(r, gain, bias)).collect();
    Matrix::from_rows(&rows).expect("uniform rows")
}

pub fn prefill(
    weights: &Weights,
    prompt: &[u32],
    params: &SparsityParams,
) -> Result<(PrefillState, Vec<f64>, ActivationTrace)> {
    prefill_with_hook(weights, prompt, params, None)
}

/// `post_prune_hook`, used by tests, runs after token selection with the
/// hidden-state matrix and the row indices about to be dropped; dropped rows
/// must have no influence on anything downstream.
pub(crate) fn prefill_with_hook(
    weights: &Weights,
    prompt: &[u32],
    params: &SparsityParams,
    post_prune_hook: Option<&dyn Fn(&mut Matrix, &[usize])>,
) -> Result<(PrefillState, Vec<f64>, ActivationTrace)> {
    let cfg = &weights.config;
    if prompt.is_empty() {
        return Err(CoreError::EmptySet);
    }
    if prompt.len() > cfg.max_seq_len {
        return Err(CoreError::SequenceOverflow(prompt.len(), cfg.max_seq_len));
    }
    params.validate(cfg, prompt.len())?;

    let mut positions: Vec<usize> = (0..prompt.len()).collect();
    let mut h = embed_tokens(weights, prompt, &positions)?;
    let mut trace = ActivationTrace::default();
    let mut kv: Vec<LayerKv> = vec![LayerKv::default(); cfg.n_layers];
    let mut core_sets = Vec::with_capacity(cfg.n_layers);
    let mut frequency_tables = Vec::with_capacity(cfg.n_layers);
    let mut selection: Option<CoreTokenSelection> = None;
    let mut degenerate = false;

    for (layer, lw) in weights.layers.iter().enumerate() {
        let positions_at_entry = positions.clone();
        let attn_inputs = h.clone();
        let normed = ln_rows(&h, &lw.ln_attn_gain, &lw.ln_attn_bias);
        let (q, k, v) = qkv(lw, &normed)?;
        let (attn_scores, context) = causal_attention(&q, &k, &v, cfg.n_heads);
        for (i, &pos) in positions.iter().enumerate() {
            kv[layer].push(k.row(i).to_vec(), v.row(i).to_vec(), pos);
        }
        let attn_out = matmul(&context, &lw.w_o)?;
        h = h.add(&attn_out)?;

        let ffn_in = ln_rows(&h, &lw.ln_ffn_gain, &lw.ln_ffn_bias);
        let (a, y) = ffn_block(lw, &ffn_in, cfg.activation_kind)?;
        h = h.add(&y)?;

        let (freq, core) = sentence_core_neurons(&a, params.rho, params.beta, layer)?;

        if layer == params.prune_layer && params.enable_token_pruning {
            let gammas: Vec<Vec<usize>> = a.iter_rows().map(activated_set).collect();
            let counts = intersection_counts(&gammas, &core);
            let (span_start, span_end) = params.prunable_span;
            let n = positions.len();
            let protected: Vec<usize> = (0..n)
                .filter(|&i| i < span_start || i >= span_end || i == n - 1)
                .collect();
            let sel = select_core_tokens(&counts, &protected, layer)?;
            degenerate = sel.degenerate;

            let kept = sel.kept.clone();
            if let Some(hook) = post_prune_hook {
                let dropped: Vec<usize> =
                    (0..n).filter(|i| kept.binary_search(i).is_err()).collect();
                hook(&mut h, &dropped);
            }
            if kept.len() < n {
                h = h.select_rows(&kept);
                positions = kept.iter().map(|&i| positions[i]).collect();
                // Caches at and beyond this layer hold survivors only;
                // earlier layers keep the full prompt unless configured
                // otherwise.
                kv[layer].retain_rows(&kept);
                if !params.keep_pruned_in_early_kv {
                    for early in kv.iter_mut().take(layer) {
                        early.retain_rows(&kept);
                    }
                }
            }
            selection = Some(sel);
        }

        trace.layers.push(LayerTrace {
            original_positions: positions_at_entry,
            attn_inputs,
            attn_scores,
            values: v,
            attn_outputs: context,
            ffn_inputs: ffn_in,
            ffn_activations: a,
            ffn_outputs: y,
        });
        core_sets.push(core);
        frequency_tables.push(freq);
    }

    let last = h.rows() - 1;
    let final_normed = ln_affine(h.row(last), &weights.final_ln_gain, &weights.final_ln_bias);
    let logits = lm_head(weights, &final_normed);

    let neuron_masks = core_sets.iter().map(|c| c.mask(cfg.d_ffn)).collect();
    let state = PrefillState {
        params: *params,
        core_sets,
        frequency_tables,
        selection,
        kv,
        n_prompt: prompt.len(),
        n_generated: 0,
        next_position: prompt.len(),
        degenerate_pruning: degenerate,
        neuron_masks,
    };
    debug_assert!(state
        .core_sets
        .iter()
        .all(|c| c.neuron_ids.len() == top_count(cfg.d_ffn, params.beta)));
    Ok((state, logits, trace))
}

/// Tied-embedding LM head for a single normalized hidden row. Same dot
/// ordering as the dense reference's `matmul_nt`, so logits agree bit for
/// bit.
pub fn lm_head(weights: &Weights, final_normed: &[f64]) -> Vec<f64> {
    weights
        .embedding
        .iter_rows()
        .map(|erow| crate::numerics::dot(final_normed, erow))
        .collect()
}
