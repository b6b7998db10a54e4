//! Autoregressive decoding over the pruned caches with neuron-sparse FFNs.
//!
//! Decoding is greedy and deterministic. Each step embeds the new token at
//! its original sequence position, attends over every cached row (full
//! prompt for layers before the pruning layer, survivors after), appends its
//! own K/V everywhere, and runs each FFN restricted to that layer's
//! prefill-time core neurons. Generated tokens are never pruned and core
//! sets are never refreshed.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{cached_attention_row, embed_tokens, ln_affine, LayerWeights, Weights};
use crate::numerics::{vec_mat, ActivationKind};
use crate::sparsity::CoreTokenSelection;

use super::cost::{flops_model, CostReport, FlopsConfig};
use super::params::SparsityParams;
use super::prefill::{lm_head, prefill, PrefillState};

/// Greedy argmax with ties toward the lowest token id.
pub fn argmax_token(logits: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best as u32
}

/// FFN for one token with non-core activations pinned to exactly zero.
/// With a full mask this performs the same operations in the same order as
/// the dense per-token FFN.
pub fn ffn_token_masked(
    lw: &LayerWeights,
    x: &[f64],
    kind: ActivationKind,
    mask: Option<&[bool]>,
) -> (Vec<f64>, Vec<f64>) {
    let d_ffn = lw.w_u.cols();
    let mut a = vec![0.0; d_ffn];
    for n in 0..d_ffn {
        if let Some(m) = mask {
            if !m[n] {
                continue;
            }
        }
        let mut acc = 0.0;
        for (k, &xv) in x.iter().enumerate() {
            acc += xv * lw.w_u.get(k, n);
        }
        a[n] = kind.apply_scalar(acc);
    }
    // vec_mat skips zero activations, so pruned rows of w_d are never read.
    let y = vec_mat(&a, &lw.w_d).expect("shape fixed");
    (a, y)
}

/// One decoding step: consume the previous logits, append the sampled token
/// to every cache, and return it with the logits for the following step.
pub fn decode_step(
    state: &mut PrefillState,
    weights: &Weights,
    params: &SparsityParams,
    last_logits: &[f64],
) -> Result<(u32, Vec<f64>)> {
    let cfg = &weights.config;
    if state.next_position >= cfg.max_seq_len {
        return Err(CoreError::SequenceOverflow(
            state.next_position + 1,
            cfg.max_seq_len,
        ));
    }
    let token = argmax_token(last_logits);
    let position = state.next_position;
    let embedded = embed_tokens(weights, &[token], &[position])?;
    let mut h = embedded.row(0).to_vec();

    for (layer, lw) in weights.layers.iter().enumerate() {
        let normed = ln_affine(&h, &lw.ln_attn_gain, &lw.ln_attn_bias);
        let q = vec_mat(&normed, &lw.w_q)?;
        let k = vec_mat(&normed, &lw.w_k)?;
        let v = vec_mat(&normed, &lw.w_v)?;
        let cache = &mut state.kv[layer];
        cache.push(k, v, position);
        let (_, context) = cached_attention_row(&q, &cache.keys, &cache.values, cfg.n_heads);
        let attn_out = vec_mat(&context, &lw.w_o)?;
        for (hv, &o) in h.iter_mut().zip(&attn_out) {
            *hv += o;
        }

        let ffn_in = ln_affine(&h, &lw.ln_ffn_gain, &lw.ln_ffn_bias);
        let mask = if params.enable_neuron_sparsity {
            Some(state.neuron_masks[layer].as_slice())
        } else {
            None
        };
        let (_, y) = ffn_token_masked(lw, &ffn_in, cfg.activation_kind, mask);
        for (hv, &yv) in h.iter_mut().zip(&y) {
            *hv += yv;
        }
    }

    let final_normed = ln_affine(&h, &weights.final_ln_gain, &weights.final_ln_bias);
    let logits = lm_head(weights, &final_normed);

    state.n_generated += 1;
    state.next_position += 1;
    Ok((token, logits))
}

/// Selection and core-set summary attached to every generation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrefillSummary {
    pub n_prompt: usize,
    pub n_kept: usize,
    pub kept_prunable: usize,
    pub threshold: Option<usize>,
    pub degenerate_pruning: bool,
    pub core_set_sizes: Vec<usize>,
    pub selection: Option<CoreTokenSelection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub tokens: Vec<u32>,
    pub cost: CostReport,
    pub prefill: PrefillSummary,
}

/// Prefill once, decode greedily, and report cost against the dense
/// baseline.
pub fn generate(
    weights: &Weights,
    prompt: &[u32],
    params: &SparsityParams,
    max_new_tokens: usize,
) -> Result<(GenerationOutput, PrefillState, crate::model::ActivationTrace)> {
    let (mut state, mut logits, trace) = prefill(weights, prompt, params)?;
    let mut tokens = Vec::with_capacity(max_new_tokens);
    for _ in 0..max_new_tokens {
        let (tok, next_logits) = decode_step(&mut state, weights, params, &logits)?;
        tokens.push(tok);
        logits = next_logits;
    }

    let n_kept = state.kept_tokens();
    let selection = state.selection.clone();
    let kept_prunable = selection
        .as_ref()
        .map(|sel| {
            let (s, e) = params.prunable_span;
            sel.kept.iter().filter(|&&i| i >= s && i < e).count()
        })
        .unwrap_or(0);
    let summary = PrefillSummary {
        n_prompt: state.n_prompt,
        n_kept,
        kept_prunable,
        threshold: selection.as_ref().map(|s| s.threshold),
        degenerate_pruning: state.degenerate_pruning,
        core_set_sizes: state.core_sets.iter().map(|c| c.neuron_ids.len()).collect(),
        selection,
    };

    let flops_cfg = FlopsConfig::from_model(&weights.config);
    let beta_eff = if params.enable_neuron_sparsity {
        params.beta
    } else {
        1.0
    };
    let cost = flops_model(
        &flops_cfg,
        state.n_prompt,
        n_kept,
        params.prune_layer,
        beta_eff,
        max_new_tokens,
    )?;

    Ok((
        GenerationOutput {
            tokens,
            cost,
            prefill: summary,
        },
        state,
        trace,
    ))
}

/// Per-prompt kept prunable-token counts over a batch, demonstrating
/// input-adaptive retention. Prompts run as independent sessions, in
/// parallel when the build allows it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenCountStats {
    pub per_prompt_kept: Vec<usize>,
    pub mean_kept: f64,
    pub degenerate_rate: f64,
}

pub fn token_count_stats(
    weights: &Weights,
    prompts: &[Vec<u32>],
    params: &SparsityParams,
) -> Result<TokenCountStats> {
    if prompts.is_empty() {
        return Err(CoreError::EmptySet);
    }
    let cfg = &weights.config;
    let work = cfg.n_layers * cfg.d_model * cfg.d_ffn * prompts[0].len();
    let results = crate::par::map_slice(prompts, work, |prompt| {
        prefill(weights, prompt, params).map(|(state, _, _)| {
            let (s, e) = params.prunable_span;
            let kept = state
                .selection
                .as_ref()
                .map(|sel| sel.kept.iter().filter(|&&i| i >= s && i < e).count())
                .unwrap_or_else(|| e.saturating_sub(s));
            (kept, state.degenerate_pruning)
        })
    });
    let mut per_prompt = Vec::with_capacity(results.len());
    let mut degenerate = 0usize;
    for r in results {
        let (kept, deg) = r?;
        per_prompt.push(kept);
        if deg {
            degenerate += 1;
        }
    }
    let mean = per_prompt.iter().sum::<usize>() as f64 / per_prompt.len() as f64;
    Ok(TokenCountStats {
        mean_kept: mean,
        degenerate_rate: degenerate as f64 / per_prompt.len() as f64,
        per_prompt_kept: per_prompt,
    })
}
