use super::*;
use crate::error::CoreError;
use crate::model::{
    forward_dense, init_synthetic, positional_encoding, LayerWeights, ModelConfig, Weights,
};
use crate::numerics::{ActivationKind, Matrix};

fn toy_weights(seed: u64) -> Weights {
    init_synthetic(ModelConfig::toy(), seed, 1.0, 1.0).unwrap()
}

fn dense_params() -> SparsityParams {
    SparsityParams {
        rho: 1.0,
        beta: 1.0,
        enable_token_pruning: false,
        enable_neuron_sparsity: false,
        ..Default::default()
    }
}

/// Greedy generation by full recomputation: the independent dense route.
fn reference_generate(weights: &Weights, prompt: &[u32], max_new: usize) -> Vec<u32> {
    let mut seq = prompt.to_vec();
    let mut out = Vec::new();
    for _ in 0..max_new {
        let (logits, _) = forward_dense(weights, &seq).unwrap();
        let tok = argmax_token(logits.row(logits.rows() - 1));
        out.push(tok);
        seq.push(tok);
    }
    out
}

#[test]
fn full_density_prefill_matches_dense_reference_exactly() {
    let w = toy_weights(7);
    let prompt: Vec<u32> = (0..17).map(|i| (i * 31 % 256) as u32).collect();
    let (dense_logits, _) = forward_dense(&w, &prompt).unwrap();
    let (_, logits, _) = prefill(&w, &prompt, &dense_params()).unwrap();
    assert_eq!(logits.as_slice(), dense_logits.row(prompt.len() - 1));
}

#[test]
fn full_density_generation_matches_reference_stream() {
    let w = toy_weights(9);
    let prompt: Vec<u32> = vec![3, 141, 59, 26, 5, 35, 89, 79];
    let expect = reference_generate(&w, &prompt, 8);
    let (out, _, _) = generate(&w, &prompt, &dense_params(), 8).unwrap();
    assert_eq!(out.tokens, expect);
}

#[test]
fn decode_full_beta_matches_dense_decode() {
    // Neuron sparsity with beta = 1 must be the identity.
    let w = toy_weights(21);
    let prompt: Vec<u32> = vec![1, 2, 3, 4, 5, 6];
    let sparse_on = SparsityParams {
        rho: 1.0,
        beta: 1.0,
        enable_token_pruning: false,
        enable_neuron_sparsity: true,
        ..Default::default()
    };
    let (a, _, _) = generate(&w, &prompt, &sparse_on, 6).unwrap();
    let (b, _, _) = generate(&w, &prompt, &dense_params(), 6).unwrap();
    assert_eq!(a.tokens, b.tokens);
}

#[test]
fn generation_is_deterministic() {
    let w = toy_weights(33);
    let prompt: Vec<u32> = (0..24).map(|i| (i * 7 % 256) as u32).collect();
    let params = SparsityParams {
        prunable_span: (2, 20),
        ..Default::default()
    };
    let (a, _, _) = generate(&w, &prompt, &params, 5).unwrap();
    let (b, _, _) = generate(&w, &prompt, &params, 5).unwrap();
    assert_eq!(a.tokens, b.tokens);
    assert_eq!(
        serde_json::to_string(&a.cost).unwrap(),
        serde_json::to_string(&b.cost).unwrap()
    );
}

#[test]
fn empty_generation_returns_prefill_cost_only() {
    let w = toy_weights(3);
    let (out, _, _) = generate(&w, &[5, 6, 7], &dense_params(), 0).unwrap();
    assert!(out.tokens.is_empty());
    assert_eq!(out.cost.n_generated, 0);
    assert!(out.cost.prefill_flops_dense > 0.0);
}

#[test]
fn prompt_shorter_than_span_rejected() {
    let w = toy_weights(3);
    let params = SparsityParams {
        prunable_span: (0, 50),
        ..Default::default()
    };
    assert!(matches!(
        prefill(&w, &[1, 2, 3], &params),
        Err(CoreError::InvalidParam(_))
    ));
}

#[test]
fn prune_layer_out_of_range_rejected() {
    let w = toy_weights(3);
    let params = SparsityParams {
        prune_layer: 99,
        prunable_span: (0, 4),
        ..Default::default()
    };
    assert!(prefill(&w, &[1, 2, 3, 4, 5, 6], &params).is_err());
}

#[test]
fn sequence_overflow_during_decode() {
    let w = toy_weights(3);
    let n = w.config.max_seq_len - 1;
    let prompt: Vec<u32> = (0..n as u32).map(|i| i % 256).collect();
    let (out, mut state, _) = generate(&w, &prompt, &dense_params(), 1).unwrap();
    assert_eq!(out.tokens.len(), 1);
    let logits = vec![0.0; w.config.vocab_size];
    assert!(matches!(
        decode_step(&mut state, &w, &dense_params(), &logits),
        Err(CoreError::SequenceOverflow(..))
    ));
}

// ---------------------------------------------------------------------------
// Crafted models: zero attention weights so tokens never mix, and a W_u
// whose columns respond to exactly one token signature each. That pins each
// token's activated-neuron set by construction and lets intersection counts
// be engineered to a chosen pattern end to end.
// ---------------------------------------------------------------------------

/// Build a model where token id `t` (placed at position `t % 10` of its
/// prompt) activates exactly the neuron set `gammas[t]`.
fn crafted_model(gammas: &[Vec<usize>], positions: &[usize]) -> Weights {
    let n_ids = gammas.len();
    let d_model = 2 * n_ids;
    let d_ffn = 2 * n_ids;
    let config = ModelConfig {
        n_layers: 1,
        d_model,
        d_ffn,
        n_heads: 1,
        vocab_size: n_ids,
        activation_kind: ActivationKind::Relu,
        max_seq_len: 64,
    };
    // Signature vector for id t: +1 at 2t, -1 at 2t+1 (zero mean, so layer
    // norm only rescales it and dot-product signs are preserved).
    let mut embedding = Matrix::zeros(n_ids, d_model);
    for t in 0..n_ids {
        let pe = positional_encoding(positions[t], d_model);
        for j in 0..d_model {
            let v = match j {
                _ if j == 2 * t => 1.0,
                _ if j == 2 * t + 1 => -1.0,
                _ => 0.0,
            };
            embedding.set(t, j, v - pe[j]);
        }
    }
    let mut w_u = Matrix::zeros(d_model, d_ffn);
    for (t, gamma) in gammas.iter().enumerate() {
        for n in 0..d_ffn {
            let s = if gamma.contains(&n) { 0.5 } else { -0.5 };
            w_u.set(2 * t, n, s);
            w_u.set(2 * t + 1, n, -s);
        }
    }
    let zeros = Matrix::zeros(d_model, d_model);
    Weights {
        config,
        seed: 0,
        orthogonality_mix: 0.0,
        scale: 1.0,
        embedding,
        layers: vec![LayerWeights {
            w_q: zeros.clone(),
            w_k: zeros.clone(),
            w_v: zeros.clone(),
            w_o: zeros.clone(),
            w_u,
            w_d: Matrix::zeros(d_ffn, d_model),
            ln_attn_gain: vec![1.0; d_model],
            ln_attn_bias: vec![0.0; d_model],
            ln_ffn_gain: vec![1.0; d_model],
            ln_ffn_bias: vec![0.0; d_model],
        }],
        final_ln_gain: vec![1.0; d_model],
        final_ln_bias: vec![0.0; d_model],
    }
}

fn range_set(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Twenty ids: ids 0..9 form the "sharp" prompt (prunable intersection
/// counts 10,9,8,2,1), ids 10..19 the "flat" prompt (10,9,8,7,2). Protected
/// ids carry the full 12-neuron core so the sentence core set is forced to
/// neurons 0..11 in both prompts.
fn sharp_flat_model() -> (Weights, Vec<u32>, Vec<u32>, SparsityParams) {
    let mut gammas: Vec<Vec<usize>> = Vec::new();
    // Sharp prompt: prunable ids 0..4.
    for size in [10, 9, 8, 2, 1] {
        gammas.push(range_set(size));
    }
    for _ in 0..5 {
        gammas.push(range_set(12)); // protected ids 5..9
    }
    // Flat prompt: prunable ids 10..14.
    for size in [10, 9, 8, 7, 2] {
        gammas.push(range_set(size));
    }
    for _ in 0..5 {
        gammas.push(range_set(12)); // protected ids 15..19
    }
    let positions: Vec<usize> = (0..20).map(|t| t % 10).collect();
    let weights = crafted_model(&gammas, &positions);
    let sharp: Vec<u32> = (0..10).collect();
    let flat: Vec<u32> = (10..20).collect();
    // Core size must be exactly 12 of the 40 neurons.
    let params = SparsityParams {
        rho: 1.0,
        beta: 0.3,
        prune_layer: 0,
        prunable_span: (0, 5),
        enable_token_pruning: true,
        enable_neuron_sparsity: false,
        keep_pruned_in_early_kv: true,
    };
    (weights, sharp, flat, params)
}

#[test]
fn engineered_counts_drive_selection() {
    let (w, sharp, _, params) = sharp_flat_model();
    let (state, _, _) = prefill(&w, &sharp, &params).unwrap();
    let sel = state.selection.as_ref().unwrap();
    assert_eq!(sel.intersection_counts[..5], [10, 9, 8, 2, 1]);
    assert_eq!(sel.threshold, 8);
    // Three prunable survivors plus all five protected tokens.
    assert_eq!(sel.kept, vec![0, 1, 2, 5, 6, 7, 8, 9]);
    assert_eq!(state.kept_tokens(), 8);
}

#[test]
fn adaptive_retention_sharp_vs_flat() {
    let (w, sharp, flat, params) = sharp_flat_model();
    let stats = token_count_stats(&w, &[sharp.clone(), flat], &params).unwrap();
    // Sharp count cliff keeps 3 prunable tokens, the flatter one keeps 4.
    assert_eq!(stats.per_prompt_kept, vec![3, 4]);
    assert!((stats.mean_kept - 3.5).abs() < 1e-12);
    assert_eq!(stats.degenerate_rate, 0.0);

    let single = token_count_stats(&w, &[sharp], &params).unwrap();
    assert_eq!(single.mean_kept, single.per_prompt_kept[0] as f64);
}

#[test]
fn degenerate_counts_keep_everything() {
    // All prunable ids share the same two-neuron set: no knee exists.
    let mut gammas: Vec<Vec<usize>> = Vec::new();
    for _ in 0..5 {
        gammas.push(vec![0, 1]);
    }
    for _ in 0..5 {
        gammas.push(range_set(12));
    }
    let positions: Vec<usize> = (0..10).collect();
    let w = crafted_model(&gammas, &positions);
    let params = SparsityParams {
        rho: 1.0,
        beta: 0.6,
        prune_layer: 0,
        prunable_span: (0, 5),
        enable_token_pruning: true,
        enable_neuron_sparsity: false,
        keep_pruned_in_early_kv: true,
    };
    let prompt: Vec<u32> = (0..10).collect();
    let (state, _, _) = prefill(&w, &prompt, &params).unwrap();
    assert!(state.degenerate_pruning);
    assert_eq!(state.kept_tokens(), 10);
    let stats = token_count_stats(&w, &[prompt], &params).unwrap();
    assert_eq!(stats.degenerate_rate, 1.0);
}

#[test]
fn kv_cache_lengths_follow_pruning() {
    let w = toy_weights(13);
    let prompt: Vec<u32> = (0..30).map(|i| (i * 11 % 256) as u32).collect();
    let params = SparsityParams {
        prunable_span: (4, 26),
        ..Default::default()
    };
    let (out, state, _) = generate(&w, &prompt, &params, 3).unwrap();
    let n_kept = out.prefill.n_kept;
    assert!(n_kept < prompt.len(), "pruning should drop something here");
    for (layer, kv) in state.kv.iter().enumerate() {
        let expect = if layer < params.prune_layer {
            prompt.len() + out.tokens.len()
        } else {
            n_kept + out.tokens.len()
        };
        assert_eq!(kv.len(), expect, "layer {layer}");
    }
    // Original ordering is preserved in the pruned caches.
    for kv in &state.kv {
        let mut sorted = kv.positions.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, kv.positions);
    }
}

#[test]
fn evicting_early_kv_is_a_config_switch() {
    let w = toy_weights(13);
    let prompt: Vec<u32> = (0..30).map(|i| (i * 11 % 256) as u32).collect();
    let params = SparsityParams {
        prunable_span: (4, 26),
        keep_pruned_in_early_kv: false,
        ..Default::default()
    };
    let (out, state, _) = generate(&w, &prompt, &params, 0).unwrap();
    for kv in &state.kv {
        assert_eq!(kv.len(), out.prefill.n_kept);
    }
}

#[test]
fn dropped_tokens_have_no_downstream_influence() {
    let w = toy_weights(13);
    let prompt: Vec<u32> = (0..30).map(|i| (i * 11 % 256) as u32).collect();
    let params = SparsityParams {
        prunable_span: (4, 26),
        ..Default::default()
    };
    let (_, logits_clean, _) = prefill(&w, &prompt, &params).unwrap();
    // Corrupt the hidden states of every dropped token right before they
    // are removed; nothing downstream may change.
    let hook = |h: &mut Matrix, dropped: &[usize]| {
        for &i in dropped {
            for v in h.row_mut(i) {
                *v = 1e6;
            }
        }
    };
    let (_, logits_perturbed, _) =
        super::prefill::prefill_with_hook(&w, &prompt, &params, Some(&hook)).unwrap();
    assert_eq!(logits_clean, logits_perturbed);
}

#[test]
fn trace_token_axis_shrinks_at_prune_layer() {
    let w = toy_weights(13);
    let prompt: Vec<u32> = (0..30).map(|i| (i * 11 % 256) as u32).collect();
    let params = SparsityParams {
        prunable_span: (4, 26),
        ..Default::default()
    };
    let (state, _, trace) = prefill(&w, &prompt, &params).unwrap();
    let n_kept = state.selection.as_ref().unwrap().kept.len();
    for (layer, lt) in trace.layers.iter().enumerate() {
        let expect = if layer <= params.prune_layer {
            prompt.len()
        } else {
            n_kept
        };
        assert_eq!(lt.token_count(), expect, "layer {layer}");
    }
    // Core sets exist for every layer at the exact configured size.
    let expect_core = crate::numerics::top_count(w.config.d_ffn, params.beta);
    assert_eq!(state.core_sets.len(), w.config.n_layers);
    for c in &state.core_sets {
        assert_eq!(c.neuron_ids.len(), expect_core);
    }
}

// ---------------------------------------------------------------------------
// Neuron-sparse FFN
// ---------------------------------------------------------------------------

#[test]
fn masked_ffn_pencil_and_paper() {
    // d_model = 2, d_ffn = 4; keep neurons {0, 2}.
    let lw = LayerWeights {
        w_q: Matrix::zeros(2, 2),
        w_k: Matrix::zeros(2, 2),
        w_v: Matrix::zeros(2, 2),
        w_o: Matrix::zeros(2, 2),
        w_u: Matrix::from_vec(2, 4, vec![1.0, 2.0, -1.0, 0.5, 0.0, 1.0, 3.0, -2.0]).unwrap(),
        w_d: Matrix::from_vec(
            4,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 2.0, -1.0, 1.0, 1.0],
        )
        .unwrap(),
        ln_attn_gain: vec![1.0; 2],
        ln_attn_bias: vec![0.0; 2],
        ln_ffn_gain: vec![1.0; 2],
        ln_ffn_bias: vec![0.0; 2],
    };
    let x = [2.0, -1.0];
    // Pre-activations: [2*1+(-1)*0, 2*2+(-1)*1, 2*(-1)+(-1)*3, 2*0.5+(-1)*(-2)]
    //                = [2, 3, -5, 3]; relu -> [2, 3, 0, 3].
    // Mask {0, 2}: a = [2, 0, 0, 0]; y = 2 * w_d[0] = [2, 0].
    let mask = [true, false, true, false];
    let (a, y) = ffn_token_masked(&lw, &x, ActivationKind::Relu, Some(&mask));
    assert_eq!(a, vec![2.0, 0.0, 0.0, 0.0]);
    assert_eq!(y, vec![2.0, 0.0]);
    // Full mask reproduces the dense computation exactly:
    // y = 2*[1,0] + 3*[0,1] + 0*[2,-1] + 3*[1,1] = [5, 6].
    let (a_dense, y_dense) = ffn_token_masked(&lw, &x, ActivationKind::Relu, None);
    assert_eq!(a_dense, vec![2.0, 3.0, 0.0, 3.0]);
    assert_eq!(y_dense, vec![5.0, 6.0]);
}

#[test]
fn masked_ffn_equals_zeroed_weight_oracle() {
    // Masking activations must equal dense computation with the dropped
    // neurons' weights zeroed out.
    let w = toy_weights(17);
    let lw = &w.layers[1];
    let d_ffn = w.config.d_ffn;
    let mask: Vec<bool> = (0..d_ffn).map(|n| n % 3 != 0).collect();

    let mut zeroed = lw.clone();
    for n in 0..d_ffn {
        if !mask[n] {
            for k in 0..w.config.d_model {
                zeroed.w_u.set(k, n, 0.0);
            }
            for k in 0..w.config.d_model {
                zeroed.w_d.set(n, k, 0.0);
            }
        }
    }
    let x: Vec<f64> = (0..w.config.d_model).map(|i| (i as f64 * 0.37).sin()).collect();
    let (_, y_masked) = ffn_token_masked(lw, &x, w.config.activation_kind, Some(&mask));
    let (_, y_oracle) = ffn_token_masked(&zeroed, &x, w.config.activation_kind, None);
    assert_eq!(y_masked, y_oracle);
}

#[test]
fn sparse_decode_matches_masked_weights_end_to_end() {
    // Decode with neuron sparsity against decode with the non-core weights
    // physically zeroed, starting from the same prefill state.
    let w = toy_weights(29);
    let prompt: Vec<u32> = (0..12).map(|i| (i * 3 % 256) as u32).collect();
    let params_sparse = SparsityParams {
        rho: 0.2,
        beta: 0.4,
        enable_token_pruning: false,
        enable_neuron_sparsity: true,
        ..Default::default()
    };
    let (state0, logits0, _) = prefill(&w, &prompt, &params_sparse).unwrap();

    let mut w_zeroed = w.clone();
    for (layer, lw) in w_zeroed.layers.iter_mut().enumerate() {
        let mask = &state0.neuron_masks[layer];
        for n in 0..w.config.d_ffn {
            if !mask[n] {
                for k in 0..w.config.d_model {
                    lw.w_u.set(k, n, 0.0);
                    lw.w_d.set(n, k, 0.0);
                }
            }
        }
    }
    let params_dense = SparsityParams {
        enable_neuron_sparsity: false,
        ..params_sparse
    };

    let mut state_a = state0.clone();
    let mut state_b = state0;
    let mut logits_a = logits0.clone();
    let mut logits_b = logits0;
    for _ in 0..4 {
        let (tok_a, next_a) = decode_step(&mut state_a, &w, &params_sparse, &logits_a).unwrap();
        let (tok_b, next_b) =
            decode_step(&mut state_b, &w_zeroed, &params_dense, &logits_b).unwrap();
        assert_eq!(tok_a, tok_b);
        for (a, b) in next_a.iter().zip(&next_b) {
            assert!((a - b).abs() < 1e-9);
        }
        logits_a = next_a;
        logits_b = next_b;
    }
}

#[test]
fn generate_cost_report_reflects_selection() {
    let w = toy_weights(13);
    let prompt: Vec<u32> = (0..30).map(|i| (i * 11 % 256) as u32).collect();
    let params = SparsityParams {
        prunable_span: (4, 26),
        ..Default::default()
    };
    let (out, _, _) = generate(&w, &prompt, &params, 2).unwrap();
    assert_eq!(out.cost.n_prompt, 30);
    assert_eq!(out.cost.n_kept, out.prefill.n_kept);
    assert!(out.cost.prefill_flops_sparse < out.cost.prefill_flops_dense);
    assert_eq!(out.cost.token_counts_per_layer.len(), w.config.n_layers);
    assert_eq!(out.cost.token_counts_per_layer[0], 30);
    assert_eq!(
        out.cost.token_counts_per_layer[w.config.n_layers - 1],
        out.prefill.n_kept
    );
}
