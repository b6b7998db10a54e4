//! Token-importance criteria and the validator suite for the claims they
//! rest on.

mod report;
mod scores;
mod validators;

pub use report::{ValidationSummary, ValidatorConfig, Verdict};
pub use scores::{
    approx_projection_criterion, attention_criterion, criterion_report, criterion_report_csv,
    exact_projection_criterion, projection_scores, top_k_indices, top_k_overlap, CriterionReport,
};
pub use validators::{
    angle_preservation_probe, coactivation_pairs, permutation_null_spearman,
    prefix_core_stability, projection_decomposition_gap, validate_insight1, validate_insight2,
    validate_matching, validate_observation1, validate_observation2, validate_observation2_rows,
    PairMode,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward_dense, init_synthetic, ModelConfig};
    use crate::numerics::{norm, Matrix};
    use crate::sparsity::SentenceCoreSet;

    fn toy_trace() -> (crate::model::Weights, crate::model::ActivationTrace) {
        let w = init_synthetic(ModelConfig::toy(), 7, 1.0, 1.0).unwrap();
        let ids: Vec<u32> = (0..12).map(|i| (i * 17 % 256) as u32).collect();
        let (_, trace) = forward_dense(&w, &ids).unwrap();
        (w, trace)
    }

    #[test]
    fn attention_scores_single_token() {
        let w = init_synthetic(ModelConfig::toy(), 7, 1.0, 1.0).unwrap();
        let (_, trace) = forward_dense(&w, &[42]).unwrap();
        assert_eq!(attention_criterion(&trace, 0, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn attention_scores_sum_to_one() {
        let (_, trace) = toy_trace();
        let m = 11;
        for layer in 0..4 {
            let scores = attention_criterion(&trace, layer, m).unwrap();
            assert!(scores.iter().all(|&s| s >= 0.0));
            let sum: f64 = scores.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_projection_self_consistency() {
        let (_, trace) = toy_trace();
        let m = 11;
        let lt = trace.layer(1).unwrap();
        let alpha = lt.mean_attention_row(m);
        let (scores, o_m) = projection_scores(&alpha, &lt.values).unwrap();
        // score[M] is the projection of alpha_MM V_M onto O_M.
        let w_m: Vec<f64> = lt.values.row(m).iter().map(|v| v * alpha[m]).collect();
        let expect = crate::numerics::projection_magnitude(&w_m, &o_m).unwrap();
        assert!((scores[m] - expect).abs() < 1e-12);
    }

    #[test]
    fn exact_projection_single_token_equals_value_norm() {
        let w = init_synthetic(ModelConfig::toy(), 7, 1.0, 1.0).unwrap();
        let (_, trace) = forward_dense(&w, &[42]).unwrap();
        let scores = exact_projection_criterion(&trace, 0, 0).unwrap();
        let lt = trace.layer(0).unwrap();
        assert!((scores[0] - norm(lt.values.row(0))).abs() < 1e-9);
    }

    #[test]
    fn decomposition_completeness_on_every_layer() {
        let (_, trace) = toy_trace();
        for layer in 0..trace.layers.len() {
            let gap = projection_decomposition_gap(&trace, layer, 11).unwrap();
            assert!(gap < 1e-9, "layer {layer} gap {gap}");
        }
    }

    #[test]
    fn orthogonal_values_give_zero_projection() {
        // Two tokens with orthogonal values: the cross term scores zero in
        // the approx criterion no matter the attention weight.
        let values = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let alpha = [0.7, 0.3];
        let (scores, _) = projection_scores(&alpha, &values).unwrap();
        // Exact criterion: projections onto the mixed O_M are generally
        // nonzero; but the approx form uses V_M directly.
        let v_m = values.row(1);
        let approx_0 = alpha[0] * crate::numerics::dot(values.row(0), v_m) / norm(v_m);
        assert_eq!(approx_0, 0.0);
        assert!(scores.iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn approx_agrees_with_exact_when_self_attention_dominates() {
        // Synthetic single-head trace data: alpha_MM >= 0.5 guarantees O_M
        // is dominated by V_M, which is the premise of the approximation.
        let mut rng_state = 0xabcdef12345u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..5 {
            let t = 20;
            let d = 16;
            let m = t - 1;
            let rows: Vec<Vec<f64>> = (0..t)
                .map(|_| (0..d).map(|_| next() * 2.0 - 1.0).collect())
                .collect();
            let values = Matrix::from_rows(&rows).unwrap();
            let mut alpha = vec![0.0; t];
            let self_w = 0.5 + 0.4 * next();
            let rest: Vec<f64> = (0..t - 1).map(|_| next()).collect();
            let rest_sum: f64 = rest.iter().sum();
            for (i, r) in rest.iter().enumerate() {
                alpha[i] = (1.0 - self_w) * r / rest_sum;
            }
            alpha[m] = self_w;

            let (exact, _) = projection_scores(&alpha, &values).unwrap();
            let v_m = values.row(m);
            let approx: Vec<f64> = (0..t)
                .map(|i| alpha[i] * crate::numerics::dot(values.row(i), v_m) / norm(v_m))
                .collect();
            let r = crate::numerics::spearman(&exact[..m], &approx[..m]).unwrap();
            assert!(r >= 0.9, "spearman {r}");
        }
    }

    #[test]
    fn observation1_passes_on_orthogonal_fails_on_gaussian() {
        let cfg = ValidatorConfig::default();
        let w = init_synthetic(ModelConfig::toy(), 7, 1.0, 1.0).unwrap();
        let s = validate_observation1(&w, &cfg);
        assert!(s.passed(), "{s:?}");
        assert!(s.details["max_deviation"] <= 1e-10);

        let w0 = init_synthetic(ModelConfig::toy(), 7, 0.0, 1.0).unwrap();
        let s0 = validate_observation1(&w0, &cfg);
        assert_eq!(s0.verdict, Verdict::Fail);
        assert!(s0.details["max_deviation"] > 0.1);
    }

    #[test]
    fn observation1_identity_weights() {
        let mut w = init_synthetic(ModelConfig::toy(), 7, 1.0, 1.0).unwrap();
        let d = w.config.d_model;
        for lw in &mut w.layers {
            lw.w_v = Matrix::identity(d);
            lw.w_o = Matrix::identity(d);
        }
        let s = validate_observation1(&w, &ValidatorConfig::default());
        for i in 0..w.config.n_layers {
            assert_eq!(s.details[&format!("layer{i}.wv_deviation")], 0.0);
        }
    }

    #[test]
    fn observation2_insufficient_on_identical_rows() {
        let rows = vec![vec![1.0, 0.5, 0.0, 0.2]; 40];
        let a = Matrix::from_rows(&rows).unwrap();
        let s = validate_observation2_rows(&a, PairMode::AllPairs, &ValidatorConfig::default());
        // Counts and cosines are constant: undefined variance.
        assert_eq!(s.verdict, Verdict::Insufficient);
    }

    #[test]
    fn observation2_fails_on_anticorrelated_construction() {
        // Full-support rows with mass on a rotating coordinate: every pair
        // shares all 16 neurons yet points in a nearly orthogonal direction.
        // Narrow rows share only 2 neurons but align perfectly. High
        // intersection comes with low cosine, so the claim must fail.
        let d = 16;
        let mut rows = Vec::new();
        for i in 0..6 {
            let mut r = vec![0.01; d];
            r[i] = 10.0;
            rows.push(r);
        }
        for _ in 0..6 {
            let mut r = vec![0.0; d];
            r[0] = 5.0;
            r[1] = 5.0;
            rows.push(r);
        }
        let a = Matrix::from_rows(&rows).unwrap();
        let s = validate_observation2_rows(&a, PairMode::AllPairs, &ValidatorConfig::default());
        let r = s.pearson_r.unwrap();
        assert!(r < 0.5, "adversarial construction should not correlate, r={r}");
        assert_ne!(s.verdict, Verdict::Pass);
    }

    #[test]
    fn angle_probe_exact_for_scaled_identity_and_orthogonal() {
        let w_d = Matrix::identity(16).scale(2.0);
        assert_eq!(angle_preservation_probe(&w_d, 200, 3).unwrap(), 0.0);

        let g = init_synthetic(ModelConfig::toy(), 5, 1.0, 3.0).unwrap();
        // Square orthogonal block: take the top-left d x d of w_q (itself
        // orthogonal times scale).
        let q = &g.layers[0].w_q;
        let delta = angle_preservation_probe(q, 1000, 9).unwrap();
        assert!(delta <= 1e-9, "delta {delta}");
    }

    #[test]
    fn angle_probe_large_for_gaussian() {
        let w = init_synthetic(ModelConfig::toy(), 5, 0.0, 1.0).unwrap();
        let delta = angle_preservation_probe(&w.layers[0].w_q, 1000, 9).unwrap();
        assert!(delta > 1e-3, "gaussian control delta {delta}");
    }

    #[test]
    fn matching_layer_zero_rejected() {
        let (_, trace) = toy_trace();
        let core = SentenceCoreSet {
            layer: 0,
            neuron_ids: vec![0, 1],
        };
        assert!(validate_matching(&trace, 0, 11, &core, &ValidatorConfig::default()).is_err());
        // Mismatched core layer also rejected.
        assert!(validate_matching(&trace, 2, 11, &core, &ValidatorConfig::default()).is_err());
    }

    #[test]
    fn matching_baseline_with_full_core() {
        // beta = 1: the core is every neuron, intersections reduce to
        // |Gamma| and the validator still runs.
        let (_, trace) = toy_trace();
        let d_ffn = trace.layer(0).unwrap().ffn_activations.cols();
        let core = SentenceCoreSet {
            layer: 1,
            neuron_ids: (0..d_ffn).collect(),
        };
        let s = validate_matching(&trace, 2, 11, &core, &ValidatorConfig::default()).unwrap();
        assert!(s.sample_count > 0);
    }
}
