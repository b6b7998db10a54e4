//! Numerical validators for the geometric claims behind core-token
//! selection: weight orthogonality, angle/co-activation proportionality,
//! angle preservation under the down projection, and the match between
//! projection scores and core-neuron intersections.
//!
//! Validators are descriptive: they measure, compare against configured
//! thresholds, and report a verdict. They never mutate anything and are
//! deterministic given trace and seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{CoreError, Result};
use crate::model::{ActivationTrace, Weights};
use crate::numerics::{
    binned_means, cosine, gram_deviation_from_scaled_identity, matmul_nt, norm,
    orthogonality_deviation, pearson, spearman, vec_mat, Matrix,
};
use crate::par;
use crate::sparsity::{activated_set, intersection_counts, SentenceCoreSet};

use super::report::{ValidationSummary, ValidatorConfig, Verdict};
use super::scores::{exact_projection_criterion, top_k_overlap};

/// Which token pairs a pairwise validator walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// All unordered pairs (i < j).
    AllPairs,
    /// Pairs (i, M) against one fixed reference token.
    FixedReference(usize),
}

/// Gram deviations of every projection against its best scaled identity.
/// Descriptive: a broken premise yields a Fail verdict, not an error.
pub fn validate_observation1(weights: &Weights, cfg: &ValidatorConfig) -> ValidationSummary {
    let mut s = ValidationSummary::new("observation1_orthogonality");
    s.threshold = cfg.obs1_max_deviation;
    let mut max_dev: f64 = 0.0;
    let mut degenerate = false;
    let mut entries = 0usize;
    for (i, lw) in weights.layers.iter().enumerate() {
        // Query/key pair is judged by its product against theta * I.
        match matmul_nt(&lw.w_q, &lw.w_k).and_then(|p| {
            entries += p.rows() * p.cols();
            gram_deviation_from_scaled_identity(&p)
        }) {
            Ok(dev) => {
                s.details.insert(format!("layer{i}.qk_deviation"), dev);
                max_dev = max_dev.max(dev);
            }
            Err(_) => {
                s.notes
                    .push(format!("layer{i}.qk: degenerate product (mean diag <= 0)"));
                degenerate = true;
            }
        }
        for (mat, tag) in [(&lw.w_v, "wv"), (&lw.w_d, "wd"), (&lw.w_o, "wo")] {
            let n = mat.rows().min(mat.cols());
            entries += n * n;
            match orthogonality_deviation(mat) {
                Ok(dev) => {
                    s.details.insert(format!("layer{i}.{tag}_deviation"), dev);
                    max_dev = max_dev.max(dev);
                }
                Err(_) => {
                    s.notes.push(format!("layer{i}.{tag}: degenerate Gram"));
                    degenerate = true;
                }
            }
        }
    }
    s.sample_count = entries;
    s.details.insert("max_deviation".into(), max_dev);
    s.verdict = if entries < cfg.min_samples {
        Verdict::Insufficient
    } else if !degenerate && max_dev <= cfg.obs1_max_deviation {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    s
}

/// Pairwise (co-activation count, cosine) samples over the rows of an
/// activation matrix. Pairs with a zero row are skipped.
pub fn coactivation_pairs(a: &Matrix, mode: PairMode) -> Vec<(f64, f64)> {
    let gammas: Vec<Vec<usize>> = a.iter_rows().map(activated_set).collect();
    let pair_of = |i: usize, j: usize| -> Option<(f64, f64)> {
        let cos = cosine(a.row(i), a.row(j)).ok()?;
        let inter = gammas[i].iter().filter(|n| gammas[j].contains(n)).count();
        Some((inter as f64, cos))
    };
    match mode {
        PairMode::AllPairs => {
            let t = a.rows();
            let per_row: Vec<Vec<(f64, f64)>> = par::map_indexed(t, t * a.cols(), |i| {
                ((i + 1)..t).filter_map(|j| pair_of(i, j)).collect()
            });
            per_row.into_iter().flatten().collect()
        }
        PairMode::FixedReference(m) => (0..a.rows())
            .filter(|&i| i != m)
            .filter_map(|i| pair_of(i, m))
            .collect(),
    }
}

fn correlation_summary(
    mut s: ValidationSummary,
    xs: &[f64],
    ys: &[f64],
    threshold: f64,
    use_spearman: bool,
    cfg: &ValidatorConfig,
) -> ValidationSummary {
    s.threshold = threshold;
    s.sample_count = xs.len();
    s.pearson_r = pearson(xs, ys);
    s.spearman_r = spearman(xs, ys);
    s.bins = binned_means(xs, ys, cfg.n_bins);
    let measured = if use_spearman { s.spearman_r } else { s.pearson_r };
    s.verdict = match measured {
        _ if xs.len() < cfg.min_samples => Verdict::Insufficient,
        None => Verdict::Insufficient,
        Some(r) if r >= threshold => Verdict::Pass,
        Some(_) => Verdict::Fail,
    };
    s
}

/// Correlation between `cos(A_i, A_j)` and the co-activation count
/// `|Gamma_i ∩ Gamma_j|` over the rows of a post-activation matrix.
pub fn validate_observation2_rows(
    a: &Matrix,
    mode: PairMode,
    cfg: &ValidatorConfig,
) -> ValidationSummary {
    let pairs = coactivation_pairs(a, mode);
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let s = ValidationSummary::new("observation2_coactivation");
    correlation_summary(s, &xs, &ys, cfg.obs2_min_pearson, false, cfg)
}

pub fn validate_observation2(
    trace: &ActivationTrace,
    layer: usize,
    mode: PairMode,
    cfg: &ValidatorConfig,
) -> Result<ValidationSummary> {
    let lt = trace
        .layer(layer)
        .ok_or_else(|| CoreError::InvalidParam(format!("layer {layer} not in trace")))?;
    let mut s = validate_observation2_rows(&lt.ffn_activations, mode, cfg);
    s.layer = Some(layer);
    Ok(s)
}

/// Correlation between the exact projection scores at one attention block
/// and the cosine between hidden states entering that block.
pub fn validate_insight1(
    trace: &ActivationTrace,
    layer: usize,
    m: usize,
    weights: Option<&Weights>,
    cfg: &ValidatorConfig,
) -> Result<ValidationSummary> {
    let scores = exact_projection_criterion(trace, layer, m)?;
    let lt = trace.layer(layer).expect("checked by criterion");
    let y_m = lt.attn_inputs.row(m);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..=m {
        if let Ok(c) = cosine(lt.attn_inputs.row(i), y_m) {
            xs.push(c);
            ys.push(scores[i]);
        }
    }
    let mut s = ValidationSummary::new("insight1_projection_vs_angle");
    s.layer = Some(layer);
    if let Some(w) = weights {
        // The claim leans on near-orthogonal projections; record how far
        // this model is from that premise.
        if let Some(lw) = w.layers.get(layer) {
            if let Ok(p) = matmul_nt(&lw.w_q, &lw.w_k) {
                if let Ok(dev) = gram_deviation_from_scaled_identity(&p) {
                    s.details.insert("premise_qk_deviation".into(), dev);
                }
            }
            if let Ok(dev) = orthogonality_deviation(&lw.w_v) {
                s.details.insert("premise_wv_deviation".into(), dev);
            }
        }
    }
    Ok(correlation_summary(
        s,
        &xs,
        &ys,
        cfg.insight1_min_spearman,
        true,
        cfg,
    ))
}

/// Max angle distortion introduced by a down projection, probed on random
/// activation-like vectors. Near zero exactly when `w_d` is square and
/// scaled-orthogonal.
pub fn angle_preservation_probe(w_d: &Matrix, n_pairs: usize, seed: u64) -> Result<f64> {
    if n_pairs == 0 {
        return Err(CoreError::InvalidParam("need at least one pair".into()));
    }
    let d_in = w_d.rows();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha20Rng| -> Vec<f64> {
        // Half-rectified uniform noise mimics a post-activation row.
        (0..d_in)
            .map(|_| {
                let v: f64 = rng.gen_range(-1.0..1.0);
                v.max(0.0)
            })
            .collect()
    };
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n_pairs)
        .map(|_| (sample(&mut rng), sample(&mut rng)))
        .collect();
    let deltas = par::map_slice(&pairs, d_in * w_d.cols(), |(a, b)| {
        let ya = vec_mat(a, w_d).expect("shape fixed");
        let yb = vec_mat(b, w_d).expect("shape fixed");
        match (cosine(a, b), cosine(&ya, &yb)) {
            (Ok(ca), Ok(cb)) => (ca - cb).abs(),
            _ => 0.0,
        }
    });
    Ok(deltas.into_iter().fold(0.0, f64::max))
}

/// Correlation between FFN-output angles and co-activation counts, plus the
/// angle-preservation check against the recorded activations.
pub fn validate_insight2(
    trace: &ActivationTrace,
    layer: usize,
    weights: &Weights,
    cfg: &ValidatorConfig,
) -> Result<ValidationSummary> {
    let lt = trace
        .layer(layer)
        .ok_or_else(|| CoreError::InvalidParam(format!("layer {layer} not in trace")))?;
    let a = &lt.ffn_activations;
    let y = &lt.ffn_outputs;
    let gammas: Vec<Vec<usize>> = a.iter_rows().map(activated_set).collect();

    let t = lt.token_count();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut max_delta: f64 = 0.0;
    for i in 0..t {
        for j in (i + 1)..t {
            let (Ok(cy), Ok(ca)) = (cosine(y.row(i), y.row(j)), cosine(a.row(i), a.row(j)))
            else {
                continue;
            };
            let inter = gammas[i].iter().filter(|n| gammas[j].contains(n)).count();
            xs.push(inter as f64);
            ys.push(cy);
            max_delta = max_delta.max((cy - ca).abs());
        }
    }

    let mut s = ValidationSummary::new("insight2_output_angle_vs_coactivation");
    s.layer = Some(layer);
    let lw = &weights.layers[layer];
    let wd_square = lw.w_d.rows() == lw.w_d.cols();
    let wd_dev = orthogonality_deviation(&lw.w_d).unwrap_or(f64::MAX);
    s.details.insert("angle_delta_max".into(), max_delta);
    s.details.insert("wd_deviation".into(), wd_dev);
    s.details
        .insert("wd_square".into(), if wd_square { 1.0 } else { 0.0 });

    let mut s = correlation_summary(s, &xs, &ys, cfg.insight2_min_pearson, false, cfg);
    // Angle-preservation lemma: a square scaled-orthogonal down projection
    // must not bend angles. Premise and conclusion fail together.
    if wd_square && wd_dev <= 1e-10 && max_delta > cfg.angle_tolerance {
        s.verdict = Verdict::Fail;
        s.notes.push(format!(
            "scaled-orthogonal w_d bent angles by {max_delta:.3e}"
        ));
    }
    if !wd_square || wd_dev > 1e-10 {
        s.notes.push(
            "w_d is not square scaled-orthogonal; angle_delta_max is reported, not asserted"
                .into(),
        );
    }
    Ok(s)
}

/// Mean |spearman| of `scores` against permuted `counts`; the null the
/// matching claim is compared to.
pub fn permutation_null_spearman(
    scores: &[f64],
    counts: &[f64],
    n_perm: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut shuffled = counts.to_vec();
    let mut acc = 0.0;
    let mut used = 0;
    for _ in 0..n_perm {
        shuffled.shuffle(&mut rng);
        if let Some(r) = spearman(scores, &shuffled) {
            acc += r.abs();
            used += 1;
        }
    }
    if used == 0 {
        0.0
    } else {
        acc / used as f64
    }
}

/// Rank agreement between the exact projection criterion at `layer` and the
/// intersection counts with the sentence core set of the upstream FFN
/// (`layer - 1`), plus top-k overlaps and a permuted-null control.
pub fn validate_matching(
    trace: &ActivationTrace,
    layer: usize,
    m: usize,
    core: &SentenceCoreSet,
    cfg: &ValidatorConfig,
) -> Result<ValidationSummary> {
    if layer == 0 {
        return Err(CoreError::InvalidParam(
            "matching needs layer >= 1 (intersections come from the upstream FFN)".into(),
        ));
    }
    if core.layer != layer - 1 {
        return Err(CoreError::InvalidParam(format!(
            "core set is for layer {}, expected {}",
            core.layer,
            layer - 1
        )));
    }
    let upstream = trace
        .layer(layer - 1)
        .ok_or_else(|| CoreError::InvalidParam(format!("layer {} not in trace", layer - 1)))?;
    let scores_all = exact_projection_criterion(trace, layer, m)?;
    if upstream.token_count() != scores_all.len() {
        return Err(CoreError::InvalidParam(
            "token axis changed between layers; use an unpruned trace".into(),
        ));
    }
    let gammas: Vec<Vec<usize>> = upstream
        .ffn_activations
        .iter_rows()
        .map(activated_set)
        .collect();
    let counts_all = intersection_counts(&gammas, core);

    let scores = &scores_all[..=m];
    let counts: Vec<f64> = counts_all[..=m].iter().map(|&c| c as f64).collect();

    let mut s = ValidationSummary::new("matching_projection_vs_core_intersection");
    s.layer = Some(layer);
    for k in [8usize, 16, 32] {
        if k <= scores.len() {
            s.details.insert(
                format!("top{k}_overlap"),
                top_k_overlap(scores, &counts, k),
            );
        }
    }
    s.details.insert(
        "null_mean_abs_spearman".into(),
        permutation_null_spearman(scores, &counts, 20, 0x6e75),
    );

    let mut s = correlation_summary(s, &counts, scores, cfg.matching_min_spearman, true, cfg);
    if s.verdict == Verdict::Pass {
        if let Some(&ov) = s.details.get("top16_overlap") {
            if ov < cfg.matching_min_top16_overlap {
                s.verdict = Verdict::Fail;
                s.notes
                    .push(format!("top-16 overlap {ov:.3} below threshold"));
            }
        }
    }
    Ok(s)
}

/// Sum of the exact projection scores minus ||O_M||; zero up to rounding for
/// any trace (the scores decompose the attention output).
pub fn projection_decomposition_gap(
    trace: &ActivationTrace,
    layer: usize,
    m: usize,
) -> Result<f64> {
    let lt = trace
        .layer(layer)
        .ok_or_else(|| CoreError::InvalidParam(format!("layer {layer} not in trace")))?;
    let alpha = lt.mean_attention_row(m);
    let (scores, o_m) = super::scores::projection_scores(&alpha, &lt.values)?;
    Ok((scores.iter().sum::<f64>() - norm(&o_m)).abs())
}

/// Jaccard similarity of the core set computed on prompt prefixes against
/// the full-prompt core set, per prefix length. Stable (rising toward 1)
/// similarities indicate the prefill-time sets can be frozen for decoding.
pub fn prefix_core_stability(
    weights: &crate::model::Weights,
    prompt: &[u32],
    layer: usize,
    rho: f64,
    beta: f64,
    prefix_lengths: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if prefix_lengths.len() < 2 {
        return Err(CoreError::InvalidParam(
            "need at least 2 prefix lengths".into(),
        ));
    }
    let work = weights.config.d_model * weights.config.d_ffn * weights.config.n_layers;
    let sets = crate::par::map_slice(prefix_lengths, work * prompt.len(), |&len| {
        if len == 0 || len > prompt.len() {
            return Err(CoreError::InvalidParam(format!(
                "prefix length {len} out of range"
            )));
        }
        let (_, trace) = crate::model::forward_dense(weights, &prompt[..len])?;
        let lt = trace
            .layer(layer)
            .ok_or_else(|| CoreError::InvalidParam(format!("layer {layer} not in trace")))?;
        let (_, core) = crate::sparsity::sentence_core_neurons(&lt.ffn_activations, rho, beta, layer)?;
        Ok(core)
    });
    let sets: Result<Vec<_>> = sets.into_iter().collect();
    let sims = crate::sparsity::core_set_stability(&sets?)?;
    Ok(prefix_lengths.iter().copied().zip(sims).collect())
}
