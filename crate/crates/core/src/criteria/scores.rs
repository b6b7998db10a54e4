//! Token-importance criteria over a recorded trace.
//!
//! Three ways to score how much token i contributes to the last token M at
//! one attention block:
//!
//! - attention baseline: the (head-averaged) attention weight alpha_iM;
//! - exact projection: signed projection of alpha_iM * V_i onto the
//!   attention output O_M = sum_j alpha_jM * V_j;
//! - approximate projection: ||alpha_iM V_i|| * cos(V_i, V_M), which drops
//!   the O_M dependence on the grounds that the self term dominates.
//!
//! Multi-head traces are analyzed with head-averaged attention and the
//! concatenated value rows; with a single head this is exactly the attention
//! output, and in all cases the exact scores decompose O_M: their sum equals
//! ||O_M||.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::ActivationTrace;
use crate::numerics::{dot, norm, Matrix};
use crate::sparsity::{activated_set, intersection_counts, SentenceCoreSet};

fn layer_and_token(
    trace: &ActivationTrace,
    layer: usize,
    m: usize,
) -> Result<&crate::model::LayerTrace> {
    let lt = trace
        .layer(layer)
        .ok_or_else(|| CoreError::InvalidParam(format!("layer {layer} not in trace")))?;
    if m >= lt.token_count() {
        return Err(CoreError::InvalidParam(format!(
            "reference token {m} out of range for {} tokens",
            lt.token_count()
        )));
    }
    Ok(lt)
}

/// Head-averaged attention paid by token `m` to each token. Non-negative,
/// sums to 1 over positions <= m.
pub fn attention_criterion(trace: &ActivationTrace, layer: usize, m: usize) -> Result<Vec<f64>> {
    let lt = layer_and_token(trace, layer, m)?;
    Ok(lt.mean_attention_row(m))
}

/// Signed projections of the weighted value summands onto their sum.
/// Returns `(scores, o_m)`; `sum(scores) == ||o_m||` up to rounding.
pub fn projection_scores(alpha: &[f64], values: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if alpha.len() != values.rows() {
        return Err(CoreError::InvalidParam(format!(
            "alpha length {} vs {} value rows",
            alpha.len(),
            values.rows()
        )));
    }
    let d = values.cols();
    let mut o_m = vec![0.0; d];
    for (i, &a) in alpha.iter().enumerate() {
        for (o, &v) in o_m.iter_mut().zip(values.row(i)) {
            *o += a * v;
        }
    }
    let o_norm = norm(&o_m);
    if o_norm == 0.0 {
        return Err(CoreError::ZeroVector);
    }
    let scores = alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| a * dot(values.row(i), &o_m) / o_norm)
        .collect();
    Ok((scores, o_m))
}

/// Exact projection criterion for reference token `m`.
pub fn exact_projection_criterion(
    trace: &ActivationTrace,
    layer: usize,
    m: usize,
) -> Result<Vec<f64>> {
    let lt = layer_and_token(trace, layer, m)?;
    let alpha = lt.mean_attention_row(m);
    let (scores, _) = projection_scores(&alpha, &lt.values)?;
    Ok(scores)
}

/// Approximate criterion: `||alpha_iM V_i|| * cos(V_i, V_M)`, signed.
pub fn approx_projection_criterion(
    trace: &ActivationTrace,
    layer: usize,
    m: usize,
) -> Result<Vec<f64>> {
    let lt = layer_and_token(trace, layer, m)?;
    let alpha = lt.mean_attention_row(m);
    let v_m = lt.values.row(m);
    let vm_norm = norm(v_m);
    if vm_norm == 0.0 {
        return Err(CoreError::ZeroVector);
    }
    Ok(alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| a * dot(lt.values.row(i), v_m) / vm_norm)
        .collect())
}

/// All per-token criterion scores for one attention layer, bundled for
/// export. Intersection counts come from the FFN block that produced this
/// attention block's input, i.e. layer - 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionReport {
    pub layer: usize,
    pub reference_token: usize,
    pub attention: Vec<f64>,
    pub exact_projection: Vec<f64>,
    pub approx_projection: Vec<f64>,
    pub intersection_counts: Vec<usize>,
}

pub fn criterion_report(
    trace: &ActivationTrace,
    layer: usize,
    m: usize,
    core: &SentenceCoreSet,
) -> Result<CriterionReport> {
    if layer == 0 {
        return Err(CoreError::InvalidParam(
            "criterion report needs layer >= 1 (scores are matched against the upstream FFN)"
                .into(),
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
    let here = layer_and_token(trace, layer, m)?;
    if upstream.token_count() != here.token_count() {
        return Err(CoreError::InvalidParam(
            "token axis changed between layers; use an unpruned trace".into(),
        ));
    }
    let gammas: Vec<Vec<usize>> = upstream
        .ffn_activations
        .iter_rows()
        .map(activated_set)
        .collect();
    Ok(CriterionReport {
        layer,
        reference_token: m,
        attention: attention_criterion(trace, layer, m)?,
        exact_projection: exact_projection_criterion(trace, layer, m)?,
        approx_projection: approx_projection_criterion(trace, layer, m)?,
        intersection_counts: intersection_counts(&gammas, core),
    })
}

pub fn criterion_report_csv(report: &CriterionReport) -> String {
    let mut out = format!(
        "# schema cm.scores v{}\nlayer,token,attention,exact_projection,approx_projection,intersection\n",
        crate::sparsity::CSV_SCHEMA_VERSION
    );
    for i in 0..report.attention.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            report.layer,
            i,
            report.attention[i],
            report.exact_projection[i],
            report.approx_projection[i],
            report.intersection_counts[i],
        ));
    }
    out
}

/// Indices of the k largest scores, ties toward the lower index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// |top-k(a) ∩ top-k(b)| / k.
pub fn top_k_overlap(a: &[f64], b: &[f64], k: usize) -> f64 {
    let ta = top_k_indices(a, k);
    let tb = top_k_indices(b, k);
    let hit = ta.iter().filter(|i| tb.contains(i)).count();
    hit as f64 / k as f64
}
