//! Core-neuron extraction, intersection counting and core-token selection.
//!
//! Per token, the core neurons are the top-rho fraction of its positive FFN
//! activations. Per sentence, the core set is the top-beta fraction of
//! neurons by how many tokens carried them in their per-token core sets.
//! Tokens whose activated-neuron sets overlap the sentence core set above a
//! knee threshold survive pruning; everything else in the prunable span is
//! dropped.
//!
//! All selections are deterministic: ties break by higher activation mass,
//! then by lower index.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::{knee_threshold, top_count, Matrix};

/// Top-rho positively-activated neurons of one token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCoreSet {
    pub layer: usize,
    pub token: usize,
    /// Sorted neuron indices; every one has a positive activation.
    pub neuron_ids: Vec<usize>,
    /// True when the token had no positive activation at all.
    pub dead: bool,
}

/// How many tokens carried each neuron in their per-token core set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub layer: usize,
    pub counts: Vec<usize>,
}

/// The sentence-level core neurons: exactly `ceil(beta * d_ffn)` of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceCoreSet {
    pub layer: usize,
    pub neuron_ids: Vec<usize>,
}

impl SentenceCoreSet {
    pub fn contains(&self, neuron: usize) -> bool {
        self.neuron_ids.binary_search(&neuron).is_ok()
    }

    /// Membership bitmap of length `d_ffn` for O(1) lookups in hot loops.
    pub fn mask(&self, d_ffn: usize) -> Vec<bool> {
        let mut m = vec![false; d_ffn];
        for &n in &self.neuron_ids {
            m[n] = true;
        }
        m
    }
}

/// Outcome of core-token selection at the pruning layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreTokenSelection {
    pub layer: usize,
    /// Intersection count with the sentence core set, for every token.
    pub intersection_counts: Vec<usize>,
    /// Knee threshold; non-protected tokens survive iff count >= threshold.
    pub threshold: usize,
    /// Surviving token indices, sorted.
    pub kept: Vec<usize>,
    /// Tokens exempt from pruning, sorted.
    pub protected: Vec<usize>,
    /// Set when the count distribution was degenerate and all tokens were
    /// kept without a knee.
    pub degenerate: bool,
}

/// Positive-support set of one activation row.
pub fn activated_set(a_row: &[f64]) -> Vec<usize> {
    a_row
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(n, _)| n)
        .collect()
}

/// Top-rho positive activations of one token. Ties at the percentile cutoff
/// are trimmed by (higher activation, then lower index) until the size is
/// exactly `ceil(rho * |positives|)`. A token with no positive activation
/// yields an empty, `dead`-flagged set.
pub fn token_core_neurons(
    a_row: &[f64],
    rho: f64,
    layer: usize,
    token: usize,
) -> Result<TokenCoreSet> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(CoreError::InvalidParam(format!(
            "rho must be in (0, 1], got {rho}"
        )));
    }
    let mut positives: Vec<(usize, f64)> = a_row
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(n, &a)| (n, a))
        .collect();
    if positives.is_empty() {
        return Ok(TokenCoreSet {
            layer,
            token,
            neuron_ids: Vec::new(),
            dead: true,
        });
    }
    let k = top_count(positives.len(), rho);
    positives.sort_by(|(ni, ai), (nj, aj)| aj.total_cmp(ai).then(ni.cmp(nj)));
    let mut neuron_ids: Vec<usize> = positives[..k].iter().map(|(n, _)| *n).collect();
    neuron_ids.sort_unstable();
    Ok(TokenCoreSet {
        layer,
        token,
        neuron_ids,
        dead: false,
    })
}

/// Build the neuron frequency table over all tokens of one layer and select
/// the sentence core set: the `ceil(beta * d_ffn)` neurons with the largest
/// counts, ties broken by higher total positive activation mass across
/// tokens, then by lower index.
pub fn sentence_core_neurons(
    activations: &Matrix,
    rho: f64,
    beta: f64,
    layer: usize,
) -> Result<(FrequencyTable, SentenceCoreSet)> {
    if activations.rows() == 0 {
        return Err(CoreError::EmptySet);
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(CoreError::InvalidParam(format!(
            "beta must be in (0, 1], got {beta}"
        )));
    }
    let d_ffn = activations.cols();
    let mut counts = vec![0usize; d_ffn];
    let mut mass = vec![0.0f64; d_ffn];
    for (token, row) in activations.iter_rows().enumerate() {
        let core = token_core_neurons(row, rho, layer, token)?;
        for &n in &core.neuron_ids {
            counts[n] += 1;
        }
        for (m, &a) in mass.iter_mut().zip(row) {
            *m += a.max(0.0);
        }
    }

    let k = top_count(d_ffn, beta);
    let mut order: Vec<usize> = (0..d_ffn).collect();
    order.sort_by(|&i, &j| {
        counts[j]
            .cmp(&counts[i])
            .then(mass[j].total_cmp(&mass[i]))
            .then(i.cmp(&j))
    });
    let mut neuron_ids: Vec<usize> = order[..k].to_vec();
    neuron_ids.sort_unstable();

    Ok((
        FrequencyTable { layer, counts },
        SentenceCoreSet { layer, neuron_ids },
    ))
}

/// `counts[m] = |Gamma(x_m) ∩ core|` for every token.
pub fn intersection_counts(gammas: &[Vec<usize>], core: &SentenceCoreSet) -> Vec<usize> {
    gammas
        .iter()
        .map(|g| g.iter().filter(|&&n| core.contains(n)).count())
        .collect()
}

/// Select core tokens from intersection counts. The knee geometry uses only
/// non-protected tokens; protected tokens are always kept. A degenerate
/// (all-equal) count distribution keeps everything and sets the flag.
pub fn select_core_tokens(
    counts: &[usize],
    protected: &[usize],
    layer: usize,
) -> Result<CoreTokenSelection> {
    let n = counts.len();
    let mut is_protected = vec![false; n];
    for &p in protected {
        if p >= n {
            return Err(CoreError::InvalidParam(format!(
                "protected index {p} out of range for {n} tokens"
            )));
        }
        is_protected[p] = true;
    }
    let prunable_counts: Vec<usize> = (0..n)
        .filter(|&m| !is_protected[m])
        .map(|m| counts[m])
        .collect();

    let mut protected_sorted: Vec<usize> = (0..n).filter(|&m| is_protected[m]).collect();
    protected_sorted.sort_unstable();

    match knee_threshold(&prunable_counts) {
        Ok(knee) => {
            let kept: Vec<usize> = (0..n)
                .filter(|&m| is_protected[m] || counts[m] >= knee.threshold)
                .collect();
            Ok(CoreTokenSelection {
                layer,
                intersection_counts: counts.to_vec(),
                threshold: knee.threshold,
                kept,
                protected: protected_sorted,
                degenerate: false,
            })
        }
        Err(CoreError::DegenerateDistribution) => Ok(CoreTokenSelection {
            layer,
            intersection_counts: counts.to_vec(),
            threshold: 0,
            kept: (0..n).collect(),
            protected: protected_sorted,
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

/// Jaccard similarity of each prefix core set against the final one; 1.0
/// when both sides are empty.
pub fn core_set_stability(prefix_sets: &[SentenceCoreSet]) -> Result<Vec<f64>> {
    if prefix_sets.len() < 2 {
        return Err(CoreError::InvalidParam(
            "stability needs at least 2 sets".into(),
        ));
    }
    let last = &prefix_sets[prefix_sets.len() - 1];
    Ok(prefix_sets.iter().map(|s| jaccard(s, last)).collect())
}

fn jaccard(a: &SentenceCoreSet, b: &SentenceCoreSet) -> f64 {
    let inter = a.neuron_ids.iter().filter(|&&n| b.contains(n)).count();
    let union = a.neuron_ids.len() + b.neuron_ids.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Schema version embedded in the CSV exports below.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Frequency table as CSV (`layer,id,count,kept`), kept meaning membership
/// in the sentence core set.
pub fn frequency_table_csv(freq: &FrequencyTable, core: &SentenceCoreSet) -> String {
    let mut out = format!("# schema cm.freq v{CSV_SCHEMA_VERSION}\nlayer,id,count,kept\n");
    for (n, &c) in freq.counts.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            freq.layer,
            n,
            c,
            u8::from(core.contains(n))
        ));
    }
    out
}

/// Token selection as CSV (`layer,id,count,kept`).
pub fn selection_csv(sel: &CoreTokenSelection) -> String {
    let mut out = format!("# schema cm.selection v{CSV_SCHEMA_VERSION}\nlayer,id,count,kept\n");
    for (m, &c) in sel.intersection_counts.iter().enumerate() {
        let kept = sel.kept.binary_search(&m).is_ok();
        out.push_str(&format!("{},{},{},{}\n", sel.layer, m, c, u8::from(kept)));
    }
    out
}
