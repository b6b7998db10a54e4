//! Order statistics and correlation measures.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Nearest-rank "top fraction" cutoff: the k-th largest value with
/// `k = ceil(rho * n)`. At least `k` elements are `>=` the returned value;
/// exactly `k` when no duplicates straddle the cutoff (callers break ties).
pub fn quantile_threshold(values: &[f64], rho: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(CoreError::EmptySet);
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(CoreError::InvalidParam(format!(
            "rho must be in (0, 1], got {rho}"
        )));
    }
    let k = top_count(values.len(), rho);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[k - 1])
}

/// `ceil(fraction * n)`, the selection size used by all top-fraction rules.
pub fn top_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize).clamp(1, n)
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

/// Ranks starting at 1; tied values share the mean of their rank span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub count: usize,
}

/// Equal-width bins over the range of `x`, with per-bin means of both axes.
/// Used for plot-ready summaries of score-vs-count scatter data.
pub fn binned_means(x: &[f64], y: &[f64], n_bins: usize) -> Vec<Bin> {
    if x.is_empty() || x.len() != y.len() || n_bins == 0 {
        return Vec::new();
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![Bin {
            lo,
            hi,
            mean_x: lo,
            mean_y: y.iter().sum::<f64>() / y.len() as f64,
            count: y.len(),
        }];
    }
    let width = (hi - lo) / n_bins as f64;
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); n_bins];
    for (&a, &b) in x.iter().zip(y) {
        let mut idx = ((a - lo) / width) as usize;
        if idx >= n_bins {
            idx = n_bins - 1;
        }
        sums[idx].0 += a;
        sums[idx].1 += b;
        sums[idx].2 += 1;
    }
    sums.iter()
        .enumerate()
        .filter(|(_, s)| s.2 > 0)
        .map(|(i, s)| Bin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            mean_x: s.0 / s.2 as f64,
            mean_y: s.1 / s.2 as f64,
            count: s.2,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(
            quantile_threshold(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.2).unwrap(),
            5.0
        );
        assert_eq!(
            quantile_threshold(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.4).unwrap(),
            4.0
        );
        // Duplicate maximum: cutoff lands on the tied value.
        assert_eq!(quantile_threshold(&[0.9, 0.9, 0.1], 0.34).unwrap(), 0.9);
    }

    #[test]
    fn quantile_permutation_invariant() {
        let a = quantile_threshold(&[3.0, 1.0, 5.0, 2.0, 4.0], 0.4).unwrap();
        let b = quantile_threshold(&[5.0, 4.0, 3.0, 2.0, 1.0], 0.4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_errors() {
        assert!(matches!(
            quantile_threshold(&[], 0.5),
            Err(CoreError::EmptySet)
        ));
        assert!(matches!(
            quantile_threshold(&[1.0], 0.0),
            Err(CoreError::InvalidParam(_))
        ));
        assert!(matches!(
            quantile_threshold(&[1.0], 1.5),
            Err(CoreError::InvalidParam(_))
        ));
    }

    #[test]
    fn pearson_known_values() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&x, &[5.0, 5.0, 5.0, 5.0]).is_none());
    }

    #[test]
    fn spearman_monotone_nonlinear() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 8.0, 27.0, 64.0, 125.0];
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_tie_handling() {
        let r = average_ranks(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn binned_means_partitions_all_points() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let bins = binned_means(&x, &y, 10);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 100);
        for b in &bins {
            assert!((b.mean_y - 2.0 * b.mean_x).abs() < 1e-9);
        }
    }
}
