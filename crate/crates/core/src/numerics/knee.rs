//! Knee detection on sorted count curves.
//!
//! The threshold is the count at the point of maximum perpendicular distance
//! from the chord joining the endpoints of the descending-sorted curve. Raw
//! (index, count) coordinates are used without normalization.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Knee {
    /// Count value at the knee; callers keep items with count >= threshold.
    pub threshold: usize,
    /// Index of the knee in the descending-sorted curve.
    pub knee_index: usize,
}

/// Locate the knee of a count distribution. Counts are sorted descending
/// internally, so the result is invariant under permutation of the input.
/// Ties in distance break toward the smaller sorted index.
pub fn knee_threshold(counts: &[usize]) -> Result<Knee> {
    if counts.len() < 3 {
        return Err(CoreError::TooFewPoints(counts.len()));
    }
    let first = counts[0];
    if counts.iter().all(|&c| c == first) {
        return Err(CoreError::DegenerateDistribution);
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));

    let m = sorted.len();
    let c0 = sorted[0] as f64;
    let c_last = sorted[m - 1] as f64;
    let dx = (m - 1) as f64;
    let dy = c_last - c0;

    // Perpendicular distance to the chord is |dx*(c_i - c0) - dy*i| / len;
    // the shared denominator never changes the argmax, so compare the
    // cross-product magnitudes directly. For integer counts these are exact
    // in f64, making the argmax reproducible against integer oracles.
    let mut best_idx = 0;
    let mut best_cross = -1.0;
    for (i, &c) in sorted.iter().enumerate() {
        let cross = (dx * (c as f64 - c0) - dy * i as f64).abs();
        if cross > best_cross {
            best_cross = cross;
            best_idx = i;
        }
    }
    Ok(Knee {
        threshold: sorted[best_idx],
        knee_index: best_idx,
    })
}
