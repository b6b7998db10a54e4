use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numerics::Bin;

/// Pass thresholds for the validator suite. All statistical claims are
/// tested as correlation/rank statements, never as literal linear laws, and
/// every threshold is reported alongside the measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidatorConfig {
    /// Below this many samples a validator reports `Insufficient`.
    pub min_samples: usize,
    /// Max normalized Gram deviation for "approximately orthogonal".
    pub obs1_max_deviation: f64,
    /// Min Pearson r between activation angles and co-activation counts.
    pub obs2_min_pearson: f64,
    /// Min Spearman r between projection scores and hidden-state angles.
    pub insight1_min_spearman: f64,
    /// Min Pearson r between FFN-output angles and co-activation counts.
    pub insight2_min_pearson: f64,
    /// Min Spearman r between projection scores and core intersections.
    pub matching_min_spearman: f64,
    /// Min top-16 overlap between the two rankings.
    pub matching_min_top16_overlap: f64,
    /// Max |r| tolerated for permuted-null controls.
    pub null_max_abs_r: f64,
    /// Angle-preservation tolerance under a scaled-orthogonal down
    /// projection.
    pub angle_tolerance: f64,
    pub n_bins: usize,
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        ValidatorConfig {
            min_samples: 30,
            obs1_max_deviation: 0.05,
            obs2_min_pearson: 0.8,
            insight1_min_spearman: 0.6,
            insight2_min_pearson: 0.8,
            matching_min_spearman: 0.6,
            matching_min_top16_overlap: 0.6,
            null_max_abs_r: 0.15,
            angle_tolerance: 1e-9,
            n_bins: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Too few samples or undefined variance; no pass/fail claim is made.
    Insufficient,
}

/// Outcome of one validator: measured correlations, the threshold they were
/// judged against, binned means for plotting, and free-form measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub name: String,
    pub layer: Option<usize>,
    pub pearson_r: Option<f64>,
    pub spearman_r: Option<f64>,
    pub sample_count: usize,
    pub threshold: f64,
    pub verdict: Verdict,
    pub bins: Vec<Bin>,
    pub details: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ValidationSummary {
    pub fn new(name: &str) -> Self {
        ValidationSummary {
            name: name.to_string(),
            layer: None,
            pearson_r: None,
            spearman_r: None,
            sample_count: 0,
            threshold: 0.0,
            verdict: Verdict::Insufficient,
            bins: Vec::new(),
            details: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}
