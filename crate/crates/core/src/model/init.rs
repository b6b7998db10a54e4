//! Synthetic weight generation with controllable orthogonality.
//!
//! Every matrix is a convex mix `scale * ((1-m)*G + m*Q)` between an i.i.d.
//! Gaussian matrix `G` and a random semi-orthogonal matrix `Q` of matching
//! Frobenius scale. At `m = 1` the value/down/output projections are exactly
//! scaled-(semi-)orthogonal and the query/key pair shares its orthogonal
//! factor so `W_q W_k^T` is exactly a scaled identity. At `m = 0` all of
//! those properties are broken, which the validators use as a control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{CoreError, Result};
use crate::model::{LayerWeights, ModelConfig, Weights};
use crate::numerics::{householder_q, Matrix};

/// Standard normal via Box-Muller; deterministic given the rng stream.
fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gaussian_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| standard_normal(rng) * std).collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

/// Random matrix with orthonormal columns (rows >= cols) or orthonormal rows
/// (rows < cols), drawn from the QR of a Gaussian matrix.
fn random_semi_orthogonal(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Matrix {
    if rows >= cols {
        let g = gaussian_matrix(rng, rows, cols, 1.0);
        householder_q(&g).expect("rows >= cols")
    } else {
        let g = gaussian_matrix(rng, cols, rows, 1.0);
        householder_q(&g).expect("rows >= cols").transpose()
    }
}

/// Mix `scale * ((1-m) * G + m * Q)` with `G` normalized so both parts have
/// comparable Frobenius norm.
fn mixed_matrix(
    rng: &mut ChaCha20Rng,
    rows: usize,
    cols: usize,
    mix: f64,
    scale: f64,
) -> Matrix {
    let ortho = random_semi_orthogonal(rng, rows, cols);
    // ||Q||_F = sqrt(min(rows, cols)); entries with std 1/sqrt(max dim)
    // give the Gaussian part the same expected norm.
    let std = 1.0 / (rows.max(cols) as f64).sqrt();
    let gauss = gaussian_matrix(rng, rows, cols, std);
    let data = ortho
        .data()
        .iter()
        .zip(gauss.data())
        .map(|(q, g)| scale * ((1.0 - mix) * g + mix * q))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

/// Generate a full parameter set. Deterministic given `(config, seed, mix,
/// scale)`; the query/key pair is coupled so that `W_q W_k^T = scale^2 * I`
/// exactly at `mix = 1`.
pub fn init_synthetic(
    config: ModelConfig,
    seed: u64,
    orthogonality_mix: f64,
    scale: f64,
) -> Result<Weights> {
    config.validate()?;
    if !(0.0..=1.0).contains(&orthogonality_mix) {
        return Err(CoreError::InvalidParam(format!(
            "orthogonality_mix must be in [0, 1], got {orthogonality_mix}"
        )));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(CoreError::InvalidParam(format!(
            "scale must be positive and finite, got {scale}"
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = config.d_model;
    let m_ffn = config.d_ffn;
    let mix = orthogonality_mix;

    let embedding = gaussian_matrix(&mut rng, config.vocab_size, d, 1.0);

    let mut layers = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        // Shared orthogonal factor for the q/k pair.
        let qk_ortho = random_semi_orthogonal(&mut rng, d, d);
        let std = 1.0 / (d as f64).sqrt();
        let g_q = gaussian_matrix(&mut rng, d, d, std);
        let g_k = gaussian_matrix(&mut rng, d, d, std);
        let couple = |g: &Matrix| {
            let data = qk_ortho
                .data()
                .iter()
                .zip(g.data())
                .map(|(q, gv)| scale * ((1.0 - mix) * gv + mix * q))
                .collect();
            Matrix::from_vec(d, d, data).expect("sized by construction")
        };
        let w_q = couple(&g_q);
        let w_k = couple(&g_k);

        layers.push(LayerWeights {
            w_q,
            w_k,
            w_v: mixed_matrix(&mut rng, d, d, mix, scale),
            w_o: mixed_matrix(&mut rng, d, d, mix, scale),
            w_u: mixed_matrix(&mut rng, d, m_ffn, mix, scale),
            w_d: mixed_matrix(&mut rng, m_ffn, d, mix, scale),
            ln_attn_gain: vec![1.0; d],
            ln_attn_bias: vec![0.0; d],
            ln_ffn_gain: vec![1.0; d],
            ln_ffn_bias: vec![0.0; d],
        });
    }

    let weights = Weights {
        config,
        seed,
        orthogonality_mix,
        scale,
        embedding,
        layers,
        final_ln_gain: vec![1.0; d],
        final_ln_bias: vec![0.0; d],
    };
    weights.validate()?;
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{matmul_nt, orthogonality_deviation};

    #[test]
    fn fully_orthogonal_construction() {
        let w = init_synthetic(ModelConfig::toy(), 7, 1.0, 1.0).unwrap();
        for lw in &w.layers {
            assert!(orthogonality_deviation(&lw.w_v).unwrap() <= 1e-10);
            assert!(orthogonality_deviation(&lw.w_d).unwrap() <= 1e-10);
            assert!(orthogonality_deviation(&lw.w_o).unwrap() <= 1e-10);
            assert!(orthogonality_deviation(&lw.w_u).unwrap() <= 1e-10);
            // Coupled pair: W_q W_k^T = theta * I.
            let p = matmul_nt(&lw.w_q, &lw.w_k).unwrap();
            let n = p.rows();
            let theta = (0..n).map(|i| p.get(i, i)).sum::<f64>() / n as f64;
            let mut dist = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let t = if i == j { theta } else { 0.0 };
                    dist += (p.get(i, j) - t) * (p.get(i, j) - t);
                }
            }
            let rel = dist.sqrt() / (theta.abs() * (n as f64).sqrt());
            assert!(rel <= 1e-10, "qk product deviation {rel}");
        }
    }

    #[test]
    fn gaussian_construction_is_far_from_orthogonal() {
        // Marchenko-Pastur spread: Gaussian Grams deviate strongly for d >= 32.
        for seed in [1, 2, 3] {
            let w = init_synthetic(ModelConfig::toy(), seed, 0.0, 1.0).unwrap();
            for lw in &w.layers {
                assert!(orthogonality_deviation(&lw.w_d).unwrap() > 0.1);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = init_synthetic(ModelConfig::toy(), 11, 0.5, 2.0).unwrap();
        let b = init_synthetic(ModelConfig::toy(), 11, 0.5, 2.0).unwrap();
        assert_eq!(a, b);
        let c = init_synthetic(ModelConfig::toy(), 12, 0.5, 2.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_validation() {
        assert!(init_synthetic(ModelConfig::toy(), 1, 1.5, 1.0).is_err());
        assert!(init_synthetic(ModelConfig::toy(), 1, -0.1, 1.0).is_err());
        assert!(init_synthetic(ModelConfig::toy(), 1, 0.5, 0.0).is_err());
        assert!(init_synthetic(ModelConfig::toy(), 1, 0.5, f64::NAN).is_err());
    }
}
