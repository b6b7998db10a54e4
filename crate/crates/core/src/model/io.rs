//! Portable weight file format.
//!
//! Little-endian binary: magic `CMW1`, a u32 format version, the model
//! config and generation provenance (seed, mix, scale), a 64-bit checksum of
//! the tensor payload, then every tensor as row-major f32 in declaration
//! order (embedding, per layer q/k/v/o/u/d plus norm vectors, final norm).
//!
//! File -> weights -> file round-trips are bit-exact. Saving quantizes f64
//! weights to f32 once; weights that came from a file are already
//! f32-representable, so their round-trip is the identity.

use std::fs;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::model::{LayerWeights, ModelConfig, Weights};
use crate::numerics::{ActivationKind, Matrix};

const MAGIC: &[u8; 4] = b"CMW1";
pub const FORMAT_VERSION: u32 = 1;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn push_matrix(payload: &mut Vec<u8>, m: &Matrix) {
    for &v in m.data() {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn push_vector(payload: &mut Vec<u8>, v: &[f64]) {
    for &x in v {
        payload.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CoreError::FormatError("file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let raw = self.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Matrix::from_vec(rows, cols, data)
    }

    fn vector(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn save_weights(weights: &Weights, path: &Path) -> Result<()> {
    let cfg = &weights.config;
    let mut payload = Vec::new();
    push_matrix(&mut payload, &weights.embedding);
    for lw in &weights.layers {
        push_matrix(&mut payload, &lw.w_q);
        push_matrix(&mut payload, &lw.w_k);
        push_matrix(&mut payload, &lw.w_v);
        push_matrix(&mut payload, &lw.w_o);
        push_matrix(&mut payload, &lw.w_u);
        push_matrix(&mut payload, &lw.w_d);
        push_vector(&mut payload, &lw.ln_attn_gain);
        push_vector(&mut payload, &lw.ln_attn_bias);
        push_vector(&mut payload, &lw.ln_ffn_gain);
        push_vector(&mut payload, &lw.ln_ffn_bias);
    }
    push_vector(&mut payload, &weights.final_ln_gain);
    push_vector(&mut payload, &weights.final_ln_bias);

    let mut out = Vec::with_capacity(payload.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.n_layers as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.d_model as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.d_ffn as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.n_heads as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.vocab_size as u32).to_le_bytes());
    out.push(match cfg.activation_kind {
        ActivationKind::Relu => 0,
        ActivationKind::Silu => 1,
    });
    out.extend_from_slice(&(cfg.max_seq_len as u32).to_le_bytes());
    out.extend_from_slice(&weights.seed.to_le_bytes());
    out.extend_from_slice(&weights.orthogonality_mix.to_le_bytes());
    out.extend_from_slice(&weights.scale.to_le_bytes());
    out.extend_from_slice(&fnv1a64(&payload).to_le_bytes());
    out.extend_from_slice(&payload);

    fs::write(path, out)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<Weights> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };

    if r.take(4)? != MAGIC {
        return Err(CoreError::FormatError("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CoreError::VersionError {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n_layers = r.u32()? as usize;
    let d_model = r.u32()? as usize;
    let d_ffn = r.u32()? as usize;
    let n_heads = r.u32()? as usize;
    let vocab_size = r.u32()? as usize;
    let activation_kind = match r.u8()? {
        0 => ActivationKind::Relu,
        1 => ActivationKind::Silu,
        other => {
            return Err(CoreError::FormatError(format!(
                "unknown activation tag {other}"
            )))
        }
    };
    let max_seq_len = r.u32()? as usize;
    let seed = r.u64()?;
    let orthogonality_mix = r.f64()?;
    let scale = r.f64()?;
    let checksum = r.u64()?;

    let payload = &buf[r.pos..];
    if fnv1a64(payload) != checksum {
        return Err(CoreError::ChecksumError);
    }

    let config = ModelConfig {
        n_layers,
        d_model,
        d_ffn,
        n_heads,
        vocab_size,
        activation_kind,
        max_seq_len,
    };
    config.validate()?;

    let embedding = r.matrix(vocab_size, d_model)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layers.push(LayerWeights {
            w_q: r.matrix(d_model, d_model)?,
            w_k: r.matrix(d_model, d_model)?,
            w_v: r.matrix(d_model, d_model)?,
            w_o: r.matrix(d_model, d_model)?,
            w_u: r.matrix(d_model, d_ffn)?,
            w_d: r.matrix(d_ffn, d_model)?,
            ln_attn_gain: r.vector(d_model)?,
            ln_attn_bias: r.vector(d_model)?,
            ln_ffn_gain: r.vector(d_model)?,
            ln_ffn_bias: r.vector(d_model)?,
        });
    }
    let final_ln_gain = r.vector(d_model)?;
    let final_ln_bias = r.vector(d_model)?;
    if r.pos != buf.len() {
        return Err(CoreError::FormatError("trailing bytes".into()));
    }

    let weights = Weights {
        config,
        seed,
        orthogonality_mix,
        scale,
        embedding,
        layers,
        final_ln_gain,
        final_ln_bias,
    };
    weights.validate()?;
    Ok(weights)
}
