//! Deterministic prompt construction for runs and validation.

use corematch::error::{CoreError, Result};

/// Seeded xorshift token stream; deterministic across platforms.
pub fn random_prompt(len: usize, seed: u64, vocab: usize) -> Vec<u32> {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
    (0..len)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % vocab as u64) as u32
        })
        .collect()
}

/// The standard analysis prompt, 34 tokens: a majority cluster of id 7
/// (23 occurrences including the final token) interleaved with 11
/// spread-out minority ids. Sustained repetition gives the input the stable
/// semantics the core-set predictability argument needs. Requires
/// vocab >= 256.
pub fn clustered_prompt(vocab: usize) -> Result<Vec<u32>> {
    if vocab < 256 {
        return Err(CoreError::InvalidParam(
            "clustered preset prompt needs vocab >= 256".into(),
        ));
    }
    let minors: Vec<u32> = (0..13).map(|i| 20 + i * 9).collect();
    let mut prompt = Vec::new();
    let mut mi = 0;
    for i in 0..(20 + minors.len()) {
        if i % 3 == 2 && mi < minors.len() {
            prompt.push(minors[mi]);
            mi += 1;
        } else {
            prompt.push(7);
        }
    }
    prompt.push(7);
    Ok(prompt)
}

pub fn parse_prompt_ids(spec: &str) -> Result<Vec<u32>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| CoreError::InvalidParam(format!("bad token id '{s}'")))
        })
        .collect()
}

/// `start:end` (half-open).
pub fn parse_span(spec: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 2 {
        return Err(CoreError::InvalidParam(format!(
            "span must be start:end, got '{spec}'"
        )));
    }
    let start = parts[0]
        .trim()
        .parse()
        .map_err(|_| CoreError::InvalidParam(format!("bad span start '{}'", parts[0])))?;
    let end = parts[1]
        .trim()
        .parse()
        .map_err(|_| CoreError::InvalidParam(format!("bad span end '{}'", parts[1])))?;
    Ok((start, end))
}
