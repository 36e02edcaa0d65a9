//! Smoothed categorical distributions over quantized symbols, shared by the direction and
//! handshape bag-of-words factors.

use crate::error::{Error, Result};

/// `(count_i + alpha) / (total + alpha * len)`.
pub fn smoothed_categorical(counts: &[u64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!(
            "smoothing alpha must be > 0, got {alpha}"
        )));
    }
    let total: u64 = counts.iter().sum();
    let denom = total as f64 + alpha * counts.len() as f64;
    Ok(counts.iter().map(|&c| (c as f64 + alpha) / denom).collect())
}

/// Per-symbol mean log-likelihood `(1/n) Σ count_i ln p_i`; 0 when there are no symbols.
///
/// Working from a histogram makes the value independent of symbol order, bit for bit.
pub fn mean_log_likelihood(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (&c, &p) in counts.iter().zip(probs) {
        if c > 0 {
            acc += c as f64 * p.ln();
        }
    }
    acc / n as f64
}

pub fn histogram(symbols: impl IntoIterator<Item = usize>, bins: usize) -> Vec<u64> {
    let mut h = vec![0u64; bins];
    for s in symbols {
        h[s] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_arithmetic() {
        let p = smoothed_categorical(&[4, 0], 1.0).unwrap();
        assert_eq!(p, vec![5.0 / 6.0, 1.0 / 6.0]);
        assert!(smoothed_categorical(&[1], 0.0).is_err());
    }

    #[test]
    fn empty_histogram_scores_zero() {
        assert_eq!(mean_log_likelihood(&[0, 0, 0], &[0.2, 0.3, 0.5]), 0.0);
    }
}
