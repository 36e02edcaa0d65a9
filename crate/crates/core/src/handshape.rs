//! Handshape bag-of-words: per-frame handshape probability vectors are quantized against
//! a shared codebook and each class keeps a smoothed categorical over codewords.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bow::{histogram, mean_log_likelihood, smoothed_categorical};
use crate::error::{Error, Result};
use crate::rng::rng_from;

pub const DEFAULT_CODEWORDS: usize = 32;
const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandshapeCodebook {
    pub centroids: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandshapeClassModel {
    pub phi: Vec<f64>,
}

/// How a handshape vector becomes a symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HandshapeQuantizer {
    Codebook(HandshapeCodebook),
    /// Most probable handshape index; the symbol set is the handshape vocabulary itself.
    Argmax { dim: usize },
}

impl HandshapeQuantizer {
    pub fn symbols(&self) -> usize {
        match self {
            HandshapeQuantizer::Codebook(cb) => cb.centroids.len(),
            HandshapeQuantizer::Argmax { dim } => *dim,
        }
    }

    pub fn quantize(&self, v: &[f64]) -> Result<usize> {
        match self {
            HandshapeQuantizer::Codebook(cb) => quantize_handshape(v, cb),
            HandshapeQuantizer::Argmax { dim } => {
                if v.len() != *dim {
                    return Err(dim_mismatch(v.len(), *dim));
                }
                let mut best = 0;
                for (i, x) in v.iter().enumerate() {
                    if *x > v[best] {
                        best = i;
                    }
                }
                Ok(best)
            }
        }
    }

    pub fn histogram(&self, frames: &[&[f64]]) -> Result<Vec<u64>> {
        let idx = frames
            .iter()
            .map(|v| self.quantize(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(histogram(idx, self.symbols()))
    }
}

fn dim_mismatch(got: usize, want: usize) -> Error {
    Error::InvalidInput(format!(
        "handshape vector has length {got}, codebook expects {want}"
    ))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid and its squared distance; ties go to the lowest index.
fn nearest(v: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn quantize_handshape(v: &[f64], cb: &HandshapeCodebook) -> Result<usize> {
    let dim = cb.centroids.first().map_or(0, Vec::len);
    if v.len() != dim {
        return Err(dim_mismatch(v.len(), dim));
    }
    Ok(nearest(v, &cb.centroids).0)
}

/// Result of a k-means run, with the inertia after every assignment step.
#[derive(Debug, Clone)]
pub struct CodebookFit {
    pub codebook: HandshapeCodebook,
    pub inertia_trace: Vec<f64>,
}

fn kmeans_pp_init(frames: &[&[f64]], c: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    let mut centroids = vec![frames[rng.random_range(0..frames.len())].to_vec()];
    let mut d2: Vec<f64> = frames.iter().map(|f| sq_dist(f, &centroids[0])).collect();
    while centroids.len() < c {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "only {} distinct handshape vectors for {c} codewords",
                centroids.len()
            )));
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, w) in d2.iter().enumerate() {
            if *w > 0.0 {
                pick = Some(i);
                if u < *w {
                    break;
                }
                u -= w;
            }
        }
        let next = frames[pick.expect("positive total implies a positive weight")].to_vec();
        for (d, f) in d2.iter_mut().zip(frames) {
            *d = d.min(sq_dist(f, &next));
        }
        centroids.push(next);
    }
    Ok(centroids)
}

/// Lloyd's k-means with k-means++ seeding. Deterministic given `seed`.
pub fn fit_codebook_traced(frames: &[&[f64]], c: usize, seed: u64) -> Result<CodebookFit> {
    if c == 0 {
        return Err(Error::InvalidInput("codebook needs at least one codeword".into()));
    }
    if frames.len() < c {
        return Err(Error::InvalidInput(format!(
            "{} frames are fewer than {c} codewords",
            frames.len()
        )));
    }
    let dim = frames[0].len();
    if let Some(f) = frames.iter().find(|f| f.len() != dim) {
        return Err(dim_mismatch(f.len(), dim));
    }
    let mut rng = rng_from(seed);
    let mut centroids = kmeans_pp_init(frames, c, &mut rng)?;
    let mut trace: Vec<f64> = Vec::new();

    for _ in 0..KMEANS_MAX_ITERS {
        let mut assign: Vec<(usize, f64)> =
            frames.par_iter().map(|f| nearest(f, &centroids)).collect();
        let inertia: f64 = assign.iter().map(|a| a.1).sum();
        let converged = match trace.last() {
            Some(&prev) => prev - inertia <= KMEANS_REL_TOL * prev,
            None => false,
        };
        trace.push(inertia);
        if converged || inertia == 0.0 {
            break;
        }

        let mut counts = vec![0usize; c];
        for a in &assign {
            counts[a.0] += 1;
        }
        // empty clusters take over the point farthest from its own centroid
        for j in 0..c {
            if counts[j] > 0 {
                continue;
            }
            let far = assign
                .iter()
                .enumerate()
                .filter(|(_, a)| counts[a.0] > 1)
                .max_by(|x, y| x.1 .1.total_cmp(&y.1 .1).then(y.0.cmp(&x.0)))
                .map(|(i, _)| i);
            if let Some(i) = far {
                counts[assign[i].0] -= 1;
                counts[j] = 1;
                assign[i] = (j, 0.0);
                centroids[j] = frames[i].to_vec();
            }
        }

        let mut sums = vec![vec![0.0; dim]; c];
        for (f, a) in frames.iter().zip(&assign) {
            for (s, x) in sums[a.0].iter_mut().zip(f.iter()) {
                *s += x;
            }
        }
        for (j, s) in sums.into_iter().enumerate() {
            if counts[j] > 0 {
                centroids[j] = s.into_iter().map(|x| x / counts[j] as f64).collect();
            }
        }
    }
    Ok(CodebookFit {
        codebook: HandshapeCodebook { centroids },
        inertia_trace: trace,
    })
}

pub fn fit_codebook(frames: &[&[f64]], c: usize, seed: u64) -> Result<HandshapeCodebook> {
    fit_codebook_traced(frames, c, seed).map(|f| f.codebook)
}

/// Pools codeword counts of a class's training samples into a smoothed categorical.
pub fn fit_handshape_model(
    samples: &[Vec<usize>],
    codewords: usize,
    alpha: f64,
) -> Result<HandshapeClassModel> {
    let mut counts = vec![0u64; codewords];
    for s in samples {
        for &i in s {
            if i >= codewords {
                return Err(Error::InvalidInput(format!(
                    "codeword {i} out of range for {codewords} codewords"
                )));
            }
            counts[i] += 1;
        }
    }
    Ok(HandshapeClassModel {
        phi: smoothed_categorical(&counts, alpha)?,
    })
}

pub fn handshape_log_prob_from_counts(counts: &[u64], m: &HandshapeClassModel) -> f64 {
    mean_log_likelihood(counts, &m.phi)
}

pub fn handshape_log_prob(
    frame_vectors: &[&[f64]],
    m: &HandshapeClassModel,
    quantizer: &HandshapeQuantizer,
) -> Result<f64> {
    Ok(handshape_log_prob_from_counts(
        &quantizer.histogram(frame_vectors)?,
        m,
    ))
}
