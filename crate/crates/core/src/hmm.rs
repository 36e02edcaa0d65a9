//! Left-to-right HMMs with skip transitions and diagonal Gaussian-mixture emissions.
//!
//! State `i` may move to `i`, `i + 1` or `i + 2`; every sequence starts in state 0.
//! Likelihoods are computed in log space throughout.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::handshape::fit_codebook;
use crate::rng::derive_seed;

/// Relative slack allowed on a log-likelihood decrease between EM iterations.
pub const EM_MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmmConfig {
    pub num_states: usize,
    pub mixture_components: usize,
    pub variance_floor: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            num_states: 4,
            mixture_components: 1,
            variance_floor: 1e-4,
            max_iters: 50,
            tol: 1e-4,
        }
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl DiagGmm {
    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn component_log_density(&self, m: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xi, mu), var) in x.iter().zip(&self.means[m]).zip(&self.variances[m]) {
            let d = xi - mu;
            acc += (2.0 * PI * var).ln() + d * d / var;
        }
        -0.5 * acc
    }

    /// `ln w_m + ln N(x; μ_m, diag σ²_m)` for every component.
    fn weighted_log_densities(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for m in 0..self.weights.len() {
            out.push(self.weights[m].ln() + self.component_log_density(m, x));
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.weights.len());
        self.weighted_log_densities(x, &mut buf);
        log_sum_exp(&buf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftRightHmm {
    pub num_states: usize,
    /// Initial state distribution (all mass on state 0).
    pub initial: Vec<f64>,
    /// Row-stochastic transition matrix; entries outside the skip band are exactly zero.
    pub transitions: Vec<Vec<f64>>,
    pub emissions: Vec<DiagGmm>,
}

/// Trajectory and handshape sequence models for one (class, hand).
/// The trajectory model is absent when no training sample of the class produced a direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmClassModel {
    pub trajectory_hmm: Option<LeftRightHmm>,
    pub handshape_hmm: LeftRightHmm,
}

pub fn transition_allowed(i: usize, j: usize) -> bool {
    j >= i && j - i <= 2
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl LeftRightHmm {
    pub fn dim(&self) -> usize {
        self.emissions[0].dim()
    }

    fn log_transitions(&self) -> Vec<Vec<f64>> {
        self.transitions
            .iter()
            .map(|row| row.iter().map(|p| p.ln()).collect())
            .collect()
    }

    fn log_initial(&self) -> Vec<f64> {
        self.initial.iter().map(|p| p.ln()).collect()
    }

    fn emission_table(&self, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
        seq.iter()
            .map(|x| self.emissions.iter().map(|g| g.log_density(x)).collect())
            .collect()
    }

    fn check_dims(&self, seq: &[Vec<f64>]) -> Result<()> {
        let dim = self.dim();
        if let Some(x) = seq.iter().find(|x| x.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "observation of dimension {} for an HMM over dimension {dim}",
                x.len()
            )));
        }
        Ok(())
    }
}

fn band_uniform_transitions(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let allowed = (i..n).filter(|&j| transition_allowed(i, j)).count() as f64;
            (0..n)
                .map(|j| if transition_allowed(i, j) { 1.0 / allowed } else { 0.0 })
                .collect()
        })
        .collect()
}

fn mean_and_variance(frames: &[&[f64]], floor: f64) -> (Vec<f64>, Vec<f64>) {
    let dim = frames[0].len();
    let n = frames.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in frames {
        for (m, x) in mean.iter_mut().zip(f.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for f in frames {
        for ((v, x), m) in var.iter_mut().zip(f.iter()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v = (*v / n).max(floor));
    (mean, var)
}

fn init_state_gmm(frames: &[&[f64]], cfg: &HmmConfig, seed: u64) -> DiagGmm {
    let m = cfg.mixture_components;
    let (mean, var) = mean_and_variance(frames, cfg.variance_floor);
    if m > 1 {
        if let Ok(cb) = fit_codebook(frames, m, seed) {
            let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); m];
            for f in frames {
                let mut best = (0, f64::INFINITY);
                for (k, c) in cb.centroids.iter().enumerate() {
                    let d: f64 = f.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.1 {
                        best = (k, d);
                    }
                }
                groups[best.0].push(f);
            }
            if groups.iter().all(|g| !g.is_empty()) {
                let n = frames.len() as f64;
                let mut gmm = DiagGmm {
                    weights: Vec::new(),
                    means: Vec::new(),
                    variances: Vec::new(),
                };
                for g in groups {
                    let (mu, v) = mean_and_variance(&g, cfg.variance_floor);
                    gmm.weights.push(g.len() as f64 / n);
                    gmm.means.push(mu);
                    gmm.variances.push(v);
                }
                return gmm;
            }
        }
    }
    // one component, or too few distinct frames to split: identical components
    DiagGmm {
        weights: vec![1.0 / m as f64; m],
        means: vec![mean; m],
        variances: vec![var; m],
    }
}

/// Segmental initialization: each sequence is cut into `num_states` equal parts and
/// part `j` seeds the emission of state `j`. Transitions start uniform over the skip band.
pub fn init_left_right(seqs: &[Vec<Vec<f64>>], cfg: &HmmConfig, seed: u64) -> Result<LeftRightHmm> {
    if cfg.num_states == 0 {
        return Err(Error::InvalidInput("an HMM needs at least one state".into()));
    }
    if !(1..=3).contains(&cfg.mixture_components) {
        return Err(Error::InvalidInput(format!(
            "mixture components must be 1..=3, got {}",
            cfg.mixture_components
        )));
    }
    let all: Vec<&[f64]> = seqs.iter().flatten().map(Vec::as_slice).collect();
    let dim = all.first().map_or(0, |f| f.len());
    if dim == 0 {
        return Err(Error::InvalidInput(
            "cannot initialize an HMM without observations of positive dimension".into(),
        ));
    }
    if all.iter().any(|f| f.len() != dim) {
        return Err(Error::InvalidInput("observations differ in dimension".into()));
    }
    let n = cfg.num_states;
    let mut per_state: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
    for seq in seqs {
        let t_len = seq.len();
        for (t, x) in seq.iter().enumerate() {
            per_state[t * n / t_len].push(x);
        }
    }
    let emissions = per_state
        .iter()
        .enumerate()
        .map(|(j, frames)| {
            let frames = if frames.is_empty() { &all } else { frames };
            init_state_gmm(frames, cfg, derive_seed(seed, j as u64))
        })
        .collect();
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    Ok(LeftRightHmm {
        num_states: n,
        initial,
        transitions: band_uniform_transitions(n),
        emissions,
    })
}

fn forward_table(log_init: &[f64], log_a: &[Vec<f64>], emis: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = log_init.len();
    let mut alpha = Vec::with_capacity(emis.len());
    alpha.push((0..n).map(|j| log_init[j] + emis[0][j]).collect::<Vec<_>>());
    let mut buf = vec![0.0; n];
    for b in &emis[1..] {
        let prev = alpha.last().unwrap();
        let row = (0..n)
            .map(|j| {
                for i in 0..n {
                    buf[i] = prev[i] + log_a[i][j];
                }
                log_sum_exp(&buf) + b[j]
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

fn backward_table(log_a: &[Vec<f64>], emis: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = log_a.len();
    let t_len = emis.len();
    let mut beta = vec![vec![0.0; n]; t_len];
    let mut buf = vec![0.0; n];
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            for j in 0..n {
                buf[j] = log_a[i][j] + emis[t + 1][j] + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&buf);
        }
    }
    beta
}

/// `ln P(seq | h)` by the forward recursion.
pub fn forward_log_likelihood(seq: &[Vec<f64>], h: &LeftRightHmm) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::InvalidInput("forward pass over an empty sequence".into()));
    }
    h.check_dims(seq)?;
    let alpha = forward_table(&h.log_initial(), &h.log_transitions(), &h.emission_table(seq));
    Ok(log_sum_exp(alpha.last().unwrap()))
}

/// Forward log-likelihood divided by the sequence length; 0 for an empty sequence.
pub fn per_frame_log_likelihood(seq: &[Vec<f64>], h: &LeftRightHmm) -> Result<f64> {
    if seq.is_empty() {
        return Ok(0.0);
    }
    Ok(forward_log_likelihood(seq, h)? / seq.len() as f64)
}

/// Multi-sequence Baum-Welch restricted to the skip band. The returned trace holds the
/// total log-likelihood of every evaluated parameter set, the last entry belonging to the
/// returned model.
pub fn baum_welch(
    seqs: &[Vec<Vec<f64>>],
    mut h: LeftRightHmm,
    cfg: &HmmConfig,
) -> Result<(LeftRightHmm, Vec<f64>)> {
    let seqs: Vec<&Vec<Vec<f64>>> = seqs.iter().filter(|s| !s.is_empty()).collect();
    if seqs.is_empty() {
        return Err(Error::InvalidInput("Baum-Welch needs a non-empty sequence".into()));
    }
    for s in &seqs {
        h.check_dims(s)?;
    }
    let n = h.num_states;
    let m = h.emissions[0].weights.len();
    let dim = h.dim();
    let mut trace: Vec<f64> = Vec::new();
    let mut comp = Vec::with_capacity(m);

    for iter in 0..=cfg.max_iters {
        let log_a = h.log_transitions();
        let log_init = h.log_initial();

        // accumulators
        let mut xi_sum = vec![vec![0.0; n]; n];
        let mut occ = vec![vec![0.0; m]; n];
        let mut mean_acc = vec![vec![vec![0.0; dim]; m]; n];
        let mut sq_acc = vec![vec![vec![0.0; dim]; m]; n];
        let mut total_ll = 0.0;

        for seq in &seqs {
            let emis = h.emission_table(seq);
            let alpha = forward_table(&log_init, &log_a, &emis);
            let beta = backward_table(&log_a, &emis);
            let ll = log_sum_exp(alpha.last().unwrap());
            if !ll.is_finite() {
                return Err(Error::Numeric(format!(
                    "sequence log-likelihood is {ll} during Baum-Welch"
                )));
            }
            total_ll += ll;
            for t in 0..seq.len() {
                for j in 0..n {
                    let gamma = (alpha[t][j] + beta[t][j] - ll).exp();
                    if gamma == 0.0 {
                        continue;
                    }
                    h.emissions[j].weighted_log_densities(&seq[t], &mut comp);
                    let lse = log_sum_exp(&comp);
                    for (k, c) in comp.iter().enumerate() {
                        let r = gamma * (c - lse).exp();
                        occ[j][k] += r;
                        for (d, x) in seq[t].iter().enumerate() {
                            mean_acc[j][k][d] += r * x;
                            sq_acc[j][k][d] += r * x * x;
                        }
                    }
                }
                if t + 1 < seq.len() {
                    for i in 0..n {
                        for j in i..n.min(i + 3) {
                            xi_sum[i][j] += (alpha[t][i]
                                + log_a[i][j]
                                + emis[t + 1][j]
                                + beta[t + 1][j]
                                - ll)
                                .exp();
                        }
                    }
                }
            }
        }

        if let Some(&prev) = trace.last() {
            if total_ll < prev - EM_MONOTONE_SLACK * prev.abs().max(1.0) {
                return Err(Error::Numeric(format!(
                    "Baum-Welch log-likelihood decreased from {prev} to {total_ll}"
                )));
            }
        }
        let converged = trace
            .last()
            .is_some_and(|&prev| total_ll - prev < cfg.tol * prev.abs());
        trace.push(total_ll);
        if converged || iter == cfg.max_iters {
            break;
        }

        // M-step; the initial distribution stays pinned to state 0
        for i in 0..n {
            let row: f64 = xi_sum[i].iter().sum();
            if row > 0.0 {
                for j in 0..n {
                    h.transitions[i][j] = if transition_allowed(i, j) {
                        xi_sum[i][j] / row
                    } else {
                        0.0
                    };
                }
            }
        }
        for j in 0..n {
            let state_occ: f64 = occ[j].iter().sum();
            if state_occ <= 1e-300 {
                continue;
            }
            let g = &mut h.emissions[j];
            for k in 0..m {
                let o = occ[j][k];
                g.weights[k] = o / state_occ;
                if o <= 1e-10 {
                    continue;
                }
                for d in 0..dim {
                    let mu = mean_acc[j][k][d] / o;
                    let var = sq_acc[j][k][d] / o - mu * mu;
                    g.means[k][d] = mu;
                    g.variances[k][d] = var.max(cfg.variance_floor);
                }
            }
        }
    }
    Ok((h, trace))
}

/// Initializes and trains one HMM on `seqs`.
pub fn train_hmm(seqs: &[Vec<Vec<f64>>], cfg: &HmmConfig, seed: u64) -> Result<(LeftRightHmm, Vec<f64>)> {
    let seqs: Vec<Vec<Vec<f64>>> = seqs.iter().filter(|s| !s.is_empty()).cloned().collect();
    let init = init_left_right(&seqs, cfg, seed)?;
    baum_welch(&seqs, init, cfg)
}
