//! Movement factor: a Gaussian over the amount of movement, a bag-of-words model over
//! quantized inter-frame directions, and the gate that drops the direction term for
//! classes that barely move.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bow::{histogram, mean_log_likelihood, smoothed_categorical};
use crate::dataset::Point2;
use crate::error::{Error, Result};

pub const DEFAULT_DIRECTION_BINS: usize = 16;
pub const DEFAULT_MIN_DISPLACEMENT: f64 = 0.2;
pub const DEFAULT_SIGMA_FLOOR: f64 = 0.1;
/// Classes whose mean amount of movement does not exceed this ignore trajectory (cm).
pub const DEFAULT_GATE_THRESHOLD_CM: f64 = 5.0;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmountModel {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryClassModel {
    pub theta: Vec<f64>,
}

impl TrajectoryClassModel {
    pub fn bins(&self) -> usize {
        self.theta.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovementGate {
    pub active: bool,
}

/// Largest Euclidean distance between any two positions of the track.
pub fn amount_of_movement(track: &[Point2]) -> Result<f64> {
    if track.is_empty() {
        return Err(Error::InvalidInput("amount of movement of an empty track".into()));
    }
    let mut best = 0.0f64;
    for (i, a) in track.iter().enumerate() {
        for b in &track[i + 1..] {
            best = best.max(a.dist(*b));
        }
    }
    Ok(best)
}

pub fn fit_amount_model(amounts: &[f64], sigma_floor: f64) -> Result<AmountModel> {
    if amounts.is_empty() {
        return Err(Error::InvalidInput("cannot fit an amount model to no samples".into()));
    }
    let n = amounts.len() as f64;
    let mu = amounts.iter().sum::<f64>() / n;
    let var = amounts.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / n;
    if !(mu.is_finite() && var.is_finite()) {
        return Err(Error::Numeric("amount model has non-finite parameters".into()));
    }
    Ok(AmountModel {
        mu,
        sigma: var.sqrt().max(sigma_floor),
    })
}

pub fn amount_log_prob(x_am: f64, m: &AmountModel) -> f64 {
    let z = (x_am - m.mu) / m.sigma;
    -0.5 * (2.0 * PI).ln() - m.sigma.ln() - 0.5 * z * z
}

/// Unit vectors of successive displacements whose length is at least `min_displacement`.
/// Zero-length displacements are always skipped.
pub fn extract_directions(track: &[Point2], min_displacement: f64) -> Vec<Point2> {
    track
        .windows(2)
        .filter_map(|w| {
            let d = w[1] - w[0];
            let len = d.norm();
            (len > 0.0 && len >= min_displacement).then(|| d * (1.0 / len))
        })
        .collect()
}

/// Bin whose center angle `2πi/D` is nearest to the direction of `v`.
pub fn quantize_direction(v: Point2, bins: usize) -> Result<usize> {
    if bins == 0 {
        return Err(Error::InvalidInput("direction bin count must be >= 1".into()));
    }
    if (v.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "direction ({}, {}) is not a unit vector",
            v.x, v.y
        )));
    }
    let mut angle = v.y.atan2(v.x);
    if angle < 0.0 {
        angle += 2.0 * PI;
    }
    let width = 2.0 * PI / bins as f64;
    Ok(((angle + 0.5 * width) / width).floor() as usize % bins)
}

pub fn direction_histogram(directions: &[Point2], bins: usize) -> Result<Vec<u64>> {
    let idx = directions
        .iter()
        .map(|d| quantize_direction(*d, bins))
        .collect::<Result<Vec<_>>>()?;
    Ok(histogram(idx, bins))
}

/// Pools the directions of all training samples of a class into a smoothed categorical.
pub fn fit_trajectory_model(
    direction_lists: &[Vec<Point2>],
    bins: usize,
    alpha: f64,
) -> Result<TrajectoryClassModel> {
    if bins < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 direction bins, got {bins}"
        )));
    }
    let mut counts = vec![0u64; bins];
    for list in direction_lists {
        for (c, h) in counts.iter_mut().zip(direction_histogram(list, bins)?) {
            *c += h;
        }
    }
    Ok(TrajectoryClassModel {
        theta: smoothed_categorical(&counts, alpha)?,
    })
}

/// Mean per-direction log-likelihood of a direction histogram.
pub fn trajectory_log_prob_from_counts(counts: &[u64], m: &TrajectoryClassModel) -> f64 {
    mean_log_likelihood(counts, &m.theta)
}

pub fn trajectory_log_prob(
    sample_directions: &[Point2],
    m: &TrajectoryClassModel,
    bins: usize,
) -> Result<f64> {
    if bins != m.bins() {
        return Err(Error::InvalidInput(format!(
            "model has {} bins, asked to score with {bins}",
            m.bins()
        )));
    }
    Ok(trajectory_log_prob_from_counts(
        &direction_histogram(sample_directions, bins)?,
        m,
    ))
}

pub fn compute_movement_gate(m: &AmountModel, threshold: f64) -> MovementGate {
    MovementGate {
        active: m.mu > threshold,
    }
}

/// Movement factor with a precomputed trajectory term: the trajectory term only counts when
/// the gate is active.
pub fn gated_movement(trajectory_term: f64, x_am: f64, amount: &AmountModel, gate: MovementGate) -> f64 {
    let am = amount_log_prob(x_am, amount);
    if gate.active {
        trajectory_term + am
    } else {
        am
    }
}

pub fn movement_log_prob(
    sample_directions: &[Point2],
    x_am: f64,
    trajectory: &TrajectoryClassModel,
    amount: &AmountModel,
    gate: MovementGate,
) -> Result<f64> {
    let traj = if gate.active {
        trajectory_log_prob(sample_directions, trajectory, trajectory.bins())?
    } else {
        0.0
    };
    Ok(gated_movement(traj, x_am, amount, gate))
}
