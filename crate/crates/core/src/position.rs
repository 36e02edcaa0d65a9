//! Per-class 2D Gaussians over the first and last hand positions, plus a mixture/BIC
//! utility for checking whether one component per class is enough.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Point2;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

pub const DEFAULT_REG_EPSILON: f64 = 1e-4;

/// Covariances whose determinant falls below this are treated as singular.
pub const MIN_COV_DET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2D {
    pub mean: Point2,
    /// Row-major symmetric 2x2 covariance, cm².
    pub cov: [[f64; 2]; 2],
}

impl Gaussian2D {
    pub fn det(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionClassModel {
    pub fp: Gaussian2D,
    pub lp: Gaussian2D,
}

/// Mean and population covariance of `points`, with `reg_epsilon` added to the diagonal.
pub fn fit_gaussian(points: &[Point2], reg_epsilon: f64) -> Result<Gaussian2D> {
    if points.is_empty() {
        return Err(Error::InvalidInput("cannot fit a Gaussian to no points".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (sxx, sxy, syy) = (sxx / n + reg_epsilon, sxy / n, syy / n + reg_epsilon);
    if ![mx, my, sxx, sxy, syy].iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric(
            "position Gaussian has non-finite parameters (coordinates too large)".into(),
        ));
    }
    Ok(Gaussian2D {
        mean: Point2::new(mx, my),
        cov: [[sxx, sxy], [sxy, syy]],
    })
}

pub fn fit_position_model(
    first_positions: &[Point2],
    last_positions: &[Point2],
    reg_epsilon: f64,
) -> Result<PositionClassModel> {
    if first_positions.len() != last_positions.len() {
        return Err(Error::InvalidInput(format!(
            "{} first positions but {} last positions",
            first_positions.len(),
            last_positions.len()
        )));
    }
    Ok(PositionClassModel {
        fp: fit_gaussian(first_positions, reg_epsilon)?,
        lp: fit_gaussian(last_positions, reg_epsilon)?,
    })
}

/// `log N(p; mean, cov)` via the closed-form 2x2 inverse.
pub fn log_gaussian_pdf(p: Point2, g: &Gaussian2D) -> Result<f64> {
    let det = g.det();
    if !(det >= MIN_COV_DET) {
        return Err(Error::Numeric(format!(
            "covariance determinant {det:e} is below {MIN_COV_DET:e}"
        )));
    }
    let [[a, b], [_, d]] = g.cov;
    let (dx, dy) = (p.x - g.mean.x, p.y - g.mean.y);
    let quad = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    Ok(-(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * quad)
}

/// First-position density at the first point plus last-position density at the last point.
pub fn position_log_prob(
    track_first: Point2,
    track_last: Point2,
    m: &PositionClassModel,
) -> Result<f64> {
    Ok(log_gaussian_pdf(track_first, &m.fp)? + log_gaussian_pdf(track_last, &m.lp)?)
}

// ---------------------------------------------------------------------------
// Mixture modality analysis
// ---------------------------------------------------------------------------

const EM_RESTARTS: usize = 5;
const EM_MAX_ITERS: usize = 200;
const EM_REL_TOL: f64 = 1e-6;
const EM_COV_REG: f64 = 1e-6;
/// Relative per-step log-likelihood decrease tolerated before EM is declared numerically broken.
pub const EM_MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture2D {
    pub weights: Vec<f64>,
    pub components: Vec<Gaussian2D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityFit {
    pub components: usize,
    pub log_likelihood: f64,
    pub bic: f64,
    /// True for the component count with the lowest BIC.
    pub best: bool,
    /// Log-likelihood after each E-step of the winning restart.
    pub trace: Vec<f64>,
    pub mixture: GaussianMixture2D,
}

/// Free parameters of a full-covariance 2D mixture with `k` components.
pub fn mixture_param_count(k: usize) -> usize {
    6 * k - 1
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn init_mixture(points: &[Point2], k: usize, rng: &mut impl Rng) -> Result<GaussianMixture2D> {
    // k-means++ style seeding of the means; every component starts from the pooled covariance
    let global = fit_gaussian(points, EM_COV_REG)?;
    let mut means = vec![points[rng.random_range(0..points.len())]];
    while means.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                means
                    .iter()
                    .map(|m| {
                        let d = p.dist(*m);
                        d * d
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            points[pick]
        } else {
            points[rng.random_range(0..points.len())]
        };
        means.push(next);
    }
    Ok(GaussianMixture2D {
        weights: vec![1.0 / k as f64; k],
        components: means
            .into_iter()
            .map(|mean| Gaussian2D {
                mean,
                cov: global.cov,
            })
            .collect(),
    })
}

/// Runs EM from `mix`; returns the final mixture and the per-iteration log-likelihood trace.
pub fn fit_mixture_em(
    points: &[Point2],
    mut mix: GaussianMixture2D,
) -> Result<(GaussianMixture2D, Vec<f64>)> {
    let k = mix.weights.len();
    let n = points.len();
    let mut resp = vec![vec![0.0; k]; n];
    let mut trace: Vec<f64> = Vec::new();
    let mut row = vec![0.0; k];

    for _ in 0..EM_MAX_ITERS {
        // E-step
        let mut ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            for j in 0..k {
                row[j] = mix.weights[j].ln() + log_gaussian_pdf(*p, &mix.components[j])?;
            }
            let lse = log_sum_exp(&row);
            ll += lse;
            for j in 0..k {
                resp[i][j] = (row[j] - lse).exp();
            }
        }
        if let Some(&prev) = trace.last() {
            if ll < prev - EM_MONOTONE_SLACK * prev.abs().max(1.0) {
                return Err(Error::Numeric(format!(
                    "mixture EM log-likelihood decreased from {prev} to {ll}"
                )));
            }
        }
        trace.push(ll);
        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            if (ll - prev).abs() <= EM_REL_TOL * prev.abs().max(1e-300) {
                break;
            }
        }

        // M-step
        for j in 0..k {
            let nk: f64 = resp.iter().map(|r| r[j]).sum();
            if nk < 1e-10 {
                // empty component: its weight stays ~0 and its parameters are irrelevant
                continue;
            }
            let mx = resp.iter().zip(points).map(|(r, p)| r[j] * p.x).sum::<f64>() / nk;
            let my = resp.iter().zip(points).map(|(r, p)| r[j] * p.y).sum::<f64>() / nk;
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for (r, p) in resp.iter().zip(points) {
                let (dx, dy) = (p.x - mx, p.y - my);
                sxx += r[j] * dx * dx;
                sxy += r[j] * dx * dy;
                syy += r[j] * dy * dy;
            }
            mix.weights[j] = nk / n as f64;
            mix.components[j] = Gaussian2D {
                mean: Point2::new(mx, my),
                cov: [
                    [sxx / nk + EM_COV_REG, sxy / nk],
                    [sxy / nk, syy / nk + EM_COV_REG],
                ],
            };
        }
    }
    Ok((mix, trace))
}

/// Fits 1..=max_components full-covariance mixtures by EM (best of several restarts each)
/// and scores them with BIC = -2 logL + (6k - 1) ln n. The lowest BIC is flagged `best`.
pub fn analyze_position_modality(
    points: &[Point2],
    max_components: usize,
    seed: u64,
) -> Result<Vec<ModalityFit>> {
    if max_components == 0 {
        return Err(Error::InvalidInput("max_components must be >= 1".into()));
    }
    if points.len() <= max_components * 3 {
        return Err(Error::InvalidInput(format!(
            "{} points are too few for up to {max_components} components (need more than {})",
            points.len(),
            max_components * 3
        )));
    }
    let n = points.len() as f64;
    let mut fits = Vec::with_capacity(max_components);
    for k in 1..=max_components {
        let mut rng = rng_from(derive_seed(seed, k as u64));
        let mut best: Option<(GaussianMixture2D, Vec<f64>)> = None;
        for _ in 0..EM_RESTARTS {
            let init = init_mixture(points, k, &mut rng)?;
            let (mix, trace) = fit_mixture_em(points, init)?;
            let better = match &best {
                None => true,
                Some((_, t)) => trace.last() > t.last(),
            };
            if better {
                best = Some((mix, trace));
            }
        }
        let (mixture, trace) = best.expect("at least one restart");
        let ll = *trace.last().expect("EM runs at least one iteration");
        fits.push(ModalityFit {
            components: k,
            log_likelihood: ll,
            bic: -2.0 * ll + mixture_param_count(k) as f64 * n.ln(),
            best: false,
            trace,
            mixture,
        });
    }
    let best = fits
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.bic.total_cmp(&b.1.bic))
        .map(|(i, _)| i)
        .unwrap();
    fits[best].best = true;
    Ok(fits)
}
