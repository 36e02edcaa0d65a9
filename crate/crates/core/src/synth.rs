//! Parametric generator of sign-like datasets with known ground truth, and a Bayes oracle
//! that classifies with the generating parameters.
//!
//! A hand of a class is described by mean first/last positions, a direction profile, an
//! amount of movement and a handshape profile. Each subject carries a persistent positional
//! offset. Tracks are random walks whose steps follow the direction profile, bent so they
//! start and end at the sampled first/last positions and stretched to the sampled amount.

use std::f64::consts::PI;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassAnnotation, Dataset, Frame, Hand, HandObservation, Manifest, Point2, SignSample};
use crate::error::{Error, Result};
use crate::movement::{amount_of_movement, extract_directions, quantize_direction, DEFAULT_MIN_DISPLACEMENT};
use crate::rng::{derive_seed, rng_from};

/// Signing space in cm: x in [X_MIN, X_MAX], y in [Y_MIN, Y_MAX].
const X_MIN: f64 = -30.0;
const X_MAX: f64 = 30.0;
const Y_MIN: f64 = -50.0;
const Y_MAX: f64 = 10.0;
const PLACEMENT_ATTEMPTS: usize = 20_000;
/// Tracks simulated per (class, hand) to estimate direction distributions for the oracle.
const ORACLE_MC_TRACKS: usize = 300;
/// Probability mass of a handshape profile spread uniformly over all handshapes.
const HANDSHAPE_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_classes: usize,
    pub num_subjects: usize,
    pub reps_per_subject: usize,
    /// Standard deviation (cm) of each subject's persistent positional offset.
    pub subject_offset_scale: f64,
    pub seed: u64,
    pub direction_bins: usize,
    pub handshape_dim: usize,
    pub fraction_one_handed: f64,
    pub fraction_low_movement: f64,
    /// Standard deviation (cm) of first/last positions around the class means.
    pub pos_noise: f64,
    pub frames_min: usize,
    pub frames_max: usize,
    /// Minimum distance (cm) between the (first, last) means of any two classes.
    pub min_separation: f64,
    /// Probability that a used hand is missing from an interior frame.
    pub dropout: f64,
    /// Bend trajectories into arcs so directions drift along the track.
    pub mismatch: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_classes: 64,
            num_subjects: 10,
            reps_per_subject: 5,
            subject_offset_scale: 1.0,
            seed: 0,
            direction_bins: 16,
            handshape_dim: 16,
            fraction_one_handed: 42.0 / 64.0,
            fraction_low_movement: 0.2,
            pos_noise: 1.2,
            frames_min: 16,
            frames_max: 32,
            min_separation: 6.0,
            dropout: 0.05,
            mismatch: false,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.num_classes < 1 || self.num_subjects < 1 || self.reps_per_subject < 1 {
            return bad("classes, subjects and reps must all be >= 1");
        }
        if self.direction_bins < 2 || self.handshape_dim < 1 {
            return bad("need >= 2 direction bins and >= 1 handshape");
        }
        if !(0.0..=1.0).contains(&self.fraction_one_handed)
            || !(0.0..=1.0).contains(&self.fraction_low_movement)
            || !(0.0..=1.0).contains(&self.dropout)
        {
            return bad("fractions must lie in [0, 1]");
        }
        if !(self.subject_offset_scale >= 0.0 && self.pos_noise >= 0.0 && self.min_separation >= 0.0) {
            return bad("noise scales and separation must be >= 0");
        }
        if self.frames_min < 2 || self.frames_max < self.frames_min {
            return bad("frame range must satisfy 2 <= min <= max");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandPrototype {
    pub fp_mean: Point2,
    pub lp_mean: Point2,
    pub pos_noise: f64,
    pub direction_profile: Vec<f64>,
    pub amount_mean: f64,
    pub amount_noise: f64,
    pub handshape_profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrototype {
    pub id: u32,
    pub name: String,
    pub uses_left: bool,
    pub uses_right: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<HandPrototype>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<HandPrototype>,
    pub frames_min: usize,
    pub frames_max: usize,
}

impl ClassPrototype {
    pub fn hand(&self, hand: Hand) -> Option<&HandPrototype> {
        match hand {
            Hand::Left => self.left.as_ref(),
            Hand::Right => self.right.as_ref(),
        }
    }

    fn hand_mut(&mut self, hand: Hand) -> Option<&mut HandPrototype> {
        match hand {
            Hand::Left => self.left.as_mut(),
            Hand::Right => self.right.as_mut(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub config: GeneratorConfig,
    pub classes: Vec<ClassPrototype>,
}

impl PrototypeSet {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            num_classes: self.classes.len(),
            handshape_dim: self.config.handshape_dim,
            classes: self
                .classes
                .iter()
                .map(|c| ClassAnnotation {
                    id: c.id,
                    name: c.name.clone(),
                    uses_left: c.uses_left,
                    uses_right: c.uses_right,
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("prototype serialization cannot fail");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| crate::dataset::parse_error(path, &text, e.line(), &e))
    }
}

// ---------------------------------------------------------------------------
// Prototype sampling
// ---------------------------------------------------------------------------

fn gauss(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        sd * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    }
}

fn round_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 0.5 + 1e-9).floor() as usize).min(n)
}

/// Two direction lobes, each spread over its neighbouring bins, on top of a uniform floor.
fn direction_profile(rng: &mut ChaCha8Rng, bins: usize) -> Vec<f64> {
    let floor = 0.1;
    let mut p = vec![floor / bins as f64; bins];
    let b1 = rng.random_range(0..bins);
    let b2 = (b1 + rng.random_range(1..bins)) % bins;
    let w1 = rng.random_range(0.45..0.65) * (1.0 - floor);
    for (b, w) in [(b1, w1), (b2, 1.0 - floor - w1)] {
        p[(b + bins - 1) % bins] += 0.25 * w;
        p[b] += 0.5 * w;
        p[(b + 1) % bins] += 0.25 * w;
    }
    p
}

fn dominant_profile(dim: usize, dominant: &[(usize, f64)], floor: f64) -> Vec<f64> {
    let mut p = vec![floor / dim as f64; dim];
    for &(k, w) in dominant {
        p[k] += (1.0 - floor) * w;
    }
    p
}

/// One to three dominant handshapes with random weights, plus a uniform floor.
fn handshape_profile(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.shuffle(rng);
    let n = rng.random_range(1..=3usize.min(dim));
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let dominant: Vec<(usize, f64)> = idx[..n].iter().zip(&raw).map(|(&k, &w)| (k, w / total)).collect();
    dominant_profile(dim, &dominant, HANDSHAPE_FLOOR)
}

fn draw_hand(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig, low_movement: bool) -> HandPrototype {
    let amount_mean = if low_movement {
        rng.random_range(1.5..3.5)
    } else {
        rng.random_range(8.0..25.0)
    };
    let fp = Point2::new(rng.random_range(X_MIN..X_MAX), rng.random_range(Y_MIN..Y_MAX));
    let lp = if low_movement {
        fp
    } else {
        let r = rng.random_range(0.2..0.7) * amount_mean;
        let a = rng.random_range(0.0..2.0 * PI);
        fp + Point2::new(r * a.cos(), r * a.sin())
    };
    HandPrototype {
        fp_mean: fp,
        lp_mean: lp,
        pos_noise: cfg.pos_noise,
        direction_profile: direction_profile(rng, cfg.direction_bins),
        amount_mean,
        amount_noise: 0.1 * amount_mean,
        handshape_profile: handshape_profile(rng, cfg.handshape_dim),
    }
}

fn placement_key(h: &HandPrototype) -> [f64; 4] {
    [h.fp_mean.x, h.fp_mean.y, h.lp_mean.x, h.lp_mean.y]
}

fn key_dist(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Deterministic given `cfg.seed`. Classes are placed by rejection sampling so the
/// (first, last) means of their main hands stay `min_separation` apart.
pub fn sample_prototypes(cfg: &GeneratorConfig) -> Result<PrototypeSet> {
    cfg.validate()?;
    let mut rng = rng_from(derive_seed(cfg.seed, 0));
    let n = cfg.num_classes;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let one_handed: Vec<bool> = {
        let k = round_count(cfg.fraction_one_handed, n);
        let mut v = vec![false; n];
        order[..k].iter().for_each(|&i| v[i] = true);
        v
    };
    order.shuffle(&mut rng);
    let low: Vec<bool> = {
        let k = round_count(cfg.fraction_low_movement, n);
        let mut v = vec![false; n];
        order[..k].iter().for_each(|&i| v[i] = true);
        v
    };

    let mut classes: Vec<ClassPrototype> = Vec::with_capacity(n);
    let mut keys: Vec<[f64; 4]> = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = 0.0f64;
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let right = draw_hand(&mut rng, cfg, low[i]);
            let key = placement_key(&right);
            let sep = keys.iter().map(|k| key_dist(k, &key)).fold(f64::INFINITY, f64::min);
            if sep >= cfg.min_separation {
                placed = Some(right);
                keys.push(key);
                break;
            }
            best = best.max(sep);
        }
        let right = placed.ok_or_else(|| {
            Error::InvalidInput(format!(
                "cannot place class {i} of {n} with separation {} cm; best achieved {best:.2} cm",
                cfg.min_separation
            ))
        })?;
        let left = (!one_handed[i]).then(|| draw_hand(&mut rng, cfg, low[i]));
        classes.push(ClassPrototype {
            id: i as u32,
            name: format!("sign{i:02}"),
            uses_left: left.is_some(),
            uses_right: true,
            left,
            right: Some(right),
            frames_min: cfg.frames_min,
            frames_max: cfg.frames_max,
        });
    }
    Ok(PrototypeSet {
        config: cfg.clone(),
        classes,
    })
}

/// 27 right-handed classes crossing three position, three movement and three handshape
/// levels. Any single feature separates only 3 groups of 9 classes and any pair 9 groups
/// of 3, so only the full model can tell every class apart.
pub fn ablation_prototypes(cfg: &GeneratorConfig) -> Result<PrototypeSet> {
    cfg.validate()?;
    let (bins, dim) = (cfg.direction_bins, cfg.handshape_dim);
    if dim < 3 {
        return Err(Error::InvalidInput("ablation design needs >= 3 handshapes".into()));
    }
    let positions = [Point2::new(-18.0, -30.0), Point2::new(0.0, -8.0), Point2::new(18.0, -30.0)];
    let lobes = |a: usize, b: usize| {
        let mut p = vec![0.1 / bins as f64; bins];
        p[a % bins] += 0.45;
        p[b % bins] += 0.45;
        p
    };
    // (amount, direction profile): still, horizontal back-and-forth, vertical back-and-forth
    let movements = [
        (2.0, vec![1.0 / bins as f64; bins]),
        (12.0, lobes(0, bins / 2)),
        (20.0, lobes(bins / 4, 3 * bins / 4)),
    ];
    let shapes = [0, dim / 3, 2 * dim / 3];
    let mut classes = Vec::new();
    for (pi, p) in positions.iter().enumerate() {
        for (mi, (amount, profile)) in movements.iter().enumerate() {
            for (hi, &k) in shapes.iter().enumerate() {
                let id = classes.len() as u32;
                classes.push(ClassPrototype {
                    id,
                    name: format!("p{pi}m{mi}h{hi}"),
                    uses_left: false,
                    uses_right: true,
                    left: None,
                    right: Some(HandPrototype {
                        fp_mean: *p,
                        lp_mean: *p,
                        pos_noise: cfg.pos_noise,
                        direction_profile: profile.clone(),
                        amount_mean: *amount,
                        amount_noise: 0.1 * amount,
                        handshape_profile: dominant_profile(dim, &[(k, 1.0)], HANDSHAPE_FLOOR),
                    }),
                    frames_min: cfg.frames_min,
                    frames_max: cfg.frames_max,
                });
            }
        }
    }
    let mut config = cfg.clone();
    config.num_classes = classes.len();
    Ok(PrototypeSet { config, classes })
}

/// Default prototypes with class 1 turned into a copy of class 0 that differs only in its
/// handshape profile.
pub fn handshape_pair_prototypes(cfg: &GeneratorConfig) -> Result<PrototypeSet> {
    if cfg.num_classes < 2 || cfg.handshape_dim < 2 {
        return Err(Error::InvalidInput(
            "handshape pair design needs >= 2 classes and >= 2 handshapes".into(),
        ));
    }
    let mut set = sample_prototypes(cfg)?;
    let dim = cfg.handshape_dim;
    let mut twin = set.classes[0].clone();
    twin.id = 1;
    twin.name = format!("{}_hs", twin.name);
    for hand in Hand::BOTH {
        if let (Some(a), Some(b)) = (set.classes[0].hand_mut(hand), twin.hand_mut(hand)) {
            a.handshape_profile = dominant_profile(dim, &[(0, 1.0)], HANDSHAPE_FLOOR);
            b.handshape_profile = dominant_profile(dim, &[(dim / 2, 1.0)], HANDSHAPE_FLOOR);
        }
    }
    set.classes[1] = twin;
    Ok(set)
}

// ---------------------------------------------------------------------------
// Sample generation
// ---------------------------------------------------------------------------

fn sample_direction(rng: &mut ChaCha8Rng, profile: &WeightedIndex<f64>, bins: usize) -> f64 {
    let b = profile.sample(rng);
    let width = 2.0 * PI / bins as f64;
    b as f64 * width + rng.random_range(-0.35..0.35) * width
}

/// Walk from `first` to `last` whose maximum pairwise distance matches `amount` (or the
/// endpoint distance if larger). Steps follow `angles`, detrended to hit `last`.
fn shape_track(first: Point2, last: Point2, angles: &[f64], amount: f64) -> Vec<Point2> {
    let n = angles.len();
    let mut walk = Vec::with_capacity(n + 1);
    walk.push(Point2::default());
    for a in angles {
        let prev = *walk.last().unwrap();
        walk.push(prev + Point2::new(a.cos(), a.sin()));
    }
    let end = walk[n];
    let delta = last - first;
    let build = |s: f64| -> Vec<Point2> {
        walk.iter()
            .enumerate()
            .map(|(t, w)| {
                let u = t as f64 / n as f64;
                first + (*w - end * u) * s + delta * u
            })
            .collect()
    };
    let reach = |s: f64| amount_of_movement(&build(s)).expect("tracks are non-empty");
    if amount <= delta.norm() {
        return build(0.0);
    }
    let mut hi = 1.0;
    let mut grown = 0;
    while reach(hi) < amount {
        hi *= 2.0;
        grown += 1;
        if grown > 60 {
            return build(0.0);
        }
    }
    let mut lo = 0.0;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if reach(mid) < amount {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    build(hi)
}

fn handshape_vector(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Vec<f64> {
    let eta: f64 = rng.random_range(0.0..0.3);
    let noise: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = noise.iter().sum();
    let mut v: Vec<f64> = noise.iter().map(|x| eta * x / total).collect();
    v[k] += 1.0 - eta;
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Per-frame observations of one used hand; `None` marks a dropped frame.
fn simulate_hand(
    rng: &mut ChaCha8Rng,
    hp: &HandPrototype,
    cfg: &GeneratorConfig,
    offset: Point2,
    frames: usize,
) -> Vec<Option<(Point2, Vec<f64>)>> {
    let bins = hp.direction_profile.len();
    let dirs = WeightedIndex::new(&hp.direction_profile).expect("valid direction profile");
    let shapes = WeightedIndex::new(&hp.handshape_profile).expect("valid handshape profile");
    let first = hp.fp_mean + offset + Point2::new(gauss(rng, hp.pos_noise), gauss(rng, hp.pos_noise));
    let last = hp.lp_mean + offset + Point2::new(gauss(rng, hp.pos_noise), gauss(rng, hp.pos_noise));
    let steps = frames - 1;
    let bend = if cfg.mismatch { rng.random_range(-1.0..1.0) * PI / 2.0 } else { 0.0 };
    let angles: Vec<f64> = (0..steps)
        .map(|i| sample_direction(rng, &dirs, bins) + bend * (i as f64 / steps as f64 - 0.5))
        .collect();
    let amount = (hp.amount_mean + gauss(rng, hp.amount_noise)).max(0.0);
    let track = shape_track(first, last, &angles, amount);
    let dim = hp.handshape_profile.len();
    track
        .into_iter()
        .enumerate()
        .map(|(t, p)| {
            let interior = t > 0 && t + 1 < frames;
            let k = shapes.sample(rng);
            let v = handshape_vector(rng, k, dim);
            if interior && rng.random::<f64>() < cfg.dropout {
                None
            } else {
                Some((p, v))
            }
        })
        .collect()
}

/// Random positions, movement and handshapes for a hand the class does not use.
fn clutter_prototype(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> HandPrototype {
    let amount_mean = rng.random_range(3.0..20.0);
    let fp = Point2::new(rng.random_range(X_MIN..X_MAX), rng.random_range(Y_MIN..Y_MAX));
    let a = rng.random_range(0.0..2.0 * PI);
    let r = rng.random_range(0.0..0.7) * amount_mean;
    HandPrototype {
        fp_mean: fp,
        lp_mean: fp + Point2::new(r * a.cos(), r * a.sin()),
        pos_noise: 0.0,
        direction_profile: vec![1.0 / cfg.direction_bins as f64; cfg.direction_bins],
        amount_mean,
        amount_noise: 0.0,
        handshape_profile: vec![1.0 / cfg.handshape_dim as f64; cfg.handshape_dim],
    }
}

fn generate_sample(
    proto: &ClassPrototype,
    cfg: &GeneratorConfig,
    subject: u32,
    offset: Point2,
    id: String,
    seed: u64,
) -> SignSample {
    let mut rng = rng_from(seed);
    let frames = rng.random_range(proto.frames_min..=proto.frames_max);
    let mut out: Vec<Frame> = (0..frames)
        .map(|t| Frame {
            t: t as u64,
            left: HandObservation::absent(),
            right: HandObservation::absent(),
        })
        .collect();
    for hand in Hand::BOTH {
        let obs = match proto.hand(hand) {
            Some(hp) => simulate_hand(&mut rng, hp, cfg, offset, frames),
            None => {
                if rng.random::<f64>() < 0.5 {
                    continue;
                }
                let clutter = clutter_prototype(&mut rng, cfg);
                let plain = GeneratorConfig {
                    dropout: 0.0,
                    mismatch: false,
                    ..cfg.clone()
                };
                simulate_hand(&mut rng, &clutter, &plain, Point2::default(), frames)
            }
        };
        for (f, o) in out.iter_mut().zip(obs) {
            if let Some((p, v)) = o {
                *f.hand_mut(hand) = HandObservation::present(p, v);
            }
        }
    }
    SignSample {
        id,
        subject,
        class_label: Some(proto.id),
        frames: out,
    }
}

/// Per-subject offsets, subjects numbered from 1.
fn subject_offsets(set: &PrototypeSet) -> Vec<Point2> {
    let cfg = &set.config;
    let mut rng = rng_from(derive_seed(cfg.seed, 2));
    (0..cfg.num_subjects)
        .map(|_| Point2::new(gauss(&mut rng, cfg.subject_offset_scale), gauss(&mut rng, cfg.subject_offset_scale)))
        .collect()
}

/// Every class performed `reps_per_subject` times by every subject, in class, subject,
/// repetition order. Each sample draws from its own derived seed.
pub fn generate_dataset(set: &PrototypeSet) -> Result<Dataset> {
    let cfg = &set.config;
    cfg.validate()?;
    let offsets = subject_offsets(set);
    let data_seed = derive_seed(cfg.seed, 1);
    let mut jobs = Vec::new();
    for proto in &set.classes {
        for (si, off) in offsets.iter().enumerate() {
            for r in 0..cfg.reps_per_subject {
                jobs.push((proto, si as u32 + 1, *off, r));
            }
        }
    }
    let samples = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (proto, subject, off, r))| {
            let id = format!("c{:02}_s{:02}_r{}", proto.id, subject, r);
            generate_sample(proto, cfg, *subject, *off, id, derive_seed(data_seed, i as u64))
        })
        .collect();
    Dataset::new(set.manifest(), samples)
}

// ---------------------------------------------------------------------------
// Bayes oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct OracleHand {
    fp: Point2,
    lp: Point2,
    amount_mean: f64,
    amount_sd: f64,
    log_theta: Vec<f64>,
    log_phi: Vec<f64>,
}

#[derive(Debug, Clone)]
struct OracleClass {
    id: u32,
    pos_var: f64,
    hands: [Option<OracleHand>; 2],
}

/// Density of the clutter shown by an unused hand, estimated once by simulation.
#[derive(Debug, Clone)]
struct ClutterModel {
    disp_mean: Point2,
    disp_var: [f64; 2],
    amount_mean: f64,
    amount_sd: f64,
    log_theta: Vec<f64>,
    log_phi: f64,
}

/// Classifier with the generating parameters: exact position marginal over the unknown
/// subject offset, the true handshape profiles, and amount and direction distributions
/// estimated by simulating the generator.
#[derive(Debug, Clone)]
pub struct Oracle {
    classes: Vec<OracleClass>,
    clutter: ClutterModel,
    offset_var: f64,
    bins: usize,
    handshape_dim: usize,
}

fn log_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * z * z
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

fn direction_counts(positions: &[Point2], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for d in extract_directions(positions, DEFAULT_MIN_DISPLACEMENT) {
        counts[quantize_direction(d, bins).expect("unit directions")] += 1;
    }
    counts
}

fn log_categorical(counts: &[u64], pseudo: f64) -> Vec<f64> {
    let total = counts.iter().sum::<u64>() as f64 + pseudo * counts.len() as f64;
    counts.iter().map(|&c| ((c as f64 + pseudo) / total).ln()).collect()
}

fn present_positions(obs: &[Option<(Point2, Vec<f64>)>]) -> Vec<Point2> {
    obs.iter().flatten().map(|(p, _)| *p).collect()
}

impl Oracle {
    pub fn new(set: &PrototypeSet) -> Result<Self> {
        let cfg = &set.config;
        cfg.validate()?;
        let bins = cfg.direction_bins;
        let mc_seed = derive_seed(cfg.seed, 3);
        let classes = set
            .classes
            .par_iter()
            .enumerate()
            .map(|(ci, c)| {
                let mut rng = rng_from(derive_seed(mc_seed, ci as u64));
                let mut hands: [Option<OracleHand>; 2] = [None, None];
                for (hi, hand) in Hand::BOTH.into_iter().enumerate() {
                    let Some(hp) = c.hand(hand) else { continue };
                    let mut counts = vec![0u64; bins];
                    let mut amounts = Vec::with_capacity(ORACLE_MC_TRACKS);
                    for _ in 0..ORACLE_MC_TRACKS {
                        let frames = rng.random_range(c.frames_min..=c.frames_max);
                        let track = present_positions(&simulate_hand(&mut rng, hp, cfg, Point2::default(), frames));
                        for (a, b) in counts.iter_mut().zip(direction_counts(&track, bins)) {
                            *a += b;
                        }
                        amounts.push(amount_of_movement(&track)?);
                    }
                    // the realized amount is clamped to the endpoint distance, so it is
                    // estimated from the simulation rather than taken from the prototype
                    let (amount_mean, amount_sd) = mean_sd(&amounts);
                    hands[hi] = Some(OracleHand {
                        fp: hp.fp_mean,
                        lp: hp.lp_mean,
                        amount_mean,
                        amount_sd: amount_sd.max(0.1),
                        log_theta: log_categorical(&counts, 0.5),
                        log_phi: hp.handshape_profile.iter().map(|p| p.ln()).collect(),
                    });
                }
                let pos_var = c
                    .hand(Hand::Right)
                    .or(c.hand(Hand::Left))
                    .map_or(0.0, |h| h.pos_noise * h.pos_noise)
                    .max(1e-6);
                Ok(OracleClass {
                    id: c.id,
                    pos_var,
                    hands,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        // clutter statistics
        let mut rng = rng_from(derive_seed(mc_seed, u64::MAX));
        let plain = GeneratorConfig {
            dropout: 0.0,
            mismatch: false,
            ..cfg.clone()
        };
        let mut disp = Vec::new();
        let mut amounts = Vec::new();
        let mut counts = vec![0u64; bins];
        for _ in 0..4 * ORACLE_MC_TRACKS {
            let proto = clutter_prototype(&mut rng, cfg);
            let frames = rng.random_range(cfg.frames_min..=cfg.frames_max);
            let track = present_positions(&simulate_hand(&mut rng, &proto, &plain, Point2::default(), frames));
            disp.push(track[track.len() - 1] - track[0]);
            amounts.push(amount_of_movement(&track)?);
            for (a, b) in counts.iter_mut().zip(direction_counts(&track, bins)) {
                *a += b;
            }
        }
        let n = disp.len() as f64;
        let dm = disp.iter().fold(Point2::default(), |a, b| a + *b) * (1.0 / n);
        let var = |f: fn(Point2) -> f64| disp.iter().map(|d| (f(*d) - f(dm)).powi(2)).sum::<f64>() / n;
        let (am, asd) = mean_sd(&amounts);
        let clutter = ClutterModel {
            disp_mean: dm,
            disp_var: [var(|p| p.x).max(1e-6), var(|p| p.y).max(1e-6)],
            amount_mean: am,
            amount_sd: asd.max(0.1),
            log_theta: log_categorical(&counts, 0.5),
            log_phi: -(cfg.handshape_dim as f64).ln(),
        };
        Ok(Oracle {
            classes,
            clutter,
            offset_var: cfg.subject_offset_scale * cfg.subject_offset_scale,
            bins,
            handshape_dim: cfg.handshape_dim,
        })
    }

    fn clutter_log_density(&self, track: &[Point2], shapes: &[&[f64]]) -> f64 {
        let c = &self.clutter;
        let f = track[0];
        let inside = (X_MIN..=X_MAX).contains(&f.x) && (Y_MIN..=Y_MAX).contains(&f.y);
        let area = (X_MAX - X_MIN) * (Y_MAX - Y_MIN);
        let mut lp = if inside { -area.ln() } else { -30.0 };
        let d = track[track.len() - 1] - f;
        lp += log_normal(d.x, c.disp_mean.x, c.disp_var[0].sqrt());
        lp += log_normal(d.y, c.disp_mean.y, c.disp_var[1].sqrt());
        lp += log_normal(amount_of_movement(track).unwrap_or(0.0), c.amount_mean, c.amount_sd);
        for (n, l) in direction_counts(track, self.bins).iter().zip(&c.log_theta) {
            lp += *n as f64 * l;
        }
        lp + shapes.len() as f64 * c.log_phi
    }

    /// Joint density of the first/last positions of all used hands along one axis: each is
    /// its mean plus independent noise plus one shared subject offset.
    fn position_axis(&self, values: &[f64], means: &[f64], noise_var: f64) -> f64 {
        let n = values.len() as f64;
        let (s2, t2) = (noise_var, self.offset_var);
        let d: Vec<f64> = values.iter().zip(means).map(|(v, m)| v - m).collect();
        let sum: f64 = d.iter().sum();
        let sq: f64 = d.iter().map(|x| x * x).sum();
        let quad = (sq - t2 / (s2 + n * t2) * sum * sum) / s2;
        let log_det = n * s2.ln() + (1.0 + n * t2 / s2).ln();
        -0.5 * (n * (2.0 * PI).ln() + log_det + quad)
    }

    /// Log-likelihood of `s` under every class; `None` for classes whose required hand is
    /// missing from the sample.
    pub fn scores(&self, s: &SignSample) -> Vec<(u32, Option<f64>)> {
        let argmax = |v: &[f64]| {
            let mut best = 0;
            for (i, x) in v.iter().enumerate() {
                if *x > v[best] {
                    best = i;
                }
            }
            best
        };
        let tracks: Vec<Vec<Point2>> = Hand::BOTH.iter().map(|h| s.present_positions(*h)).collect();
        let shapes: Vec<Vec<&[f64]>> = Hand::BOTH.iter().map(|h| s.present_handshapes(*h)).collect();
        self.classes
            .iter()
            .map(|c| {
                let mut total = 0.0;
                let (mut xs, mut ys, mut mx, mut my) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for (hi, hand) in Hand::BOTH.into_iter().enumerate() {
                    let track = &tracks[hi];
                    match &c.hands[hi] {
                        Some(h) => {
                            if s.present_count(hand) * 2 <= s.frames.len() {
                                return (c.id, None);
                            }
                            let (f, l) = (track[0], track[track.len() - 1]);
                            xs.extend([f.x, l.x]);
                            ys.extend([f.y, l.y]);
                            mx.extend([h.fp.x, h.lp.x]);
                            my.extend([h.fp.y, h.lp.y]);
                            total += log_normal(
                                amount_of_movement(track).unwrap_or(0.0),
                                h.amount_mean,
                                h.amount_sd,
                            );
                            for (n, l) in direction_counts(track, self.bins).iter().zip(&h.log_theta) {
                                total += *n as f64 * l;
                            }
                            for v in &shapes[hi] {
                                total += h.log_phi[argmax(v).min(self.handshape_dim - 1)];
                            }
                        }
                        None => {
                            total += 0.5f64.ln();
                            if !track.is_empty() {
                                total += self.clutter_log_density(track, &shapes[hi]);
                            }
                        }
                    }
                }
                total += self.position_axis(&xs, &mx, c.pos_var) + self.position_axis(&ys, &my, c.pos_var);
                (c.id, Some(total))
            })
            .collect()
    }

    /// Highest-scoring class; ties and all-impossible samples go to the lowest id.
    pub fn predict(&self, s: &SignSample) -> u32 {
        let mut best: Option<(u32, f64)> = None;
        for (id, score) in self.scores(s) {
            let score = score.unwrap_or(f64::NEG_INFINITY);
            match best {
                Some((bid, bs)) if score < bs || (score == bs && id > bid) => {}
                _ => best = Some((id, score)),
            }
        }
        best.map_or(0, |b| b.0)
    }
}

/// Accuracy of the oracle on `d`, which must have been generated from `set`.
pub fn oracle_accuracy(set: &PrototypeSet, d: &Dataset) -> Result<f64> {
    if d.manifest.handshape_dim != set.config.handshape_dim
        || d.manifest.class_ids() != set.manifest().class_ids()
    {
        return Err(Error::InvalidInput(
            "dataset classes or handshape dimension do not match the prototypes".into(),
        ));
    }
    let oracle = Oracle::new(set)?;
    let correct = d
        .samples
        .par_iter()
        .filter(|s| s.class_label == Some(oracle.predict(s)))
        .count();
    Ok(correct as f64 / d.samples.len().max(1) as f64)
}
