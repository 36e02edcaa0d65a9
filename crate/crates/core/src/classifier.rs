//! Per-class, per-hand models and the log-space combiner.
//!
//! A class score is the sum over its used hands of position, movement and handshape
//! log-probabilities. A class that uses a hand which is present in too few frames of the
//! sample is impossible and scores `-inf`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_error, Dataset, Hand, Point2, SignSample};
use crate::error::{Error, Result};
use crate::handshape::{
    fit_codebook, fit_handshape_model, handshape_log_prob_from_counts, HandshapeClassModel,
    HandshapeQuantizer, DEFAULT_CODEWORDS,
};
use crate::hmm::{per_frame_log_likelihood, train_hmm, HmmClassModel, HmmConfig};
use crate::movement::{
    amount_of_movement, compute_movement_gate, direction_histogram, extract_directions,
    fit_amount_model, fit_trajectory_model, gated_movement, trajectory_log_prob_from_counts,
    AmountModel, MovementGate, TrajectoryClassModel, DEFAULT_DIRECTION_BINS,
    DEFAULT_GATE_THRESHOLD_CM, DEFAULT_MIN_DISPLACEMENT, DEFAULT_SIGMA_FLOOR,
};
use crate::position::{fit_position_model, position_log_prob, PositionClassModel, DEFAULT_REG_EPSILON};
use crate::rng::derive_seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_PRESENCE_FRACTION: f64 = 0.5;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Bow,
    Hmm,
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bow" => Ok(Backend::Bow),
            "hmm" => Ok(Backend::Hmm),
            _ => Err(Error::InvalidInput(format!("unknown backend '{s}' (bow|hmm)"))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Bow => "bow",
            Backend::Hmm => "hmm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizerKind {
    /// Shared k-means codebook over handshape vectors.
    Codebook,
    /// Most probable handshape index.
    Argmax,
}

impl FromStr for QuantizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "codebook" | "kmeans" => Ok(QuantizerKind::Codebook),
            "argmax" => Ok(QuantizerKind::Argmax),
            _ => Err(Error::InvalidInput(format!(
                "unknown handshape quantizer '{s}' (codebook|argmax)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub backend: Backend,
    pub direction_bins: usize,
    pub codewords: usize,
    pub alpha: f64,
    pub gate_threshold_cm: f64,
    pub presence_fraction: f64,
    pub reg_epsilon: f64,
    pub sigma_floor: f64,
    pub min_displacement: f64,
    pub quantizer: QuantizerKind,
    pub seed: u64,
    pub hmm: HmmConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            backend: Backend::Bow,
            direction_bins: DEFAULT_DIRECTION_BINS,
            codewords: DEFAULT_CODEWORDS,
            alpha: 1.0,
            gate_threshold_cm: DEFAULT_GATE_THRESHOLD_CM,
            presence_fraction: DEFAULT_PRESENCE_FRACTION,
            reg_epsilon: DEFAULT_REG_EPSILON,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            min_displacement: DEFAULT_MIN_DISPLACEMENT,
            quantizer: QuantizerKind::Codebook,
            seed: 0,
            hmm: HmmConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.direction_bins < 2 {
            return bad(format!("direction bins must be >= 2, got {}", self.direction_bins));
        }
        if self.codewords < 1 {
            return bad("codeword count must be >= 1".into());
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.gate_threshold_cm >= 0.0) {
            return bad(format!(
                "gate threshold must be >= 0, got {}",
                self.gate_threshold_cm
            ));
        }
        if !(0.0..1.0).contains(&self.presence_fraction) {
            return bad(format!(
                "presence fraction must lie in [0, 1), got {}",
                self.presence_fraction
            ));
        }
        if !(self.reg_epsilon > 0.0 && self.sigma_floor > 0.0 && self.min_displacement >= 0.0) {
            return bad("regularizer and sigma floor must be > 0, min displacement >= 0".into());
        }
        if self.hmm.num_states < 1 || !(1..=3).contains(&self.hmm.mixture_components) {
            return bad("HMM needs >= 1 state and 1..=3 mixture components".into());
        }
        if !(self.hmm.variance_floor > 0.0) {
            return bad("HMM variance floor must be > 0".into());
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Feature masks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMask {
    pub use_position: bool,
    pub use_movement: bool,
    pub use_handshape: bool,
}

impl FeatureMask {
    pub const ALL: FeatureMask = FeatureMask::of(true, true, true);
    pub const POS: FeatureMask = FeatureMask::of(true, false, false);
    pub const MOV: FeatureMask = FeatureMask::of(false, true, false);
    pub const HS: FeatureMask = FeatureMask::of(false, false, true);
    pub const HS_POS: FeatureMask = FeatureMask::of(true, false, true);
    pub const HS_MOV: FeatureMask = FeatureMask::of(false, true, true);
    pub const POS_MOV: FeatureMask = FeatureMask::of(true, true, false);

    /// The seven non-empty combinations, in the order they are usually reported.
    pub const NAMED: [FeatureMask; 7] = [
        Self::ALL,
        Self::HS,
        Self::MOV,
        Self::POS,
        Self::HS_POS,
        Self::HS_MOV,
        Self::POS_MOV,
    ];

    const fn of(use_position: bool, use_movement: bool, use_handshape: bool) -> Self {
        FeatureMask {
            use_position,
            use_movement,
            use_handshape,
        }
    }

    pub fn new(use_position: bool, use_movement: bool, use_handshape: bool) -> Result<Self> {
        if !(use_position || use_movement || use_handshape) {
            return Err(Error::InvalidInput("a feature mask must enable at least one factor".into()));
        }
        Ok(Self::of(use_position, use_movement, use_handshape))
    }

    pub fn name(&self) -> &'static str {
        match (self.use_position, self.use_movement, self.use_handshape) {
            (true, true, true) => "all",
            (true, false, false) => "pos",
            (false, true, false) => "mov",
            (false, false, true) => "hs",
            (true, false, true) => "hs-pos",
            (false, true, true) => "hs-mov",
            (true, true, false) => "pos-mov",
            (false, false, false) => "none",
        }
    }

    /// Comma-separated list of mask names, e.g. `all,pos,hs-mov`.
    pub fn parse_list(s: &str) -> Result<Vec<FeatureMask>> {
        let masks = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        if masks.is_empty() {
            return Err(Error::InvalidInput("empty mask list".into()));
        }
        Ok(masks)
    }
}

impl FromStr for FeatureMask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "all" {
            return Ok(Self::ALL);
        }
        let (mut p, mut m, mut h) = (false, false, false);
        for part in lower.split(['-', '+']) {
            match part {
                "pos" => p = true,
                "mov" => m = true,
                "hs" => h = true,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "unknown feature mask '{s}' (all,hs,mov,pos,hs-pos,hs-mov,pos-mov)"
                    )))
                }
            }
        }
        FeatureMask::new(p, m, h)
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Order-sensitive part of a hand model: bag-of-words categoricals or HMMs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SequenceModel {
    Bow {
        trajectory: TrajectoryClassModel,
        handshape: HandshapeClassModel,
    },
    Hmm(HmmClassModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandClassModel {
    pub position: PositionClassModel,
    pub amount: AmountModel,
    pub gate: MovementGate,
    pub sequence: SequenceModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub id: u32,
    pub uses_left: bool,
    pub uses_right: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<HandClassModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<HandClassModel>,
}

impl ClassModel {
    pub fn uses(&self, hand: Hand) -> bool {
        match hand {
            Hand::Left => self.uses_left,
            Hand::Right => self.uses_right,
        }
    }

    pub fn hand(&self, hand: Hand) -> Option<&HandClassModel> {
        match hand {
            Hand::Left => self.left.as_ref(),
            Hand::Right => self.right.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignModel {
    pub format_version: u32,
    pub config: TrainConfig,
    pub handshape_dim: usize,
    /// Handshape symbolizer shared by all classes; only the bag-of-words backend uses one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook: Option<HandshapeQuantizer>,
    pub classes: Vec<ClassModel>,
}

impl SignModel {
    pub fn backend(&self) -> Backend {
        self.config.backend
    }

    pub fn class(&self, id: u32) -> Option<&ClassModel> {
        self.classes.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class_id: u32,
    pub log_score: f64,
    pub impossible: bool,
}

// ---------------------------------------------------------------------------
// Per-sample features
// ---------------------------------------------------------------------------

/// `x_a^h`: the hand is present in strictly more than `fraction` of the frames.
pub fn hand_presence_with(s: &SignSample, hand: Hand, fraction: f64) -> bool {
    !s.frames.is_empty() && s.present_count(hand) as f64 > fraction * s.frames.len() as f64
}

pub fn hand_presence(s: &SignSample, hand: Hand) -> bool {
    hand_presence_with(s, hand, DEFAULT_PRESENCE_FRACTION)
}

/// Observation summary of one hand in one sample, computed once and reused for every class.
#[derive(Debug, Clone, PartialEq)]
pub struct HandFeatures {
    pub present: bool,
    pub first: Option<Point2>,
    pub last: Option<Point2>,
    pub amount: Option<f64>,
    pub direction_counts: Vec<u64>,
    pub handshape_counts: Vec<u64>,
    pub direction_seq: Vec<Vec<f64>>,
    pub handshape_seq: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub left: HandFeatures,
    pub right: HandFeatures,
}

impl SampleFeatures {
    pub fn hand(&self, hand: Hand) -> &HandFeatures {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }
}

fn hand_features(s: &SignSample, hand: Hand, m: &SignModel) -> Result<HandFeatures> {
    let cfg = &m.config;
    let track = s.present_positions(hand);
    let shapes = s.present_handshapes(hand);
    if let Some(v) = shapes.iter().find(|v| v.len() != m.handshape_dim) {
        return Err(Error::Validation(format!(
            "sample {}: {hand} handshape vector has length {}, model expects {}",
            s.id,
            v.len(),
            m.handshape_dim
        )));
    }
    let directions = extract_directions(&track, cfg.min_displacement);
    let mut f = HandFeatures {
        present: hand_presence_with(s, hand, cfg.presence_fraction),
        first: track.first().copied(),
        last: track.last().copied(),
        amount: if track.is_empty() {
            None
        } else {
            Some(amount_of_movement(&track)?)
        },
        direction_counts: Vec::new(),
        handshape_counts: Vec::new(),
        direction_seq: Vec::new(),
        handshape_seq: Vec::new(),
    };
    match cfg.backend {
        Backend::Bow => {
            f.direction_counts = direction_histogram(&directions, cfg.direction_bins)?;
            let q = m
                .codebook
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("bag-of-words model without a codebook".into()))?;
            f.handshape_counts = q.histogram(&shapes)?;
        }
        Backend::Hmm => {
            f.direction_seq = directions.iter().map(|d| vec![d.x, d.y]).collect();
            f.handshape_seq = shapes.iter().map(|v| v.to_vec()).collect();
        }
    }
    Ok(f)
}

pub fn extract_features(s: &SignSample, m: &SignModel) -> Result<SampleFeatures> {
    Ok(SampleFeatures {
        left: hand_features(s, Hand::Left, m)?,
        right: hand_features(s, Hand::Right, m)?,
    })
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

fn missing(what: &str) -> Error {
    Error::InvalidInput(format!("{what} requested for a hand with no present frames"))
}

/// Sum of the enabled factor log-probabilities for one hand under one class.
pub fn hand_log_prob_features(f: &HandFeatures, hcm: &HandClassModel, mask: FeatureMask) -> Result<f64> {
    let mut total = 0.0;
    if mask.use_position {
        let (first, last) = f.first.zip(f.last).ok_or_else(|| missing("position"))?;
        total += position_log_prob(first, last, &hcm.position)?;
    }
    if mask.use_movement {
        let x_am = f.amount.ok_or_else(|| missing("amount of movement"))?;
        // the trajectory term is never evaluated for a closed gate
        let traj = if hcm.gate.active {
            match &hcm.sequence {
                SequenceModel::Bow { trajectory, .. } => {
                    trajectory_log_prob_from_counts(&f.direction_counts, trajectory)
                }
                SequenceModel::Hmm(h) => match &h.trajectory_hmm {
                    Some(t) => per_frame_log_likelihood(&f.direction_seq, t)?,
                    None => 0.0,
                },
            }
        } else {
            0.0
        };
        total += gated_movement(traj, x_am, &hcm.amount, hcm.gate);
    }
    if mask.use_handshape {
        total += match &hcm.sequence {
            SequenceModel::Bow { handshape, .. } => {
                handshape_log_prob_from_counts(&f.handshape_counts, handshape)
            }
            SequenceModel::Hmm(h) => per_frame_log_likelihood(&f.handshape_seq, &h.handshape_hmm)?,
        };
    }
    Ok(total)
}

pub fn hand_log_prob(
    s: &SignSample,
    hand: Hand,
    hcm: &HandClassModel,
    m: &SignModel,
    mask: FeatureMask,
) -> Result<f64> {
    hand_log_prob_features(&hand_features(s, hand, m)?, hcm, mask)
}

fn class_score(f: &SampleFeatures, c: &ClassModel, mask: FeatureMask) -> Result<ClassScore> {
    let mut score = ClassScore {
        class_id: c.id,
        log_score: 0.0,
        impossible: false,
    };
    for hand in Hand::BOTH {
        if !c.uses(hand) {
            continue;
        }
        let hf = f.hand(hand);
        if !hf.present {
            score.impossible = true;
            score.log_score = f64::NEG_INFINITY;
            return Ok(score);
        }
        let hcm = c.hand(hand).ok_or_else(|| {
            Error::InvalidInput(format!("class {} uses the {hand} hand but has no model for it", c.id))
        })?;
        score.log_score += hand_log_prob_features(hf, hcm, mask)?;
    }
    Ok(score)
}

/// Descending score, ascending class id on ties; impossible classes last.
pub fn rank_scores(scores: &mut [ClassScore]) {
    scores.sort_by(|a, b| {
        a.impossible
            .cmp(&b.impossible)
            .then(b.log_score.total_cmp(&a.log_score))
            .then(a.class_id.cmp(&b.class_id))
    });
}

pub fn classify_features(f: &SampleFeatures, m: &SignModel, mask: FeatureMask) -> Result<Vec<ClassScore>> {
    let mut scores = m
        .classes
        .iter()
        .map(|c| class_score(f, c, mask))
        .collect::<Result<Vec<_>>>()?;
    rank_scores(&mut scores);
    Ok(scores)
}

pub fn classify(s: &SignSample, m: &SignModel, mask: FeatureMask) -> Result<Vec<ClassScore>> {
    classify_features(&extract_features(s, m)?, m, mask)
}

/// Top-ranked class; when every class is impossible this is the lowest class id.
pub fn predict(s: &SignSample, m: &SignModel, mask: FeatureMask) -> Result<ClassScore> {
    classify(s, m, mask)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidInput("model has no classes".into()))
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct HandTrainingData {
    first: Vec<Point2>,
    last: Vec<Point2>,
    amounts: Vec<f64>,
    directions: Vec<Vec<Point2>>,
    shapes: Vec<Vec<Vec<f64>>>,
}

fn gather(samples: &[&SignSample], hand: Hand, min_displacement: f64) -> Result<HandTrainingData> {
    let mut d = HandTrainingData {
        first: Vec::new(),
        last: Vec::new(),
        amounts: Vec::new(),
        directions: Vec::new(),
        shapes: Vec::new(),
    };
    for s in samples {
        let track = s.present_positions(hand);
        if track.is_empty() {
            continue;
        }
        d.first.push(track[0]);
        d.last.push(track[track.len() - 1]);
        d.amounts.push(amount_of_movement(&track)?);
        d.directions.push(extract_directions(&track, min_displacement));
        d.shapes
            .push(s.present_handshapes(hand).into_iter().map(<[f64]>::to_vec).collect());
    }
    Ok(d)
}

fn fit_hand(
    data: &HandTrainingData,
    cfg: &TrainConfig,
    codebook: Option<&HandshapeQuantizer>,
    seed: u64,
) -> Result<HandClassModel> {
    let position = fit_position_model(&data.first, &data.last, cfg.reg_epsilon)?;
    let amount = fit_amount_model(&data.amounts, cfg.sigma_floor)?;
    let gate = compute_movement_gate(&amount, cfg.gate_threshold_cm);
    let sequence = match cfg.backend {
        Backend::Bow => {
            let q = codebook.expect("bag-of-words training always builds a codebook");
            let symbols = data
                .shapes
                .iter()
                .map(|seq| seq.iter().map(|v| q.quantize(v)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            SequenceModel::Bow {
                trajectory: fit_trajectory_model(&data.directions, cfg.direction_bins, cfg.alpha)?,
                handshape: fit_handshape_model(&symbols, q.symbols(), cfg.alpha)?,
            }
        }
        Backend::Hmm => {
            let dir_seqs: Vec<Vec<Vec<f64>>> = data
                .directions
                .iter()
                .map(|l| l.iter().map(|d| vec![d.x, d.y]).collect())
                .collect();
            let trajectory_hmm = if dir_seqs.iter().any(|s| !s.is_empty()) {
                Some(train_hmm(&dir_seqs, &cfg.hmm, derive_seed(seed, 0))?.0)
            } else {
                None
            };
            let handshape_hmm = train_hmm(&data.shapes, &cfg.hmm, derive_seed(seed, 1))?.0;
            SequenceModel::Hmm(HmmClassModel {
                trajectory_hmm,
                handshape_hmm,
            })
        }
    };
    Ok(HandClassModel {
        position,
        amount,
        gate,
        sequence,
    })
}

fn build_codebook(d: &Dataset, cfg: &TrainConfig) -> Result<HandshapeQuantizer> {
    match cfg.quantizer {
        QuantizerKind::Argmax => Ok(HandshapeQuantizer::Argmax {
            dim: d.manifest.handshape_dim,
        }),
        QuantizerKind::Codebook => {
            let mut frames: Vec<&[f64]> = Vec::new();
            for s in &d.samples {
                let Some(c) = s.class_label.and_then(|id| d.manifest.class(id)) else {
                    continue;
                };
                for hand in Hand::BOTH {
                    if c.uses(hand) {
                        frames.extend(s.present_handshapes(hand));
                    }
                }
            }
            let cb = fit_codebook(&frames, cfg.codewords, derive_seed(cfg.seed, 0))?;
            Ok(HandshapeQuantizer::Codebook(cb))
        }
    }
}

/// Fits every class of the manifest. Deterministic given `cfg.seed`.
pub fn train(d: &Dataset, cfg: &TrainConfig) -> Result<SignModel> {
    cfg.validate()?;
    let by_class = d.samples_by_class();
    let annotations = {
        let mut a: Vec<_> = d.manifest.classes.iter().collect();
        a.sort_by_key(|c| c.id);
        a
    };
    for c in &annotations {
        let samples = by_class.get(&c.id).map_or(&[][..], Vec::as_slice);
        if samples.len() < 2 {
            return Err(Error::Validation(format!(
                "class {} ({}) has {} training sample(s); at least 2 are required",
                c.id,
                c.name,
                samples.len()
            )));
        }
        for hand in Hand::BOTH {
            if c.uses(hand) && samples.iter().all(|s| s.present_count(hand) == 0) {
                return Err(Error::Validation(format!(
                    "class {} ({}) uses the {hand} hand, which is present in none of its training samples",
                    c.id, c.name
                )));
            }
        }
    }

    let codebook = match cfg.backend {
        Backend::Bow => Some(build_codebook(d, cfg)?),
        Backend::Hmm => None,
    };

    let classes = annotations
        .par_iter()
        .enumerate()
        .map(|(ci, c)| {
            let samples = &by_class[&c.id];
            let fit = |hand: Hand| -> Result<Option<HandClassModel>> {
                if !c.uses(hand) {
                    return Ok(None);
                }
                let data = gather(samples, hand, cfg.min_displacement)?;
                let seed = derive_seed(cfg.seed, 1 + 2 * ci as u64 + hand as u64);
                fit_hand(&data, cfg, codebook.as_ref(), seed).map(Some)
            };
            Ok(ClassModel {
                id: c.id,
                uses_left: c.uses_left,
                uses_right: c.uses_right,
                left: fit(Hand::Left)?,
                right: fit(Hand::Right)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SignModel {
        format_version: MODEL_FORMAT_VERSION,
        config: *cfg,
        handshape_dim: d.manifest.handshape_dim,
        codebook,
        classes,
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

pub fn save_model(m: &SignModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(m).expect("model serialization cannot fail");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub fn load_model(path: &Path) -> Result<SignModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let probe: VersionProbe =
        serde_json::from_str(&text).map_err(|e| parse_error(path, &text, e.line(), &e))?;
    if probe.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Version {
            found: probe.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    serde_json::from_str(&text).map_err(|e| parse_error(path, &text, e.line(), &e))
}
