//! Feature-track sign samples: data model, line-delimited JSON I/O, validation, and splits.
//!
//! A samples file holds one JSON object per line; a separate manifest describes the
//! classes and the handshape vocabulary size. Positions are head-relative centimeters.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit sum of a handshape probability vector.
pub const HS_SUM_TOLERANCE: f64 = 1e-6;

/// Head-relative 2D position in centimeters. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2 { x: v[0], y: v[1] }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hand::Left => f.write_str("left"),
            Hand::Right => f.write_str("right"),
        }
    }
}

/// One hand in one frame. An absent hand carries neither position nor handshape.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HandObservation {
    pub present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hs: Option<Vec<f64>>,
}

impl HandObservation {
    pub fn absent() -> Self {
        HandObservation::default()
    }

    pub fn present(pos: Point2, hs: Vec<f64>) -> Self {
        HandObservation {
            present: true,
            pos: Some(pos),
            hs: Some(hs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: u64,
    #[serde(rename = "l")]
    pub left: HandObservation,
    #[serde(rename = "r")]
    pub right: HandObservation,
}

impl Frame {
    pub fn hand(&self, hand: Hand) -> &HandObservation {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }

    pub fn hand_mut(&mut self, hand: Hand) -> &mut HandObservation {
        match hand {
            Hand::Left => &mut self.left,
            Hand::Right => &mut self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSample {
    pub id: String,
    pub subject: u32,
    #[serde(rename = "class")]
    pub class_label: Option<u32>,
    pub frames: Vec<Frame>,
}

impl SignSample {
    /// Positions of the frames where `hand` is present, in frame order.
    pub fn present_positions(&self, hand: Hand) -> Vec<Point2> {
        self.frames
            .iter()
            .filter_map(|f| {
                let obs = f.hand(hand);
                if obs.present {
                    obs.pos
                } else {
                    None
                }
            })
            .collect()
    }

    /// Handshape vectors of the frames where `hand` is present, in frame order.
    pub fn present_handshapes(&self, hand: Hand) -> Vec<&[f64]> {
        self.frames
            .iter()
            .filter_map(|f| {
                let obs = f.hand(hand);
                if obs.present {
                    obs.hs.as_deref()
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn present_count(&self, hand: Hand) -> usize {
        self.frames.iter().filter(|f| f.hand(hand).present).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAnnotation {
    pub id: u32,
    pub name: String,
    pub uses_left: bool,
    pub uses_right: bool,
}

impl ClassAnnotation {
    pub fn uses(&self, hand: Hand) -> bool {
        match hand {
            Hand::Left => self.uses_left,
            Hand::Right => self.uses_right,
        }
    }

    pub fn is_one_handed(&self) -> bool {
        self.uses_left != self.uses_right
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub num_classes: usize,
    pub handshape_dim: usize,
    pub classes: Vec<ClassAnnotation>,
}

impl Manifest {
    pub fn class(&self, id: u32) -> Option<&ClassAnnotation> {
        self.classes.iter().find(|c| c.id == id)
    }

    /// Class ids in ascending order. This is the row/column order of confusion matrices.
    pub fn class_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.classes.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn validate(&self) -> Result<()> {
        if self.handshape_dim == 0 {
            return Err(Error::Validation("manifest handshape_dim must be >= 1".into()));
        }
        if self.num_classes != self.classes.len() {
            return Err(Error::Validation(format!(
                "manifest declares num_classes = {} but lists {} classes",
                self.num_classes,
                self.classes.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.classes {
            if !seen.insert(c.id) {
                return Err(Error::Validation(format!("duplicate class id {}", c.id)));
            }
            if !(c.uses_left || c.uses_right) {
                return Err(Error::Validation(format!(
                    "class {} ({}) uses neither hand",
                    c.id, c.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<SignSample>,
}

/// A single broken invariant found by [`validate_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub sample_id: String,
    pub frame: Option<usize>,
    pub hand: Option<Hand>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sample {}", self.sample_id)?;
        if let Some(i) = self.frame {
            write!(f, " frame {i}")?;
        }
        if let Some(h) = self.hand {
            write!(f, " {h} hand")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Checks every type invariant of a sample against a handshape vocabulary of size `k_hs`.
/// Returns an empty list iff the sample is valid.
pub fn validate_sample(s: &SignSample, k_hs: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |frame: Option<usize>, hand: Option<Hand>, message: String| {
        out.push(Violation {
            sample_id: s.id.clone(),
            frame,
            hand,
            message,
        })
    };

    if s.subject < 1 {
        push(None, None, "subject id must be >= 1".into());
    }
    if s.frames.is_empty() {
        push(None, None, "sample has no frames".into());
    }
    for (i, w) in s.frames.windows(2).enumerate() {
        if w[1].t <= w[0].t {
            push(
                Some(i + 1),
                None,
                format!("frame index {} does not follow {}", w[1].t, w[0].t),
            );
        }
    }
    for (i, frame) in s.frames.iter().enumerate() {
        for hand in Hand::BOTH {
            let obs = frame.hand(hand);
            if !obs.present {
                if obs.pos.is_some() || obs.hs.is_some() {
                    push(
                        Some(i),
                        Some(hand),
                        "absent hand carries pos/hs fields".into(),
                    );
                }
                continue;
            }
            match obs.pos {
                None => push(Some(i), Some(hand), "present hand without pos".into()),
                Some(p) if !p.is_finite() => {
                    push(Some(i), Some(hand), "non-finite position".into())
                }
                Some(_) => {}
            }
            match &obs.hs {
                None => push(Some(i), Some(hand), "present hand without hs".into()),
                Some(hs) if hs.len() != k_hs => push(
                    Some(i),
                    Some(hand),
                    format!("hs has length {} but handshape_dim is {k_hs}", hs.len()),
                ),
                Some(hs) => {
                    if hs.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        push(Some(i), Some(hand), "hs entry outside [0, 1]".into());
                    } else {
                        let sum: f64 = hs.iter().sum();
                        if (sum - 1.0).abs() > HS_SUM_TOLERANCE {
                            push(
                                Some(i),
                                Some(hand),
                                format!("hs sums to {sum} instead of 1"),
                            );
                        }
                    }
                }
            }
        }
    }
    out
}

impl Dataset {
    /// Validates the manifest and every sample; the first problem found becomes the error.
    pub fn new(manifest: Manifest, samples: Vec<SignSample>) -> Result<Self> {
        manifest.validate()?;
        let mut ids = HashSet::new();
        for s in &samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate sample id {}", s.id)));
            }
            if let Some(v) = validate_sample(s, manifest.handshape_dim).into_iter().next() {
                return Err(Error::Validation(v.to_string()));
            }
            if let Some(c) = s.class_label {
                if manifest.class(c).is_none() {
                    return Err(Error::Validation(format!(
                        "sample {} has class {c}, which the manifest does not list",
                        s.id
                    )));
                }
            }
        }
        Ok(Dataset { manifest, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.samples.iter().map(|s| s.subject).collect();
        set.into_iter().collect()
    }

    /// Samples of each class in dataset order, keyed by class id.
    pub fn samples_by_class(&self) -> BTreeMap<u32, Vec<&SignSample>> {
        let mut map: BTreeMap<u32, Vec<&SignSample>> = self
            .manifest
            .classes
            .iter()
            .map(|c| (c.id, Vec::new()))
            .collect();
        for s in &self.samples {
            if let Some(c) = s.class_label {
                map.entry(c).or_default().push(s);
            }
        }
        map
    }

    /// Restricts the dataset to the classes accepted by `keep`; the manifest shrinks with it.
    pub fn filter_classes(&self, keep: impl Fn(&ClassAnnotation) -> bool) -> Dataset {
        let classes: Vec<ClassAnnotation> =
            self.manifest.classes.iter().filter(|c| keep(c)).cloned().collect();
        let ids: HashSet<u32> = classes.iter().map(|c| c.id).collect();
        let samples = self
            .samples
            .iter()
            .filter(|s| s.class_label.is_some_and(|c| ids.contains(&c)))
            .cloned()
            .collect();
        Dataset {
            manifest: Manifest {
                num_classes: classes.len(),
                handshape_dim: self.manifest.handshape_dim,
                classes,
            },
            samples,
        }
    }

    fn with_samples(&self, samples: Vec<SignSample>) -> Dataset {
        Dataset {
            manifest: self.manifest.clone(),
            samples,
        }
    }
}

pub(crate) fn parse_error(path: &Path, text: &str, line: usize, e: &serde_json::Error) -> Error {
    // serde_json reports 1-based line/column inside `text`
    let offset = text
        .split_inclusive('\n')
        .take(e.line().saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + e.column().saturating_sub(1);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        offset,
        message: e.to_string(),
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, &text, e.line(), &e))
}

/// Parses a samples file without validating it against a manifest.
pub fn load_samples(path: &Path) -> Result<Vec<SignSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    let mut offset = 0usize;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let len = line.len() + 1;
        if !line.trim().is_empty() {
            let s: SignSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                offset: offset + e.column().saturating_sub(1),
                message: e.to_string(),
            })?;
            samples.push(s);
        }
        offset += len;
    }
    Ok(samples)
}

pub fn load_dataset(samples_path: &Path, manifest_path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(manifest_path)?;
    let samples = load_samples(samples_path)?;
    Dataset::new(manifest, samples)
}

pub fn save_samples(samples: &[SignSample], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let line = serde_json::to_string(s).expect("sample serialization cannot fail");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn save_dataset(d: &Dataset, samples_path: &Path, manifest_path: &Path) -> Result<()> {
    save_samples(&d.samples, samples_path)?;
    save_manifest(&d.manifest, manifest_path)
}

/// Number of training samples for a class of `n` samples: round half up, then kept within
/// `[1, n - 1]` so both sides of the split see the class.
fn train_count(n: usize, train_fraction: f64) -> usize {
    let k = (train_fraction * n as f64 + 0.5 + 1e-9).floor() as usize;
    k.clamp(1, n - 1)
}

/// Per-class random split. Deterministic given `seed`; both halves keep dataset order.
pub fn split_stratified(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if let Some(s) = d.samples.iter().find(|s| s.class_label.is_none()) {
        return Err(Error::Validation(format!(
            "sample {} is unlabeled and cannot be split by class",
            s.id
        )));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> =
        d.manifest.classes.iter().map(|c| (c.id, Vec::new())).collect();
    for (i, s) in d.samples.iter().enumerate() {
        by_class.entry(s.class_label.unwrap()).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; d.samples.len()];
    for (class, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(Error::Validation(format!(
                "class {class} has {} samples; a stratified split needs at least 2",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..train_count(idx.len(), train_fraction)] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = d
        .samples
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    Ok((
        d.with_samples(train.into_iter().map(|(s, _)| s).collect()),
        d.with_samples(test.into_iter().map(|(s, _)| s).collect()),
    ))
}

/// Holds out every sample of one subject.
pub fn split_by_subject(d: &Dataset, held_out_subject: u32) -> Result<(Dataset, Dataset)> {
    if !d.samples.iter().any(|s| s.subject == held_out_subject) {
        return Err(Error::InvalidInput(format!(
            "subject {held_out_subject} does not occur in the dataset"
        )));
    }
    let (test, train): (Vec<_>, Vec<_>) = d
        .samples
        .iter()
        .cloned()
        .partition(|s| s.subject == held_out_subject);
    if train.is_empty() {
        return Err(Error::InvalidInput(format!(
            "holding out subject {held_out_subject} leaves no training samples"
        )));
    }
    Ok((d.with_samples(train), d.with_samples(test)))
}
