//! Evaluation protocols: repeated stratified 80/20 subsampling, leave-one-subject-out,
//! one-/two-handed subsets and feature ablations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{classify_features, extract_features, train, FeatureMask, TrainConfig};
use crate::dataset::{split_by_subject, split_stratified, Dataset};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    OneHanded,
    TwoHanded,
}

impl FromStr for Subset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Subset::All),
            "1h" | "one_handed" => Ok(Subset::OneHanded),
            "2h" | "two_handed" => Ok(Subset::TwoHanded),
            _ => Err(Error::InvalidInput(format!("unknown subset '{s}' (all|1h|2h)"))),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::All => "all",
            Subset::OneHanded => "1h",
            Subset::TwoHanded => "2h",
        })
    }
}

impl Subset {
    /// Restricts `d` to the classes of this subset; one-handed means exactly one used hand.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        let out = match self {
            Subset::All => d.clone(),
            Subset::OneHanded => d.filter_classes(|c| c.is_one_handed()),
            Subset::TwoHanded => d.filter_classes(|c| c.uses_left && c.uses_right),
        };
        if out.manifest.classes.is_empty() || out.samples.is_empty() {
            return Err(Error::InvalidInput(format!("subset '{self}' is empty")));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub runs: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub masks: Vec<FeatureMask>,
    pub subset: Subset,
    /// Model settings; its seed is replaced by the per-run derived seed.
    pub train: TrainConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            runs: 30,
            train_fraction: 0.8,
            seed: 0,
            masks: vec![FeatureMask::ALL],
            subset: Subset::All,
            train: TrainConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::InvalidInput("runs must be >= 1".into()));
        }
        if self.masks.is_empty() {
            return Err(Error::InvalidInput("at least one feature mask is required".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        self.train.validate()
    }
}

// ---------------------------------------------------------------------------
// Confusion matrices
// ---------------------------------------------------------------------------

/// Rows are true classes, columns predictions, both indexed in `class_ids` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_ids: Vec<u32>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(class_ids: Vec<u32>) -> Self {
        let n = class_ids.len();
        ConfusionMatrix {
            class_ids,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.correct() as f64 / total as f64
        }
    }

    fn index(&self, id: u32) -> Result<usize> {
        self.class_ids
            .iter()
            .position(|c| *c == id)
            .ok_or_else(|| Error::InvalidInput(format!("class {id} is not in the confusion matrix")))
    }

    /// Count of samples of class `truth` predicted as `pred`, by class id.
    pub fn get(&self, truth: u32, pred: u32) -> Result<u64> {
        Ok(self.counts[self.index(truth)?][self.index(pred)?])
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, x) in r.iter_mut().zip(o) {
                *c += x;
            }
        }
    }

    /// Header row of class ids, then one row per true class.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header = vec!["class".to_string()];
        header.extend(self.class_ids.iter().map(u32::to_string));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for (id, row) in self.class_ids.iter().zip(&self.counts) {
            let mut rec = vec![id.to_string()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Builds a matrix from index-encoded labels in `0..num_classes`.
pub fn confusion_matrix(truths: &[usize], predictions: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if truths.len() != predictions.len() {
        return Err(Error::InvalidInput(format!(
            "{} truths but {} predictions",
            truths.len(),
            predictions.len()
        )));
    }
    let mut m = ConfusionMatrix::zeros((0..num_classes as u32).collect());
    for (&t, &p) in truths.iter().zip(predictions) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label pair ({t}, {p}) out of range for {num_classes} classes"
            )));
        }
        m.counts[t][p] += 1;
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub mask: String,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
    /// Summed over runs.
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub config: EvalConfig,
    pub num_classes: usize,
    pub num_samples: usize,
    /// Every run produced the same accuracies, so repetition added no information.
    pub runs_identical: bool,
    pub masks: Vec<MaskReport>,
}

impl EvalReport {
    pub fn mask(&self, m: FeatureMask) -> Option<&MaskReport> {
        self.masks.iter().find(|r| r.mask == m.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject: u32,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledMask {
    pub mask: String,
    /// Unweighted mean of the per-subject means.
    pub mean: f64,
    /// Population standard deviation of the per-subject means.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentReport {
    pub config: EvalConfig,
    pub subjects: Vec<SubjectReport>,
    pub pooled: Vec<PooledMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMask {
    pub mask: String,
    pub one_handed: f64,
    pub two_handed: f64,
    /// Weighted by the number of classes in each subset.
    pub weighted: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One train/test evaluation: a confusion matrix per mask.
fn evaluate_split(
    train_set: &Dataset,
    test_set: &Dataset,
    class_ids: &[u32],
    masks: &[FeatureMask],
    cfg: &TrainConfig,
) -> Result<Vec<ConfusionMatrix>> {
    let model = train(train_set, cfg)?;
    let per_sample = test_set
        .samples
        .par_iter()
        .map(|s| {
            let f = extract_features(s, &model)?;
            masks
                .iter()
                .map(|m| Ok(classify_features(&f, &model, *m)?[0].class_id))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![ConfusionMatrix::zeros(class_ids.to_vec()); masks.len()];
    for (s, preds) in test_set.samples.iter().zip(per_sample) {
        let truth = s
            .class_label
            .ok_or_else(|| Error::Validation(format!("test sample {} has no class label", s.id)))?;
        let t = out[0].index(truth)?;
        for (cm, p) in out.iter_mut().zip(preds) {
            let p = cm.index(p)?;
            cm.counts[t][p] += 1;
        }
    }
    Ok(out)
}

fn aggregate(
    protocol: &str,
    cfg: &EvalConfig,
    d: &Dataset,
    class_ids: Vec<u32>,
    runs: Vec<Vec<ConfusionMatrix>>,
) -> EvalReport {
    let masks = cfg
        .masks
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let accuracies: Vec<f64> = runs.iter().map(|r| r[mi].accuracy()).collect();
            let (mean, std) = mean_std(&accuracies);
            let mut confusion = ConfusionMatrix::zeros(class_ids.clone());
            for r in &runs {
                confusion.add(&r[mi]);
            }
            MaskReport {
                mask: m.name().to_string(),
                accuracies,
                mean,
                std,
                confusion,
            }
        })
        .collect::<Vec<_>>();
    let runs_identical = runs.len() > 1 && runs.windows(2).all(|w| w[0] == w[1]);
    EvalReport {
        protocol: protocol.to_string(),
        config: cfg.clone(),
        num_classes: class_ids.len(),
        num_samples: d.samples.len(),
        runs_identical,
        masks,
    }
}

/// Repeated stratified subsampling; run `i` uses the seed derived from `(cfg.seed, i)`
/// for both the split and the model.
pub fn run_subject_dependent(d: &Dataset, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let d = cfg.subset.apply(d)?;
    let class_ids = d.manifest.class_ids();
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, i as u64);
            let (tr, te) = split_stratified(&d, cfg.train_fraction, seed)?;
            let tc = TrainConfig { seed, ..cfg.train };
            evaluate_split(&tr, &te, &class_ids, &cfg.masks, &tc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate("subject_dependent", cfg, &d, class_ids, runs))
}

/// Leave-one-subject-out. Each held-out subject is evaluated `cfg.runs` times; only the
/// seeded model components vary between runs.
pub fn run_subject_independent(d: &Dataset, cfg: &EvalConfig) -> Result<IndependentReport> {
    cfg.validate()?;
    let d = cfg.subset.apply(d)?;
    let subjects = d.subjects();
    if subjects.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    let class_ids = d.manifest.class_ids();
    let subject_reports = subjects
        .par_iter()
        .map(|&subj| {
            let (tr, te) = split_by_subject(&d, subj)?;
            let subj_seed = derive_seed(cfg.seed, subj as u64);
            let runs = (0..cfg.runs)
                .into_par_iter()
                .map(|i| {
                    let tc = TrainConfig {
                        seed: derive_seed(subj_seed, i as u64),
                        ..cfg.train
                    };
                    evaluate_split(&tr, &te, &class_ids, &cfg.masks, &tc)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SubjectReport {
                subject: subj,
                report: aggregate("subject_independent", cfg, &te, class_ids.clone(), runs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = cfg
        .masks
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let means: Vec<f64> = subject_reports.iter().map(|s| s.report.masks[mi].mean).collect();
            let (mean, std) = mean_std(&means);
            PooledMask {
                mask: m.name().to_string(),
                mean,
                std,
            }
        })
        .collect();
    Ok(IndependentReport {
        config: cfg.clone(),
        subjects: subject_reports,
        pooled,
    })
}

/// Subject-dependent protocol on one subset of classes.
pub fn run_subset(d: &Dataset, cfg: &EvalConfig, subset: Subset) -> Result<EvalReport> {
    run_subject_dependent(d, &EvalConfig { subset, ..cfg.clone() })
}

/// Combines one-handed and two-handed reports weighted by their class counts.
pub fn weighted_subset_mean(one: &EvalReport, two: &EvalReport) -> Vec<WeightedMask> {
    let (n1, n2) = (one.num_classes as f64, two.num_classes as f64);
    one.masks
        .iter()
        .zip(&two.masks)
        .map(|(a, b)| WeightedMask {
            mask: a.mask.clone(),
            one_handed: a.mean,
            two_handed: b.mean,
            weighted: (a.mean * n1 + b.mean * n2) / (n1 + n2),
        })
        .collect()
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
