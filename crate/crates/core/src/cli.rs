//! Command-line interface: `train`, `predict`, `evaluate`, `synth` and `validate`.
//!
//! Exit codes: 0 success, 1 usage or I/O problem, 2 data validation, 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classifier::{
    classify, load_model, save_model, train, Backend, FeatureMask, QuantizerKind, TrainConfig,
};
use crate::dataset::{load_dataset, load_manifest, load_samples, validate_sample, Hand};
use crate::error::{Error, Result};
use crate::eval::{
    run_subject_dependent, run_subject_independent, run_subset, save_json, weighted_subset_mean,
    ConfusionMatrix, EvalConfig, EvalReport, Subset, WeightedMask,
};
use crate::hmm::HmmConfig;
use crate::synth::{ablation_prototypes, generate_dataset, handshape_pair_prototypes, sample_prototypes, GeneratorConfig};

#[derive(Debug, Parser)]
#[command(name = "signbow", version, about = "Bag-of-words sign classifier over hand-feature tracks")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Classify samples with a trained model and write a CSV.
    Predict(PredictArgs),
    /// Run an evaluation protocol and write a JSON report plus confusion CSVs.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset with known ground truth.
    Synth(SynthArgs),
    /// Check a dataset against its manifest.
    Validate(DataArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Samples file, one JSON object per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Manifest with class annotations.
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Bow,
    Hmm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum QuantizerArg {
    Codebook,
    Argmax,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "bow")]
    pub backend: BackendArg,
    /// Direction bins D.
    #[arg(short = 'D', long = "direction-bins", default_value_t = 16)]
    pub direction_bins: usize,
    /// Handshape codewords C.
    #[arg(short = 'C', long, default_value_t = 32)]
    pub codewords: usize,
    /// Laplace smoothing for the categorical factors.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Mean amount of movement (cm) above which the trajectory factor is used.
    #[arg(long = "gate-threshold-cm", default_value_t = 5.0)]
    pub gate_threshold_cm: f64,
    /// A hand counts as present when it is seen in more than this fraction of frames.
    #[arg(long = "presence-fraction", default_value_t = 0.5)]
    pub presence_fraction: f64,
    #[arg(long, value_enum, default_value = "codebook")]
    pub quantizer: QuantizerArg,
    #[arg(long = "hmm-states", default_value_t = 4)]
    pub hmm_states: usize,
    /// Gaussian components per HMM state (1-3).
    #[arg(long = "hmm-components", default_value_t = 1)]
    pub hmm_components: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModelArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            backend: match self.backend {
                BackendArg::Bow => Backend::Bow,
                BackendArg::Hmm => Backend::Hmm,
            },
            direction_bins: self.direction_bins,
            codewords: self.codewords,
            alpha: self.alpha,
            gate_threshold_cm: self.gate_threshold_cm,
            presence_fraction: self.presence_fraction,
            quantizer: match self.quantizer {
                QuantizerArg::Codebook => QuantizerKind::Codebook,
                QuantizerArg::Argmax => QuantizerKind::Argmax,
            },
            seed: self.seed,
            hmm: HmmConfig {
                num_states: self.hmm_states,
                mixture_components: self.hmm_components,
                ..HmmConfig::default()
            },
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub model_args: ModelArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Samples to classify; class labels are ignored.
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Feature mask: all,hs,mov,pos,hs-pos,hs-mov,pos-mov.
    #[arg(long, default_value = "all")]
    pub mask: String,
    /// Alternatives listed after the prediction.
    #[arg(long, default_value_t = 3)]
    pub top: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Dependent,
    Independent,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output report (JSON). Confusion CSVs are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "dependent")]
    pub protocol: ProtocolArg,
    #[arg(long, default_value_t = 30)]
    pub runs: usize,
    #[arg(long = "train-fraction", default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Comma-separated feature masks.
    #[arg(long, default_value = "all")]
    pub masks: String,
    /// Class subset: all, 1h or 2h. Give both 1h and 2h for the weighted combination.
    #[arg(long, default_value = "all")]
    pub subset: Vec<String>,
    #[command(flatten)]
    pub model_args: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    /// Random prototypes.
    Default,
    /// 27 classes crossing 3 position, 3 movement and 3 handshape levels.
    Ablation,
    /// Random prototypes where classes 0 and 1 differ only in handshape.
    HsPair,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for samples.jsonl, manifest.json and prototypes.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "default")]
    pub design: DesignArg,
    #[arg(long, default_value_t = 64)]
    pub classes: usize,
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Standard deviation (cm) of the per-subject positional offset.
    #[arg(long = "offset-scale", default_value_t = 1.0)]
    pub offset_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short = 'D', long = "direction-bins", default_value_t = 16)]
    pub direction_bins: usize,
    #[arg(long = "handshape-dim", default_value_t = 16)]
    pub handshape_dim: usize,
    #[arg(long = "one-handed-fraction", default_value_t = 42.0 / 64.0)]
    pub one_handed_fraction: f64,
    #[arg(long = "low-movement-fraction", default_value_t = 0.2)]
    pub low_movement_fraction: f64,
    /// Standard deviation (cm) of first/last positions.
    #[arg(long = "pos-noise", default_value_t = 1.2)]
    pub pos_noise: f64,
    #[arg(long = "frames-min", default_value_t = 16)]
    pub frames_min: usize,
    #[arg(long = "frames-max", default_value_t = 32)]
    pub frames_max: usize,
    /// Minimum distance (cm) between class position means.
    #[arg(long = "min-separation", default_value_t = 6.0)]
    pub min_separation: f64,
    /// Bend trajectories into arcs.
    #[arg(long)]
    pub mismatch: bool,
}

impl SynthArgs {
    fn config(&self) -> GeneratorConfig {
        GeneratorConfig {
            num_classes: self.classes,
            num_subjects: self.subjects,
            reps_per_subject: self.reps,
            subject_offset_scale: self.offset_scale,
            seed: self.seed,
            direction_bins: self.direction_bins,
            handshape_dim: self.handshape_dim,
            fraction_one_handed: self.one_handed_fraction,
            fraction_low_movement: self.low_movement_fraction,
            pos_noise: self.pos_noise,
            frames_min: self.frames_min,
            frames_max: self.frames_max,
            min_separation: self.min_separation,
            mismatch: self.mismatch,
            ..GeneratorConfig::default()
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return 1;
        }
        // the global pool can only be set once per process; later calls keep the first
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            if code == 1 {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            code
        }
    }
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

#[derive(Serialize)]
struct ClassSummary {
    id: u32,
    name: String,
    samples: usize,
    uses_left: bool,
    uses_right: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    left_gate_active: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    right_gate_active: Option<bool>,
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let d = load_dataset(&a.data.data, &a.data.manifest)?;
    let model = train(&d, &a.model_args.config())?;
    save_model(&model, &a.model)?;
    let by_class = d.samples_by_class();
    let summary: Vec<ClassSummary> = model
        .classes
        .iter()
        .map(|c| ClassSummary {
            id: c.id,
            name: d.manifest.class(c.id).map(|x| x.name.clone()).unwrap_or_default(),
            samples: by_class.get(&c.id).map_or(0, Vec::len),
            uses_left: c.uses_left,
            uses_right: c.uses_right,
            left_gate_active: c.hand(Hand::Left).map(|h| h.gate.active),
            right_gate_active: c.hand(Hand::Right).map(|h| h.gate.active),
        })
        .collect();
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({ "classes": summary }))
            .expect("summary serialization cannot fail")
    );
    Ok(())
}

fn fmt_score(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x}")
    }
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let mask: FeatureMask = a.mask.parse()?;
    let model = load_model(&a.model)?;
    let samples = load_samples(&a.data)?;
    let mut problems = Vec::new();
    for s in &samples {
        problems.extend(validate_sample(s, model.handshape_dim).into_iter().map(|v| v.to_string()));
    }
    if !problems.is_empty() {
        return Err(Error::Validation(format!(
            "{} problem(s) in {}:\n  {}",
            problems.len(),
            a.data.display(),
            problems.join("\n  ")
        )));
    }
    let mut w = csv::Writer::from_path(&a.out).map_err(|e| csv_io(&a.out, e))?;
    let mut header = vec![
        "sample_id".to_string(),
        "predicted_class".into(),
        "log_score".into(),
        "impossible".into(),
    ];
    for k in 1..=a.top {
        header.push(format!("alt{k}_class"));
        header.push(format!("alt{k}_score"));
    }
    w.write_record(&header).map_err(|e| csv_io(&a.out, e))?;
    for s in &samples {
        let ranking = classify(s, &model, mask)?;
        let best = ranking[0];
        let mut rec = vec![
            s.id.clone(),
            best.class_id.to_string(),
            fmt_score(best.log_score),
            best.impossible.to_string(),
        ];
        let alternatives = ranking[1..]
            .iter()
            .filter(|c| best.impossible || !c.impossible)
            .take(a.top);
        let mut filled = 0;
        for c in alternatives {
            rec.push(c.class_id.to_string());
            rec.push(fmt_score(c.log_score));
            filled += 1;
        }
        for _ in filled..a.top {
            rec.push(String::new());
            rec.push(String::new());
        }
        w.write_record(&rec).map_err(|e| csv_io(&a.out, e))?;
    }
    w.flush().map_err(|e| Error::io(&a.out, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// `report.json` -> `report_confusion_<mask>.csv` in the same directory.
fn confusion_path(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    out.with_file_name(format!("{stem}_confusion_{tag}.csv"))
}

fn print_dependent(label: &str, r: &EvalReport) {
    for m in &r.masks {
        println!("{label}{:<8} {:6.2} ± {:.2}", m.mask, 100.0 * m.mean, 100.0 * m.std);
    }
}

fn write_confusions(out: &Path, prefix: &str, r: &EvalReport) -> Result<()> {
    for m in &r.masks {
        m.confusion.write_csv(&confusion_path(out, &format!("{prefix}{}", m.mask)))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SubsetReport {
    one_handed: EvalReport,
    two_handed: EvalReport,
    weighted: Vec<WeightedMask>,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let d = load_dataset(&a.data.data, &a.data.manifest)?;
    let subsets = a
        .subset
        .iter()
        .flat_map(|s| s.split(','))
        .map(str::parse)
        .collect::<Result<Vec<Subset>>>()?;
    let cfg = EvalConfig {
        runs: a.runs,
        train_fraction: a.train_fraction,
        seed: a.model_args.seed,
        masks: FeatureMask::parse_list(&a.masks)?,
        subset: subsets.first().copied().unwrap_or(Subset::All),
        train: a.model_args.config(),
    };
    let started = Instant::now();
    let pair = subsets.contains(&Subset::OneHanded) && subsets.contains(&Subset::TwoHanded);
    match a.protocol {
        ProtocolArg::Dependent if pair => {
            let one = run_subset(&d, &cfg, Subset::OneHanded)?;
            let two = run_subset(&d, &cfg, Subset::TwoHanded)?;
            let weighted = weighted_subset_mean(&one, &two);
            print_dependent("1h ", &one);
            print_dependent("2h ", &two);
            for w in &weighted {
                println!("weighted {:<8} {:6.2}", w.mask, 100.0 * w.weighted);
            }
            write_confusions(&a.out, "1h_", &one)?;
            write_confusions(&a.out, "2h_", &two)?;
            save_json(
                &SubsetReport {
                    one_handed: one,
                    two_handed: two,
                    weighted,
                },
                &a.out,
            )?;
        }
        ProtocolArg::Dependent => {
            let r = run_subject_dependent(&d, &cfg)?;
            print_dependent("", &r);
            write_confusions(&a.out, "", &r)?;
            save_json(&r, &a.out)?;
        }
        ProtocolArg::Independent => {
            let r = run_subject_independent(&d, &cfg)?;
            let ids = cfg.subset.apply(&d)?.manifest.class_ids();
            let header: Vec<String> = r.subjects.iter().map(|s| format!("{:>6}", format!("s{}", s.subject))).collect();
            println!("{:<8} {} {:>6}", "mask", header.join(" "), "mean");
            for (mi, p) in r.pooled.iter().enumerate() {
                let cols: Vec<String> = r
                    .subjects
                    .iter()
                    .map(|s| format!("{:6.2}", 100.0 * s.report.masks[mi].mean))
                    .collect();
                println!("{:<8} {} {:6.2}", p.mask, cols.join(" "), 100.0 * p.mean);
                let mut total = ConfusionMatrix::zeros(ids.clone());
                for s in &r.subjects {
                    total.add(&s.report.masks[mi].confusion);
                }
                total.write_csv(&confusion_path(&a.out, &p.mask))?;
            }
            save_json(&r, &a.out)?;
        }
    }
    eprintln!("elapsed: {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = a.config();
    let set = match a.design {
        DesignArg::Default => sample_prototypes(&cfg)?,
        DesignArg::Ablation => ablation_prototypes(&cfg)?,
        DesignArg::HsPair => handshape_pair_prototypes(&cfg)?,
    };
    let d = generate_dataset(&set)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    crate::dataset::save_dataset(&d, &a.out.join("samples.jsonl"), &a.out.join("manifest.json"))?;
    set.save(&a.out.join("prototypes.json"))?;
    println!(
        "{} samples, {} classes, {} subjects -> {}",
        d.len(),
        d.manifest.num_classes,
        d.subjects().len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_validate(a: &DataArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    manifest.validate()?;
    let samples = load_samples(&a.data)?;
    let mut problems: Vec<String> = Vec::new();
    for s in &samples {
        problems.extend(validate_sample(s, manifest.handshape_dim).iter().map(|v| v.to_string()));
        if let Some(c) = s.class_label {
            if manifest.class(c).is_none() {
                problems.push(format!("sample {}: unknown class {c}", s.id));
            }
        }
    }
    for p in &problems {
        println!("{p}");
    }
    if problems.is_empty() {
        println!("{} samples OK", samples.len());
        Ok(())
    } else {
        Err(Error::Validation(format!("{} problem(s) found", problems.len())))
    }
}
