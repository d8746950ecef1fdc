//! End-to-end synthetic experiments: train a neighborhood-supervised and a
//! collar-supervised model on the same corpus, tune detection thresholds on
//! the development split, and score the test split at two forgiveness
//! collars. [`collar_sweep`] repeats the collar-aware run over a list of
//! training collars.
//!
//! Configuration is a plain `key = value` file; see [`ExperimentConfig`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::detection::{
    accumulate_peakiness, report_from_histogram, DetectionMode, DetectorConfig, PeakinessReport,
};
use crate::error::{Error, Result};
use crate::evaluation::{best_point, evaluate_at, pr_curve, write_pr_curve_csv, PrPoint, PrfScore, ScoredRecording};
use crate::model::{ModelConfig, TinyModel};
use crate::synth::{generate_corpus, SynthConfig, SynthCorpus, SynthSequence};
use crate::train::{train, Objective, Optimizer, TrainConfig};
use crate::types::{CollarConfig, CollarSemantics};

/// Forgiveness collars (seconds) every report is scored at.
pub const FORGIVENESS_COLLARS: [f64; 2] = [0.25, 0.5];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub collar: CollarConfig,
    pub neighborhood_radius_seconds: f64,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_grad_norm: Option<f64>,
    pub weight_decay: f64,
    pub detector_mode: DetectionMode,
    pub min_separation: f64,
    /// Half-width in frames of the region inspected around each reference
    /// boundary for the peakiness statistic.
    pub peak_window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synth = SynthConfig {
            num_train: 300,
            num_dev: 60,
            num_test: 60,
            boundary_rate: 0.01,
            annotation_jitter_frames: 3,
            min_boundary_spacing: 20,
            feature_dim: 6,
            speaker_signature_strength: 1.0,
            noise_level: 0.6,
            seed: 1,
            ..SynthConfig::default()
        };
        Self {
            model: ModelConfig {
                feature_dim: synth.feature_dim,
                past_frames: 6,
                future_frames: 6,
                hidden: 16,
            },
            synth,
            collar: CollarConfig::inclusive(3),
            neighborhood_radius_seconds: 0.05,
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            batch_size: 8,
            epochs: 10,
            max_grad_norm: Some(10.0),
            weight_decay: 0.0,
            detector_mode: DetectionMode::ThresholdOnly,
            min_separation: 0.0,
            peak_window: 6,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.collar.validate()?;
        if self.model.feature_dim != self.synth.feature_dim {
            return Err(Error::InvalidConfig(
                "model and corpus feature dimensions differ".into(),
            ));
        }
        if self.peak_window == 0 {
            return Err(Error::InvalidConfig("peak_window must be >= 1".into()));
        }
        self.detector().validate()?;
        self.train_config(Objective::CollarAware, self.collar).validate()
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            threshold: 0.5,
            mode: self.detector_mode,
            min_separation: self.min_separation,
        }
    }

    pub fn train_config(&self, objective: Objective, collar: CollarConfig) -> TrainConfig {
        TrainConfig {
            objective,
            collar,
            neighborhood_radius_seconds: self.neighborhood_radius_seconds,
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            max_grad_norm: self.max_grad_norm,
            weight_decay: self.weight_decay,
            seed: self.synth.seed,
        }
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are
    /// ignored; unknown keys are errors. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, format!("expected key = value, got `{line}`")))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|msg| Error::parse(lineno, msg))?;
        }
        cfg.model.feature_dim = cfg.synth.feature_dim;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("invalid value `{value}` for {key}"))
        }
        let s = &mut self.synth;
        match key {
            "seed" => s.seed = num(key, value)?,
            "num_train" => s.num_train = num(key, value)?,
            "num_dev" => s.num_dev = num(key, value)?,
            "num_test" => s.num_test = num(key, value)?,
            "frame_shift" => s.frame_shift = num(key, value)?,
            "min_frames" => s.min_frames = num(key, value)?,
            "max_frames" => s.max_frames = num(key, value)?,
            "boundary_rate" => s.boundary_rate = num(key, value)?,
            "annotation_jitter_frames" => s.annotation_jitter_frames = num(key, value)?,
            "min_boundary_spacing" => s.min_boundary_spacing = num(key, value)?,
            "feature_dim" => s.feature_dim = num(key, value)?,
            "speaker_signature_strength" => s.speaker_signature_strength = num(key, value)?,
            "noise_level" => s.noise_level = num(key, value)?,
            "past_frames" => self.model.past_frames = num(key, value)?,
            "future_frames" => self.model.future_frames = num(key, value)?,
            "hidden" => self.model.hidden = num(key, value)?,
            "collar_frames" => self.collar.collar_frames = num(key, value)?,
            "collar_semantics" => {
                self.collar.semantics = match value {
                    "inclusive" => CollarSemantics::Inclusive,
                    "strict" => CollarSemantics::Strict,
                    _ => return Err(format!("unknown collar semantics `{value}`")),
                }
            }
            "neighborhood_radius" => self.neighborhood_radius_seconds = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "sgd" => Optimizer::Sgd,
                    "adam" => Optimizer::Adam,
                    _ => return Err(format!("unknown optimizer `{value}`")),
                }
            }
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "max_grad_norm" => {
                self.max_grad_norm = match value {
                    "none" => None,
                    _ => Some(num(key, value)?),
                }
            }
            "detector_mode" => {
                self.detector_mode = match value {
                    "threshold" => DetectionMode::ThresholdOnly,
                    "local_maxima" => DetectionMode::LocalMaxima,
                    _ => return Err(format!("unknown detector mode `{value}`")),
                }
            }
            "min_separation" => self.min_separation = num(key, value)?,
            "peak_window" => self.peak_window = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn initial_output_bias(&self) -> f64 {
        let r = self.synth.boundary_rate;
        (r / (1.0 - r)).ln()
    }
}

/// Tuned threshold and test scores at one forgiveness collar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForgivenessResult {
    pub forgiveness: f64,
    pub threshold: f64,
    pub dev_f1: f64,
    pub test: PrfScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResult {
    pub label: String,
    pub objective: Objective,
    pub collar_frames: usize,
    pub loss_trace: Vec<f64>,
    /// One entry per value of [`FORGIVENESS_COLLARS`].
    pub scores: Vec<ForgivenessResult>,
    /// Around test references, at the threshold tuned for the first
    /// forgiveness collar.
    pub peakiness: PeakinessReport,
    /// Test-set curve at the first forgiveness collar.
    pub pr_curve: Vec<PrPoint>,
}

impl ModelResult {
    /// Test F1 at the given forgiveness collar.
    pub fn f1_at(&self, forgiveness: f64) -> Option<f64> {
        self.scores
            .iter()
            .find(|s| (s.forgiveness - forgiveness).abs() < 1e-12)
            .map(|s| s.test.f1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub neighborhood: ModelResult,
    pub collar: ModelResult,
}

fn score_split(model: &TinyModel, split: &[SynthSequence]) -> Result<Vec<ScoredRecording>> {
    split
        .iter()
        .map(|s| Ok((model.score(s)?, s.annotated.to_times(s.frame_shift))))
        .collect()
}

/// Trains one model and evaluates it on the corpus' dev and test splits.
pub fn train_and_evaluate(
    corpus: &SynthCorpus,
    cfg: &ExperimentConfig,
    objective: Objective,
    collar: CollarConfig,
    label: &str,
) -> Result<ModelResult> {
    let model = TinyModel::new(cfg.model, cfg.initial_output_bias(), cfg.synth.seed)?;
    let outcome = train(model, &corpus.train, &cfg.train_config(objective, collar))?;
    let dev = score_split(&outcome.model, &corpus.dev)?;
    let test = score_split(&outcome.model, &corpus.test)?;
    let detector = cfg.detector();

    let mut scores = Vec::new();
    let mut curve = Vec::new();
    for (k, &forgiveness) in FORGIVENESS_COLLARS.iter().enumerate() {
        let (threshold, dev_f1) = if dev.is_empty() {
            (detector.threshold, f64::NAN)
        } else {
            let best = best_point(&pr_curve(&dev, &detector, forgiveness)?);
            (best.threshold, best.f1)
        };
        let tuned = detector.with_threshold(threshold);
        let test_score = evaluate_at(&test, &tuned, forgiveness).score();
        if k == 0 && !test.is_empty() {
            curve = pr_curve(&test, &detector, forgiveness)?;
        }
        scores.push(ForgivenessResult {
            forgiveness,
            threshold,
            dev_f1,
            test: test_score,
        });
    }

    let mut histogram = Default::default();
    let mut analyzed = 0;
    for ((scored, _), seq) in test.iter().zip(&corpus.test) {
        analyzed += seq.annotated.len();
        accumulate_peakiness(
            &scored.boundary_probs(),
            seq.annotated.positions(),
            scores[0].threshold,
            cfg.peak_window,
            &mut histogram,
        );
    }

    Ok(ModelResult {
        label: label.to_string(),
        objective,
        collar_frames: collar.collar_frames,
        loss_trace: outcome.loss_trace,
        scores,
        peakiness: report_from_histogram(histogram, analyzed),
        pr_curve: curve,
    })
}

/// Trains the neighborhood baseline and the collar-aware model on one
/// generated corpus and scores both.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let corpus = generate_corpus(&cfg.synth)?;
    let neighborhood = train_and_evaluate(
        &corpus,
        cfg,
        Objective::StandardNeighborhood,
        CollarConfig::inclusive(0),
        "neighborhood",
    )?;
    let collar = train_and_evaluate(&corpus, cfg, Objective::CollarAware, cfg.collar, "collar")?;
    Ok(ExperimentReport {
        neighborhood,
        collar,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub collar: CollarConfig,
    pub collar_seconds: f64,
    /// Test F1 per value of [`FORGIVENESS_COLLARS`].
    pub f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Test F1 of the neighborhood baseline per forgiveness collar.
    pub baseline_f1: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

/// Trains one collar-aware model per training collar, all on the same corpus
/// and seed, next to a neighborhood baseline.
pub fn collar_sweep(collars: &[CollarConfig], cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let corpus = generate_corpus(&cfg.synth)?;
    let f1s = |r: &ModelResult| r.scores.iter().map(|s| s.test.f1).collect::<Vec<_>>();
    let baseline = train_and_evaluate(
        &corpus,
        cfg,
        Objective::StandardNeighborhood,
        CollarConfig::inclusive(0),
        "neighborhood",
    )?;
    let mut rows = Vec::with_capacity(collars.len());
    for &collar in collars {
        collar.validate()?;
        let r = train_and_evaluate(&corpus, cfg, Objective::CollarAware, collar, "collar")?;
        rows.push(SweepRow {
            collar,
            collar_seconds: collar.collar_frames as f64 * cfg.synth.frame_shift,
            f1: f1s(&r),
        });
    }
    Ok(SweepReport {
        baseline_f1: f1s(&baseline),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

fn fmt_peak(p: &PeakinessReport) -> String {
    p.mean_active_frames_per_detection
        .map_or_else(|| "-".to_string(), |m| format!("{m:.3}"))
}

impl ExperimentReport {
    pub fn models(&self) -> [&ModelResult; 2] {
        [&self.neighborhood, &self.collar]
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<14}", "model");
        for f in FORGIVENESS_COLLARS {
            let _ = write!(out, " | {:^26}", format!("forgiveness={f:.2}s"));
        }
        let _ = writeln!(out, " | {:>9}", "peakiness");
        let _ = write!(out, "{:<14}", "");
        for _ in FORGIVENESS_COLLARS {
            let _ = write!(out, " | {:>8} {:>8} {:>8}", "P", "R", "F1");
        }
        let _ = writeln!(out, " | {:>9}", "");
        for m in self.models() {
            let _ = write!(out, "{:<14}", m.label);
            for s in &m.scores {
                let _ = write!(
                    out,
                    " | {:>8.3} {:>8.3} {:>8.3}",
                    s.test.precision, s.test.recall, s.test.f1
                );
            }
            let _ = writeln!(out, " | {:>9}", fmt_peak(&m.peakiness));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("model,forgiveness,threshold,precision,recall,f1,peakiness_mean\n");
        for m in self.models() {
            for s in &m.scores {
                let _ = writeln!(
                    out,
                    "{},{:.2},{:.9},{:.6},{:.6},{:.6},{}",
                    m.label,
                    s.forgiveness,
                    s.threshold,
                    s.test.precision,
                    s.test.recall,
                    s.test.f1,
                    fmt_peak(&m.peakiness)
                );
            }
        }
        out
    }

    /// Writes `report.txt`, `report.csv` and one `pr_<model>.csv` per model.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), self.to_text())?;
        fs::write(dir.join("report.csv"), self.to_csv())?;
        for m in self.models() {
            let mut buf = Vec::new();
            write_pr_curve_csv(&mut buf, &m.pr_curve)?;
            fs::write(dir.join(format!("pr_{}.csv", m.label)), buf)?;
        }
        Ok(())
    }
}

impl SweepReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<14} {:>9}", "training", "collar_s");
        for f in FORGIVENESS_COLLARS {
            let _ = write!(out, " {:>10}", format!("F1@{f:.2}s"));
        }
        out.push('\n');
        let _ = write!(out, "{:<14} {:>9}", "neighborhood", "-");
        for f in &self.baseline_f1 {
            let _ = write!(out, " {f:>10.3}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{:<14} {:>9.3}",
                format!("collar c={}", r.collar.collar_frames),
                r.collar_seconds
            );
            for f in &r.f1 {
                let _ = write!(out, " {f:>10.3}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("training,collar_frames,collar_seconds");
        for f in FORGIVENESS_COLLARS {
            let _ = write!(out, ",f1_{f:.2}");
        }
        out.push('\n');
        out.push_str("neighborhood,,");
        for f in &self.baseline_f1 {
            let _ = write!(out, ",{f:.6}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "collar,{},{:.3}", r.collar.collar_frames, r.collar_seconds);
            for f in &r.f1 {
                let _ = write!(out, ",{f:.6}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes `sweep.txt` and `sweep.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("sweep.txt"), self.to_text())?;
        fs::write(dir.join("sweep.csv"), self.to_csv())?;
        Ok(())
    }
}
