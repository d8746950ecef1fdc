//! `scd`: command-line front end for the speaker change detection toolkit.
//!
//! Exit codes: 0 on success, 1 on numeric or internal failure, 2 on usage
//! or input errors.

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use scd_core::detection::{
    detect_batch, DetectionMode, DetectorConfig, StreamFrame, StreamingDetector,
};
use scd_core::evaluation::match_changepoints;
use scd_core::experiment::{collar_sweep, run_experiment, ExperimentConfig};
use scd_core::io::{
    diarization_to_changepoints, parse_frame_shift_header, parse_probability, read_changepoints,
    read_frame_scores, read_rttm, write_changepoints,
};
use scd_core::losses::{bce_sparse, collar_loss_efficient};
use scd_core::{CollarConfig, Error};

#[derive(Parser)]
#[command(name = "scd", version, about = "Speaker change detection with collar-aware training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Loss (and optionally its gradient) of frame scores against references.
    Loss {
        /// Frame-score file: `frame_shift=<s>` header, one probability per line.
        #[arg(long)]
        scores: PathBuf,
        /// Reference change points, one timestamp in seconds per line.
        #[arg(long)]
        refs: PathBuf,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Collar)]
        objective: ObjectiveArg,
        /// Collar half-width in frames (collar objective only).
        #[arg(long, default_value_t = 3)]
        collar_frames: usize,
        #[arg(long, value_enum, default_value_t = SemanticsArg::Inclusive)]
        semantics: SemanticsArg,
        /// Also print `frame,d_log_p0,d_log_p1` for every frame.
        #[arg(long)]
        grad: bool,
    },
    /// Precision, recall and F1 of hypothesis change points.
    Score {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        /// Forgiveness collar in seconds.
        #[arg(long, default_value_t = 0.25)]
        forgiveness: f64,
    },
    /// Change points from frame scores.
    Detect {
        /// Frame-score file, or `-` for standard input.
        #[arg(long)]
        scores: String,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Threshold)]
        mode: ModeArg,
        /// Seconds; closer local maxima are merged (local-maxima mode).
        #[arg(long, default_value_t = 0.0)]
        min_separation: f64,
        /// Emit each detection as soon as it is final.
        #[arg(long)]
        stream: bool,
        /// Frames of lookahead in streaming mode.
        #[arg(long, default_value_t = 12)]
        lookahead: usize,
    },
    /// Change points from an RTTM diarization.
    ConvertRttm {
        #[arg(long)]
        rttm: PathBuf,
        /// Pairs of turns separated by at least this many seconds yield no change.
        #[arg(long, default_value_t = 2.0)]
        max_gap: f64,
        /// Recording to convert; required when the file holds several.
        #[arg(long)]
        file_id: Option<String>,
        /// Write `<file-id>.txt` for every recording into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the neighborhood and collar-aware models on synthetic data.
    Experiment {
        /// `key = value` configuration; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one collar-aware model per collar size.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated collar half-widths in frames.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,6")]
        collars: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Bce,
    Collar,
}

#[derive(Clone, Copy, ValueEnum)]
enum SemanticsArg {
    Inclusive,
    Strict,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Threshold,
    LocalMaxima,
}

impl From<ModeArg> for DetectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Threshold => DetectionMode::ThresholdOnly,
            ModeArg::LocalMaxima => DetectionMode::LocalMaxima,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: Command) -> scd_core::Result<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match command {
        Command::Loss {
            scores,
            refs,
            objective,
            collar_frames,
            semantics,
            grad,
        } => {
            let scores = read_frame_scores(&scores)?;
            let refs = read_changepoints(&refs)?.to_frames(scores.frame_shift(), scores.len())?;
            let result = match objective {
                ObjectiveArg::Bce => bce_sparse(&scores, &refs)?,
                ObjectiveArg::Collar => {
                    let cfg = match semantics {
                        SemanticsArg::Inclusive => CollarConfig::inclusive(collar_frames),
                        SemanticsArg::Strict => CollarConfig::strict(collar_frames),
                    };
                    collar_loss_efficient(&scores, &refs, &cfg)?
                }
            };
            writeln!(out, "loss={}", result.value)?;
            if grad {
                writeln!(out, "frame,d_log_p0,d_log_p1")?;
                for i in 0..scores.len() {
                    writeln!(
                        out,
                        "{i},{},{}",
                        result.grad.d_log_p0[i], result.grad.d_log_p1[i]
                    )?;
                }
            }
        }
        Command::Score {
            refs,
            hyps,
            forgiveness,
        } => {
            if !(forgiveness.is_finite() && forgiveness >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "forgiveness {forgiveness} must be non-negative"
                )));
            }
            let refs = read_changepoints(&refs)?;
            let hyps = read_changepoints(&hyps)?;
            let counts = match_changepoints(&refs, &hyps, forgiveness).counts();
            let s = counts.score();
            writeln!(
                out,
                "tp={} fp={} fn={}",
                counts.true_positives, counts.false_positives, counts.false_negatives
            )?;
            writeln!(out, "precision={:.6}", s.precision)?;
            writeln!(out, "recall={:.6}", s.recall)?;
            writeln!(out, "f1={:.6}", s.f1)?;
        }
        Command::Detect {
            scores,
            threshold,
            mode,
            min_separation,
            stream,
            lookahead,
        } => {
            let cfg = DetectorConfig::new(threshold, mode.into(), min_separation)?;
            if stream {
                drop(out);
                detect_stream(&scores, cfg, lookahead)?;
                return Ok(());
            }
            let seq = if scores == "-" {
                let mut text = String::new();
                io::Read::read_to_string(&mut io::stdin(), &mut text)?;
                scd_core::io::parse_frame_scores(&text)?
            } else {
                read_frame_scores(Path::new(&scores))?
            };
            write_changepoints(&mut out, &detect_batch(&seq, &cfg)?)?;
        }
        Command::ConvertRttm {
            rttm,
            max_gap,
            file_id,
            out: dir,
        } => {
            if !(max_gap.is_finite() && max_gap >= 0.0) {
                return Err(Error::InvalidConfig(format!("max gap {max_gap} must be non-negative")));
            }
            let mut recordings = read_rttm(&rttm)?;
            for segments in recordings.values_mut() {
                segments.sort_by(|a, b| a.start.total_cmp(&b.start));
            }
            if let Some(dir) = dir {
                fs::create_dir_all(&dir)?;
                for (id, segments) in &recordings {
                    if file_id.as_ref().is_some_and(|f| f != id) {
                        continue;
                    }
                    let cps = diarization_to_changepoints(segments, max_gap)?;
                    scd_core::io::save_changepoints(&dir.join(format!("{id}.txt")), &cps)?;
                }
                return Ok(());
            }
            let segments = match file_id {
                Some(id) => recordings
                    .get(&id)
                    .ok_or_else(|| Error::InvalidInput(format!("no recording `{id}` in the RTTM file")))?,
                None if recordings.len() <= 1 => match recordings.values().next() {
                    Some(s) => s,
                    None => return Ok(()),
                },
                None => {
                    return Err(Error::InvalidInput(format!(
                        "RTTM file holds {} recordings; pass --file-id or --out",
                        recordings.len()
                    )))
                }
            };
            write_changepoints(&mut out, &diarization_to_changepoints(segments, max_gap)?)?;
        }
        Command::Experiment { config, out: dir } => {
            let cfg = load_config(config.as_deref())?;
            let report = run_experiment(&cfg)?;
            write!(out, "{}", report.to_text())?;
            if let Some(dir) = dir {
                report.write_to(&dir)?;
            }
        }
        Command::Sweep {
            config,
            collars,
            out: dir,
        } => {
            let cfg = load_config(config.as_deref())?;
            let collars: Vec<CollarConfig> = collars
                .into_iter()
                .map(|c| CollarConfig {
                    collar_frames: c,
                    ..cfg.collar
                })
                .collect();
            let report = collar_sweep(&collars, &cfg)?;
            write!(out, "{}", report.to_text())?;
            if let Some(dir) = dir {
                report.write_to(&dir)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn load_config(path: Option<&Path>) -> scd_core::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Reads a frame-score stream line by line and prints each detection as
/// soon as the detector finalizes it.
fn detect_stream(source: &str, cfg: DetectorConfig, lookahead: usize) -> scd_core::Result<()> {
    let reader: Box<dyn BufRead> = if source == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(io::BufReader::new(fs::File::open(source)?))
    };
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing `frame_shift=<seconds>` header".into(),
        })?;
    let shift = parse_frame_shift_header(&header, 1)?;
    let mut detector = StreamingDetector::new(cfg, shift, lookahead)?;
    let mut out = io::stdout().lock();
    for (index, line) in lines.enumerate() {
        let p = parse_probability(&line?, index + 2)?;
        let scores = scd_core::FrameScoreSequence::from_probabilities(&[p], shift)?;
        let emitted = detector.push(StreamFrame {
            index,
            log_p0: scores.log_p0()[0],
            log_p1: scores.log_p1()[0],
        })?;
        for d in emitted {
            writeln!(out, "{:.3}", d.time)?;
            out.flush()?;
        }
    }
    for d in detector.finish() {
        writeln!(out, "{:.3}", d.time)?;
    }
    out.flush()?;
    Ok(())
}
