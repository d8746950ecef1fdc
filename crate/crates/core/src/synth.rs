//! Synthetic speaker-change corpus.
//!
//! Each sequence is a chain of speaker turns. A turn has a Gaussian speaker
//! signature in feature space and every frame adds isotropic noise to it.
//! The true change frame is the first frame of a new turn; the annotated
//! change is the true one shifted by a uniform offset in
//! `±annotation_jitter_frames`, imitating inconsistent human annotation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};

use crate::error::{Error, Result};
use crate::types::ChangePointSet;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_train: usize,
    pub num_dev: usize,
    pub num_test: usize,
    /// Sequence lengths are drawn uniformly from `[min_frames, max_frames]`.
    pub min_frames: usize,
    pub max_frames: usize,
    pub frame_shift: f64,
    /// Expected fraction of frames that are change points.
    pub boundary_rate: f64,
    pub annotation_jitter_frames: usize,
    /// Minimum distance between consecutive true changes, in frames.
    pub min_boundary_spacing: usize,
    pub feature_dim: usize,
    pub speaker_signature_strength: f64,
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let frame_shift = 0.08;
        Self {
            num_train: 200,
            num_dev: 40,
            num_test: 40,
            // 10 s to 30 s segments.
            min_frames: (10.0 / frame_shift) as usize,
            max_frames: (30.0 / frame_shift) as usize,
            frame_shift,
            boundary_rate: 0.0004,
            annotation_jitter_frames: 0,
            min_boundary_spacing: 20,
            feature_dim: 8,
            speaker_signature_strength: 1.0,
            noise_level: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.boundary_rate > 0.0 && self.boundary_rate <= 0.01) {
            return bad(format!("boundary_rate {} outside (0, 0.01]", self.boundary_rate));
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return bad(format!(
                "invalid length range [{}, {}]",
                self.min_frames, self.max_frames
            ));
        }
        if !(self.frame_shift.is_finite() && self.frame_shift > 0.0) {
            return bad(format!("frame_shift {} must be positive", self.frame_shift));
        }
        if self.min_boundary_spacing <= 2 * self.annotation_jitter_frames {
            return bad(format!(
                "min_boundary_spacing {} must exceed twice the jitter {}",
                self.min_boundary_spacing, self.annotation_jitter_frames
            ));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if !(self.noise_level >= 0.0 && self.speaker_signature_strength >= 0.0) {
            return bad("noise and signature strength must be non-negative".into());
        }
        Ok(())
    }

    /// Largest collar (inclusive semantics) for which annotated windows are
    /// guaranteed disjoint.
    pub fn max_safe_collar(&self) -> usize {
        (self.min_boundary_spacing - 2 * self.annotation_jitter_frames - 1) / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    /// Row-major `num_frames x feature_dim`.
    pub features: Vec<f64>,
    pub feature_dim: usize,
    pub frame_shift: f64,
    pub true_changes: ChangePointSet,
    pub annotated: ChangePointSet,
}

impl SynthSequence {
    pub fn num_frames(&self) -> usize {
        self.true_changes.num_frames()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.features[t * self.feature_dim..(t + 1) * self.feature_dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<SynthSequence>,
    pub dev: Vec<SynthSequence>,
    pub test: Vec<SynthSequence>,
}

impl SynthCorpus {
    pub fn all(&self) -> impl Iterator<Item = &SynthSequence> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }
}

/// Generates train/dev/test splits. Each split draws from its own stream
/// derived from the seed, so changing one split's size leaves the others
/// unchanged.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let split = |stream: u64, n: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        (0..n).map(|_| generate_sequence(cfg, &mut rng)).collect()
    };
    Ok(SynthCorpus {
        train: split(1, cfg.num_train),
        dev: split(2, cfg.num_dev),
        test: split(3, cfg.num_test),
    })
}

fn generate_sequence<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> SynthSequence {
    let n = rng.random_range(cfg.min_frames..=cfg.max_frames);

    // Turn lengths: fixed minimum plus a geometric tail so the mean spacing
    // is 1 / boundary_rate frames.
    let mean_gap = 1.0 / cfg.boundary_rate;
    let tail_mean = (mean_gap - cfg.min_boundary_spacing as f64).max(0.0);
    let tail = Geometric::new(1.0 / (tail_mean + 1.0)).expect("valid geometric parameter");
    let mut changes = Vec::new();
    let mut pos = 0usize;
    loop {
        let gap = cfg.min_boundary_spacing as u64 + tail.sample(rng);
        pos = pos.saturating_add(gap as usize);
        if pos >= n {
            break;
        }
        changes.push(pos);
    }

    let dim = cfg.feature_dim;
    let mut signature = random_signature(cfg, rng);
    let mut features = Vec::with_capacity(n * dim);
    let mut next_change = changes.iter().peekable();
    for t in 0..n {
        if next_change.peek() == Some(&&t) {
            next_change.next();
            signature = random_signature(cfg, rng);
        }
        for &s in &signature {
            let noise: f64 = rng.sample(StandardNormal);
            features.push(s + cfg.noise_level * noise);
        }
    }

    let jitter = cfg.annotation_jitter_frames as i64;
    let annotated: Vec<usize> = changes
        .iter()
        .map(|&z| {
            let offset = if jitter > 0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0
            };
            (z as i64 + offset).clamp(0, n as i64 - 1) as usize
        })
        .collect();

    SynthSequence {
        features,
        feature_dim: dim,
        frame_shift: cfg.frame_shift,
        true_changes: ChangePointSet::new(changes, n).expect("changes are increasing"),
        annotated: ChangePointSet::new(annotated, n)
            .expect("spacing exceeds twice the jitter, so order is preserved"),
    }
}

fn random_signature<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Vec<f64> {
    (0..cfg.feature_dim)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            cfg.speaker_signature_strength * v
        })
        .collect()
}
