//! Shared domain types: frame scores, labels, change-point sets and collar
//! configuration.
//!
//! All scores are kept in the natural-log domain. Probabilities only appear
//! when reading or writing files and when a detector compares against a
//! threshold.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};

/// Tolerance for `exp(log_p0) + exp(log_p1) == 1` on normalized inputs.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Per-frame log-likelihoods of the no-boundary and boundary events.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScoreSequence {
    log_p0: Vec<f64>,
    log_p1: Vec<f64>,
    frame_shift: f64,
}

impl FrameScoreSequence {
    /// Builds a sequence from raw log-likelihoods.
    ///
    /// Values must be finite and non-positive; normalization is not required
    /// (see [`FrameScoreSequence::new_normalized`]).
    pub fn new(log_p0: Vec<f64>, log_p1: Vec<f64>, frame_shift: f64) -> Result<Self> {
        if log_p0.len() != log_p1.len() {
            return Err(Error::LengthMismatch {
                expected: log_p0.len(),
                actual: log_p1.len(),
            });
        }
        if log_p0.is_empty() {
            return Err(Error::InvalidInput("frame score sequence is empty".into()));
        }
        if !(frame_shift.is_finite() && frame_shift > 0.0) {
            return Err(Error::InvalidInput(format!(
                "frame shift must be positive, got {frame_shift}"
            )));
        }
        for (i, (&a, &b)) in log_p0.iter().zip(&log_p1).enumerate() {
            if !a.is_finite() || !b.is_finite() || a > 0.0 || b > 0.0 {
                return Err(Error::InvalidInput(format!(
                    "frame {i}: log-likelihoods must be finite and <= 0, got ({a}, {b})"
                )));
            }
        }
        Ok(Self {
            log_p0,
            log_p1,
            frame_shift,
        })
    }

    /// Like [`FrameScoreSequence::new`] but also checks that every frame is a
    /// proper two-event distribution.
    pub fn new_normalized(log_p0: Vec<f64>, log_p1: Vec<f64>, frame_shift: f64) -> Result<Self> {
        let seq = Self::new(log_p0, log_p1, frame_shift)?;
        if let Some(i) = seq.first_unnormalized_frame(NORMALIZATION_TOLERANCE) {
            return Err(Error::InvalidInput(format!(
                "frame {i}: probabilities sum to {}, not 1",
                seq.log_p0[i].exp() + seq.log_p1[i].exp()
            )));
        }
        Ok(seq)
    }

    /// Builds a normalized sequence from per-frame boundary probabilities.
    ///
    /// Exact 0 and 1 are moved 1e-12 of probability mass inward so that both
    /// log-likelihoods stay finite.
    pub fn from_probabilities(probs: &[f64], frame_shift: f64) -> Result<Self> {
        const EDGE: f64 = 1e-12;
        let mut log_p0 = Vec::with_capacity(probs.len());
        let mut log_p1 = Vec::with_capacity(probs.len());
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "frame {i}: probability {p} outside [0, 1]"
                )));
            }
            let p = p.clamp(EDGE, 1.0 - EDGE);
            log_p1.push(p.ln());
            log_p0.push((-p).ln_1p());
        }
        Self::new(log_p0, log_p1, frame_shift)
    }

    /// Builds a normalized sequence from one boundary logit per frame:
    /// `log_p1 = logsigmoid(a)`, `log_p0 = logsigmoid(-a)`.
    pub fn from_logits(logits: &[f64], frame_shift: f64) -> Result<Self> {
        let log_p1 = logits.iter().map(|&a| crate::math::log_sigmoid(a)).collect();
        let log_p0 = logits.iter().map(|&a| crate::math::log_sigmoid(-a)).collect();
        Self::new(log_p0, log_p1, frame_shift)
    }

    pub fn len(&self) -> usize {
        self.log_p0.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.log_p0.is_empty()
    }

    pub fn log_p0(&self) -> &[f64] {
        &self.log_p0
    }

    pub fn log_p1(&self) -> &[f64] {
        &self.log_p1
    }

    pub fn frame_shift(&self) -> f64 {
        self.frame_shift
    }

    /// Boundary probability of frame `i`.
    pub fn boundary_prob(&self, i: usize) -> f64 {
        self.log_p1[i].exp()
    }

    pub fn boundary_probs(&self) -> Vec<f64> {
        self.log_p1.iter().map(|v| v.exp()).collect()
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        frame_to_time(i, self.frame_shift)
    }

    /// Index of the first frame whose two probabilities do not sum to one
    /// within `tol`, if any.
    pub fn first_unnormalized_frame(&self, tol: f64) -> Option<usize> {
        self.log_p0
            .iter()
            .zip(&self.log_p1)
            .position(|(a, b)| (a.exp() + b.exp() - 1.0).abs() > tol)
    }
}

/// Dense 0/1 boundary labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence(Vec<u8>);

impl LabelSequence {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&v| v > 1) {
            return Err(Error::InvalidInput(format!(
                "label {i} is {}, expected 0 or 1",
                labels[i]
            )));
        }
        Ok(Self(labels))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn is_positive(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    pub fn set_positive(&mut self, i: usize) {
        self.0[i] = 1;
    }

    pub fn to_changepoints(&self) -> ChangePointSet {
        labels_to_changepoints(self)
    }
}

/// Sparse annotated boundary positions: strictly increasing frame indices in
/// `[0, num_frames)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangePointSet {
    positions: Vec<usize>,
    num_frames: usize,
}

impl ChangePointSet {
    pub fn new(positions: Vec<usize>, num_frames: usize) -> Result<Self> {
        for (k, &z) in positions.iter().enumerate() {
            if z >= num_frames {
                return Err(Error::IndexOutOfRange {
                    index: z,
                    len: num_frames,
                });
            }
            if k > 0 && positions[k - 1] >= z {
                return Err(Error::InvalidInput(format!(
                    "change points must be strictly increasing ({} then {z})",
                    positions[k - 1]
                )));
            }
        }
        Ok(Self {
            positions,
            num_frames,
        })
    }

    pub fn empty(num_frames: usize) -> Self {
        Self {
            positions: Vec::new(),
            num_frames,
        }
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn to_labels(&self) -> LabelSequence {
        let mut labels = LabelSequence::zeros(self.num_frames);
        for &z in &self.positions {
            labels.set_positive(z);
        }
        labels
    }

    pub fn to_times(&self, frame_shift: f64) -> ChangePointTimes {
        ChangePointTimes(
            self.positions
                .iter()
                .map(|&z| frame_to_time(z, frame_shift))
                .collect(),
        )
    }
}

/// Indices of all positive labels, ascending.
pub fn labels_to_changepoints(labels: &LabelSequence) -> ChangePointSet {
    ChangePointSet {
        positions: labels
            .as_slice()
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| (v == 1).then_some(i))
            .collect(),
        num_frames: labels.len(),
    }
}

/// How the collar half-width maps onto a window of frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollarSemantics {
    /// `[z - c, z + c]`, `2c + 1` frames.
    #[default]
    Inclusive,
    /// `(z - c, z + c)`, `2c - 1` frames; requires `c >= 1`.
    Strict,
}

/// What to do when a collar window crosses a sequence edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgePolicy {
    #[default]
    Clamp,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollarConfig {
    pub collar_frames: usize,
    pub semantics: CollarSemantics,
    pub edge_policy: EdgePolicy,
}

impl CollarConfig {
    pub fn inclusive(collar_frames: usize) -> Self {
        Self {
            collar_frames,
            ..Self::default()
        }
    }

    pub fn strict(collar_frames: usize) -> Self {
        Self {
            collar_frames,
            semantics: CollarSemantics::Strict,
            edge_policy: EdgePolicy::Clamp,
        }
    }

    pub fn with_edge_policy(mut self, edge_policy: EdgePolicy) -> Self {
        self.edge_policy = edge_policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.semantics == CollarSemantics::Strict && self.collar_frames == 0 {
            return Err(Error::InvalidConfig(
                "strict collar semantics requires a collar of at least one frame".into(),
            ));
        }
        Ok(())
    }

    /// Unclamped window width in frames.
    pub fn width(&self) -> usize {
        match self.semantics {
            CollarSemantics::Inclusive => 2 * self.collar_frames + 1,
            CollarSemantics::Strict => (2 * self.collar_frames).saturating_sub(1),
        }
    }

    /// Largest distance from the center still inside the window.
    pub fn reach(&self) -> usize {
        match self.semantics {
            CollarSemantics::Inclusive => self.collar_frames,
            CollarSemantics::Strict => self.collar_frames.saturating_sub(1),
        }
    }

    /// Collar window around frame `z` of an `n`-frame sequence.
    pub fn window(&self, z: usize, n: usize) -> Result<RangeInclusive<usize>> {
        collar_window(z, self, n)
    }
}

/// Frames within the collar of `z`, intersected with `[0, n - 1]` under the
/// clamp policy.
pub fn collar_window(z: usize, cfg: &CollarConfig, n: usize) -> Result<RangeInclusive<usize>> {
    cfg.validate()?;
    if z >= n {
        return Err(Error::IndexOutOfRange { index: z, len: n });
    }
    let reach = cfg.reach() as i64;
    let start = z as i64 - reach;
    let end = z as i64 + reach;
    let last = n as i64 - 1;
    if cfg.edge_policy == EdgePolicy::Reject && (start < 0 || end > last) {
        return Err(Error::WindowOutOfBounds {
            center: z,
            start,
            end,
            len: n,
        });
    }
    Ok(start.max(0) as usize..=end.min(last) as usize)
}

/// Boundary timestamps in seconds, strictly increasing and non-negative.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChangePointTimes(Vec<f64>);

impl ChangePointTimes {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        for (k, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "change point time {t} must be finite and non-negative"
                )));
            }
            if k > 0 && times[k - 1] >= t {
                return Err(Error::InvalidInput(format!(
                    "change point times must be strictly increasing ({} then {t})",
                    times[k - 1]
                )));
            }
        }
        Ok(Self(times))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Converts to frame indices with [`time_to_frame`].
    pub fn to_frames(&self, frame_shift: f64, num_frames: usize) -> Result<ChangePointSet> {
        let mut positions: Vec<usize> = Vec::with_capacity(self.0.len());
        for &t in &self.0 {
            let z = time_to_frame(t, frame_shift);
            if positions.last() == Some(&z) {
                return Err(Error::InvalidInput(format!(
                    "change points at {t}s collapse onto frame {z}"
                )));
            }
            positions.push(z);
        }
        ChangePointSet::new(positions, num_frames)
    }
}

/// `index * frame_shift`.
pub fn frame_to_time(index: usize, frame_shift: f64) -> f64 {
    index as f64 * frame_shift
}

/// `round(time / frame_shift)` with ties rounding up.
pub fn time_to_frame(time: f64, frame_shift: f64) -> usize {
    (time / frame_shift + 0.5).floor().max(0.0) as usize
}
