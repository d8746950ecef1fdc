//! Turning frame scores into change-point times.
//!
//! Two rules are supported. `ThresholdOnly` takes every maximal run of frames
//! whose boundary probability exceeds the threshold and reports the run's
//! argmax. `LocalMaxima` reports local maxima above the threshold and then
//! suppresses any maximum that has a higher one (ties: the earlier frame)
//! closer than `min_separation`.
//!
//! [`StreamingDetector`] applies the same rules online with a fixed
//! lookahead: the decision for frame `t` is made once frame `t + L` has been
//! consumed and is never revised.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::types::{frame_to_time, ChangePointSet, ChangePointTimes, FrameScoreSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectionMode {
    #[default]
    ThresholdOnly,
    LocalMaxima,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Boundary probability that must be strictly exceeded.
    pub threshold: f64,
    pub mode: DetectionMode,
    /// Seconds; local maxima closer than this are merged into the higher one.
    pub min_separation: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            mode: DetectionMode::ThresholdOnly,
            min_separation: 0.0,
        }
    }
}

impl DetectorConfig {
    pub fn new(threshold: f64, mode: DetectionMode, min_separation: f64) -> Result<Self> {
        let cfg = Self {
            threshold,
            mode,
            min_separation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if !(self.min_separation.is_finite() && self.min_separation >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "min_separation {} must be non-negative",
                self.min_separation
            )));
        }
        Ok(())
    }

    /// Two maxima `d` frames apart are merged when `d < merge_frames`.
    pub fn merge_frames(&self, frame_shift: f64) -> usize {
        (self.min_separation / frame_shift - 1e-9).ceil().max(0.0) as usize
    }
}

// ---------------------------------------------------------------------------
// Batch
// ---------------------------------------------------------------------------

/// Detected frame indices for a sequence of boundary probabilities.
///
/// The threshold in `cfg` is used as is; it is not range-checked here so the
/// threshold search can probe values above 1.
pub fn detect_frames(probs: &[f64], cfg: &DetectorConfig, frame_shift: f64) -> Vec<usize> {
    match cfg.mode {
        DetectionMode::ThresholdOnly => run_argmaxima(probs, cfg.threshold),
        DetectionMode::LocalMaxima => {
            let maxima = local_maxima(probs, cfg.threshold);
            suppress_close_maxima(probs, &maxima, cfg.merge_frames(frame_shift))
        }
    }
}

pub fn detect_batch(scores: &FrameScoreSequence, cfg: &DetectorConfig) -> Result<ChangePointTimes> {
    cfg.validate()?;
    let frames = detect_frames(&scores.boundary_probs(), cfg, scores.frame_shift());
    Ok(frames_to_times(&frames, scores.frame_shift()))
}

fn frames_to_times(frames: &[usize], frame_shift: f64) -> ChangePointTimes {
    ChangePointTimes::new(frames.iter().map(|&f| frame_to_time(f, frame_shift)).collect())
        .expect("detected frames are strictly increasing")
}

/// First argmax of every maximal run above the threshold.
fn run_argmaxima(probs: &[f64], threshold: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut best: Option<usize> = None;
    for (i, &p) in probs.iter().enumerate() {
        if p > threshold {
            match best {
                Some(b) if probs[b] >= p => {}
                _ => best = Some(i),
            }
        } else if let Some(b) = best.take() {
            out.push(b);
        }
    }
    out.extend(best);
    out
}

/// Local maxima above the threshold. A plateau of equal values counts once,
/// at its first frame, when both neighbours of the plateau are lower.
fn local_maxima(probs: &[f64], threshold: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < probs.len() {
        let v = probs[i];
        let mut end = i;
        while end + 1 < probs.len() && probs[end + 1] == v {
            end += 1;
        }
        let left_lower = i == 0 || probs[i - 1] < v;
        let right_lower = end + 1 == probs.len() || probs[end + 1] < v;
        if v > threshold && left_lower && right_lower {
            out.push(i);
        }
        i = end + 1;
    }
    out
}

/// Drops every maximum that has a stronger one (higher, or equal and
/// earlier) fewer than `merge_frames` frames away.
fn suppress_close_maxima(probs: &[f64], maxima: &[usize], merge_frames: usize) -> Vec<usize> {
    if merge_frames <= 1 {
        return maxima.to_vec();
    }
    let stronger = |a: usize, b: usize| probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
    maxima
        .iter()
        .enumerate()
        .filter(|&(k, &m)| {
            let left = maxima[..k]
                .iter()
                .rev()
                .take_while(|&&o| m - o < merge_frames)
                .any(|&o| stronger(o, m));
            let right = maxima[k + 1..]
                .iter()
                .take_while(|&&o| o - m < merge_frames)
                .any(|&o| stronger(o, m));
            !(left || right)
        })
        .map(|(_, &m)| m)
        .collect()
}

// ---------------------------------------------------------------------------
// Streaming
// ---------------------------------------------------------------------------

/// One incoming frame of a score stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamFrame {
    pub index: usize,
    pub log_p0: f64,
    pub log_p1: f64,
}

/// A finalized detection together with the number of frames consumed when it
/// was emitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamDetection {
    pub frame: usize,
    pub time: f64,
    pub frames_consumed: usize,
}

/// Online detector with a fixed lookahead of `lookahead` frames.
///
/// Decisions are made by running the batch rule on the frames still held in
/// a bounded buffer, so the output equals [`detect_batch`] whenever every
/// above-threshold run, plus the merge distance in local-maxima mode, fits
/// inside the lookahead.
#[derive(Debug, Clone)]
pub struct StreamingDetector {
    cfg: DetectorConfig,
    frame_shift: f64,
    lookahead: usize,
    context: usize,
    buffer: VecDeque<f64>,
    buffer_start: usize,
    next_index: usize,
    next_decision: usize,
    finished: bool,
}

impl StreamingDetector {
    pub fn new(cfg: DetectorConfig, frame_shift: f64, lookahead: usize) -> Result<Self> {
        cfg.validate()?;
        if !(frame_shift.is_finite() && frame_shift > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "frame shift must be positive, got {frame_shift}"
            )));
        }
        let merge = match cfg.mode {
            DetectionMode::ThresholdOnly => 0,
            DetectionMode::LocalMaxima => cfg.merge_frames(frame_shift),
        };
        Ok(Self {
            cfg,
            frame_shift,
            lookahead,
            context: 2 * (lookahead + merge) + 2,
            buffer: VecDeque::new(),
            buffer_start: 0,
            next_index: 0,
            next_decision: 0,
            finished: false,
        })
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    /// Frames consumed so far.
    pub fn consumed(&self) -> usize {
        self.next_index
    }

    /// Feeds the next frame and returns any detection finalized by it.
    pub fn push(&mut self, frame: StreamFrame) -> Result<Vec<StreamDetection>> {
        if self.finished {
            return Err(Error::Protocol("frame pushed after end of stream".into()));
        }
        if frame.index != self.next_index {
            return Err(Error::Protocol(format!(
                "expected frame {}, got frame {}",
                self.next_index, frame.index
            )));
        }
        if !frame.log_p1.is_finite() || frame.log_p1 > 0.0 || !frame.log_p0.is_finite() || frame.log_p0 > 0.0 {
            return Err(Error::InvalidInput(format!(
                "frame {}: log-likelihoods must be finite and <= 0",
                frame.index
            )));
        }
        self.buffer.push_back(frame.log_p1.exp());
        self.next_index += 1;

        let mut out = Vec::new();
        if self.next_index > self.lookahead {
            let decide = self.next_index - 1 - self.lookahead;
            debug_assert_eq!(decide, self.next_decision);
            self.decide_through(decide, &mut out);
            self.trim();
        }
        Ok(out)
    }

    /// Ends the stream, deciding every frame still pending.
    pub fn finish(&mut self) -> Vec<StreamDetection> {
        let mut out = Vec::new();
        if !self.finished && self.next_index > 0 {
            self.decide_through(self.next_index - 1, &mut out);
        }
        self.finished = true;
        out
    }

    fn decide_through(&mut self, last: usize, out: &mut Vec<StreamDetection>) {
        if last < self.next_decision {
            return;
        }
        let visible: Vec<f64> = self.buffer.iter().copied().collect();
        let detected = detect_frames(&visible, &self.cfg, self.frame_shift);
        for f in detected {
            let frame = self.buffer_start + f;
            if frame >= self.next_decision && frame <= last {
                out.push(StreamDetection {
                    frame,
                    time: frame_to_time(frame, self.frame_shift),
                    frames_consumed: self.next_index,
                });
            }
        }
        self.next_decision = last + 1;
    }

    fn trim(&mut self) {
        let keep_from = self.next_decision.saturating_sub(self.context);
        while self.buffer_start < keep_from {
            self.buffer.pop_front();
            self.buffer_start += 1;
        }
    }
}

/// Runs a whole sequence through a [`StreamingDetector`].
pub fn detect_streaming(
    scores: &FrameScoreSequence,
    cfg: &DetectorConfig,
    lookahead: usize,
) -> Result<Vec<StreamDetection>> {
    let mut det = StreamingDetector::new(*cfg, scores.frame_shift(), lookahead)?;
    let mut out = Vec::new();
    for i in 0..scores.len() {
        out.extend(det.push(StreamFrame {
            index: i,
            log_p0: scores.log_p0()[i],
            log_p1: scores.log_p1()[i],
        })?);
    }
    out.extend(det.finish());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Peakiness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PeakinessReport {
    /// Mean longest above-threshold run length over boundaries with at least
    /// one active frame; `None` when no boundary had any.
    pub mean_active_frames_per_detection: Option<f64>,
    /// Longest run length -> number of boundaries.
    pub histogram: BTreeMap<usize, usize>,
    pub boundaries_analyzed: usize,
}

/// Longest contiguous run above the threshold within `±window` frames of
/// each reference boundary.
pub fn peakiness(
    scores: &FrameScoreSequence,
    refs: &ChangePointSet,
    cfg: &DetectorConfig,
    window: usize,
) -> Result<PeakinessReport> {
    if window == 0 {
        return Err(Error::InvalidConfig("peakiness window must be >= 1".into()));
    }
    let probs = scores.boundary_probs();
    let mut histogram = BTreeMap::new();
    accumulate_peakiness(&probs, refs.positions(), cfg.threshold, window, &mut histogram);
    Ok(report_from_histogram(histogram, refs.len()))
}

pub(crate) fn accumulate_peakiness(
    probs: &[f64],
    refs: &[usize],
    threshold: f64,
    window: usize,
    histogram: &mut BTreeMap<usize, usize>,
) {
    for &z in refs {
        if probs.is_empty() {
            break;
        }
        let lo = z.saturating_sub(window);
        let hi = (z + window).min(probs.len() - 1);
        let mut longest = 0;
        let mut run = 0;
        for &p in &probs[lo..=hi] {
            if p > threshold {
                run += 1;
                longest = longest.max(run);
            } else {
                run = 0;
            }
        }
        if longest > 0 {
            *histogram.entry(longest).or_insert(0) += 1;
        }
    }
}

pub(crate) fn report_from_histogram(
    histogram: BTreeMap<usize, usize>,
    boundaries_analyzed: usize,
) -> PeakinessReport {
    let active: usize = histogram.values().sum();
    let total: usize = histogram.iter().map(|(len, n)| len * n).sum();
    PeakinessReport {
        mean_active_frames_per_detection: (active > 0).then(|| total as f64 / active as f64),
        histogram,
        boundaries_analyzed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(p: &[f64], shift: f64) -> FrameScoreSequence {
        FrameScoreSequence::from_probabilities(p, shift).unwrap()
    }

    fn cfg(threshold: f64, mode: DetectionMode, min_sep: f64) -> DetectorConfig {
        DetectorConfig::new(threshold, mode, min_sep).unwrap()
    }

    #[test]
    fn single_peak() {
        let s = seq(&[0.1, 0.1, 0.9, 0.1], 0.08);
        for mode in [DetectionMode::ThresholdOnly, DetectionMode::LocalMaxima] {
            let t = detect_batch(&s, &cfg(0.5, mode, 0.0)).unwrap();
            assert_eq!(t.len(), 1);
            assert!((t.as_slice()[0] - 0.16).abs() < 1e-12);
        }
    }

    #[test]
    fn nothing_above_threshold() {
        let s = seq(&[0.1, 0.2, 0.3], 0.08);
        assert!(detect_batch(&s, &cfg(0.5, DetectionMode::ThresholdOnly, 0.0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn runs_merge_to_argmax() {
        let p = [0.1, 0.6, 0.7, 0.6, 0.1];
        let c = cfg(0.5, DetectionMode::ThresholdOnly, 0.0);
        assert_eq!(detect_frames(&p, &c, 0.08), vec![2]);
        // Ties inside a run resolve to the first frame.
        assert_eq!(detect_frames(&[0.7, 0.7, 0.2, 0.9], &c, 0.08), vec![0, 3]);
    }

    #[test]
    fn local_maxima_and_merging() {
        let p = [0.1, 0.8, 0.3, 0.6, 0.2, 0.2, 0.2, 0.7, 0.1];
        let lm = cfg(0.5, DetectionMode::LocalMaxima, 0.0);
        assert_eq!(detect_frames(&p, &lm, 0.08), vec![1, 3, 7]);
        // 0.24 s = 3 frames: maxima 1 and 3 are 2 apart and merge into 1.
        let merged = cfg(0.5, DetectionMode::LocalMaxima, 0.24);
        assert_eq!(detect_frames(&p, &merged, 0.08), vec![1, 7]);
        // A plateau counts once.
        assert_eq!(detect_frames(&[0.1, 0.9, 0.9, 0.1], &lm, 0.08), vec![1]);
        assert!(detect_frames(&[0.1, 0.9, 0.9, 0.95], &lm, 0.08) == vec![3]);
    }

    #[test]
    fn merge_frame_conversion() {
        let c = cfg(0.5, DetectionMode::LocalMaxima, 0.24);
        assert_eq!(c.merge_frames(0.08), 3);
        assert_eq!(c.with_threshold(0.5).merge_frames(0.1), 3);
        assert_eq!(cfg(0.5, DetectionMode::LocalMaxima, 0.0).merge_frames(0.08), 0);
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::new(1.5, DetectionMode::ThresholdOnly, 0.0).is_err());
        assert!(DetectorConfig::new(0.5, DetectionMode::ThresholdOnly, -1.0).is_err());
    }

    #[test]
    fn streaming_isolated_peak_latency() {
        let s = seq(&[0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1], 0.08);
        let out = detect_streaming(&s, &cfg(0.5, DetectionMode::ThresholdOnly, 0.0), 2).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].frame, 2);
        // Emitted while consuming frame 4, i.e. two frames after the peak.
        assert_eq!(out[0].frames_consumed, 5);
    }

    #[test]
    fn streaming_full_lookahead_equals_batch() {
        let p = [0.2, 0.7, 0.8, 0.75, 0.1, 0.9, 0.95, 0.3, 0.6];
        let s = seq(&p, 0.08);
        for mode in [DetectionMode::ThresholdOnly, DetectionMode::LocalMaxima] {
            let c = cfg(0.5, mode, 0.16);
            let batch = detect_batch(&s, &c).unwrap();
            let stream = detect_streaming(&s, &c, p.len()).unwrap();
            let times: Vec<f64> = stream.iter().map(|d| d.time).collect();
            assert_eq!(times, batch.as_slice());
        }
    }

    #[test]
    fn streaming_protocol() {
        let c = cfg(0.5, DetectionMode::ThresholdOnly, 0.0);
        let mut det = StreamingDetector::new(c, 0.08, 1).unwrap();
        assert!(det.finish().is_empty());
        let mut det = StreamingDetector::new(c, 0.08, 1).unwrap();
        let frame = |index| StreamFrame {
            index,
            log_p0: 0.5f64.ln(),
            log_p1: 0.5f64.ln(),
        };
        det.push(frame(0)).unwrap();
        assert!(matches!(det.push(frame(2)), Err(Error::Protocol(_))));
        det.finish();
        assert!(matches!(det.push(frame(1)), Err(Error::Protocol(_))));
    }

    #[test]
    fn peakiness_examples() {
        let c = cfg(0.5, DetectionMode::ThresholdOnly, 0.0);
        let one_hot = seq(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 0.08);
        let refs = ChangePointSet::new(vec![2, 7], 10).unwrap();
        let r = peakiness(&one_hot, &refs, &c, 2).unwrap();
        assert_eq!(r.mean_active_frames_per_detection, Some(1.0));
        assert_eq!(r.histogram.get(&1), Some(&2));

        let plateau = seq(&[0.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.0, 0.0], 0.08);
        let refs = ChangePointSet::new(vec![3], 8).unwrap();
        let r = peakiness(&plateau, &refs, &c, 3).unwrap();
        assert_eq!(r.mean_active_frames_per_detection, Some(5.0));

        let quiet = seq(&[0.0; 8], 0.08);
        let r = peakiness(&quiet, &refs, &c, 3).unwrap();
        assert_eq!(r.mean_active_frames_per_detection, None);
        assert!(r.histogram.is_empty());
        assert!(peakiness(&quiet, &refs, &c, 0).is_err());
    }
}
