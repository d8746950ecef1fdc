//! Collar-based boundary scoring.
//!
//! Hypothesized change points are matched to references greedily, closest
//! pair first, within a forgiveness collar. Precision, recall and F1 are
//! computed from true/false positive counts pooled over all files, never by
//! averaging per-file scores.
//!
//! Distances and the forgiveness collar are compared at nanosecond
//! resolution so that matches and tie-breaks do not depend on floating-point
//! noise in timestamps derived from frame indices.

use std::io::Write;

use crate::detection::{detect_frames, DetectorConfig};
use crate::error::{Error, Result};
use crate::types::{frame_to_time, ChangePointTimes, FrameScoreSequence};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// `(reference, hypothesis)` times, ordered by reference time.
    pub pairs: Vec<(f64, f64)>,
    pub unmatched_refs: Vec<f64>,
    pub unmatched_hyps: Vec<f64>,
}

impl MatchResult {
    pub fn counts(&self) -> MatchCounts {
        MatchCounts {
            true_positives: self.pairs.len(),
            false_positives: self.unmatched_hyps.len(),
            false_negatives: self.unmatched_refs.len(),
        }
    }
}

/// Pooled detection counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.true_positives += rhs.true_positives;
        self.false_positives += rhs.false_positives;
        self.false_negatives += rhs.false_negatives;
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |mut acc, c| {
            acc += c;
            acc
        })
    }
}

impl MatchCounts {
    /// Precision is 1 when there are no hypotheses and recall is 1 when there
    /// are no references.
    pub fn score(&self) -> PrfScore {
        let tp = self.true_positives as f64;
        let hyps = self.true_positives + self.false_positives;
        let refs = self.true_positives + self.false_negatives;
        let precision = if hyps == 0 { 1.0 } else { tp / hyps as f64 };
        let recall = if refs == 0 { 1.0 } else { tp / refs as f64 };
        let denom = 2 * self.true_positives + self.false_positives + self.false_negatives;
        let f1 = if denom == 0 {
            1.0
        } else {
            2.0 * tp / denom as f64
        };
        PrfScore {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One operating point of a detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrPoint {
    fn new(threshold: f64, score: PrfScore) -> Self {
        Self {
            threshold,
            precision: score.precision,
            recall: score.recall,
            f1: score.f1,
        }
    }
}

fn to_nanos(seconds: f64) -> i64 {
    (seconds * 1e9).round() as i64
}

/// Greedy closest-first matching within `forgiveness` seconds.
///
/// Ties in distance go to the earlier reference, then the earlier hypothesis.
pub fn match_changepoints(
    refs: &ChangePointTimes,
    hyps: &ChangePointTimes,
    forgiveness: f64,
) -> MatchResult {
    let r = refs.as_slice();
    let h = hyps.as_slice();
    let limit = to_nanos(forgiveness.max(0.0));

    // Both lists are sorted, so candidates for each reference form a
    // contiguous block of hypotheses.
    let mut candidates: Vec<(i64, usize, usize)> = Vec::new();
    let mut lo = 0;
    for (i, &rt) in r.iter().enumerate() {
        while lo < h.len() && to_nanos(rt - h[lo]) > limit {
            lo += 1;
        }
        for (j, &ht) in h.iter().enumerate().skip(lo) {
            let d = to_nanos(ht - rt);
            if d > limit {
                break;
            }
            candidates.push((d.abs(), i, j));
        }
    }
    candidates.sort_unstable();

    let mut ref_match: Vec<Option<usize>> = vec![None; r.len()];
    let mut hyp_used = vec![false; h.len()];
    for (_, i, j) in candidates {
        if ref_match[i].is_none() && !hyp_used[j] {
            ref_match[i] = Some(j);
            hyp_used[j] = true;
        }
    }

    let mut result = MatchResult::default();
    for (i, m) in ref_match.iter().enumerate() {
        match m {
            Some(j) => result.pairs.push((r[i], h[*j])),
            None => result.unmatched_refs.push(r[i]),
        }
    }
    result.unmatched_hyps = h
        .iter()
        .zip(&hyp_used)
        .filter_map(|(&t, &used)| (!used).then_some(t))
        .collect();
    result
}

pub fn precision_recall_f1(m: &MatchResult) -> PrfScore {
    m.counts().score()
}

// ---------------------------------------------------------------------------
// Threshold search
// ---------------------------------------------------------------------------

/// A scored recording paired with its reference change points.
pub type ScoredRecording = (FrameScoreSequence, ChangePointTimes);

struct Prepared<'a> {
    probs: Vec<f64>,
    frame_shift: f64,
    refs: &'a ChangePointTimes,
}

fn prepare(set: &[ScoredRecording]) -> Vec<Prepared<'_>> {
    set.iter()
        .map(|(scores, refs)| Prepared {
            probs: scores.boundary_probs(),
            frame_shift: scores.frame_shift(),
            refs,
        })
        .collect()
}

fn pooled_counts(set: &[Prepared<'_>], cfg: &DetectorConfig, forgiveness: f64) -> MatchCounts {
    set.iter()
        .map(|rec| {
            let frames = detect_frames(&rec.probs, cfg, rec.frame_shift);
            let hyps = ChangePointTimes::new(
                frames
                    .iter()
                    .map(|&f| frame_to_time(f, rec.frame_shift))
                    .collect(),
            )
            .expect("detections are strictly increasing");
            match_changepoints(rec.refs, &hyps, forgiveness).counts()
        })
        .sum()
}

/// Pooled counts for `cfg` (including its threshold) over a scored set.
pub fn evaluate_at(
    set: &[ScoredRecording],
    cfg: &DetectorConfig,
    forgiveness: f64,
) -> MatchCounts {
    pooled_counts(&prepare(set), cfg, forgiveness)
}

/// All candidate thresholds, ascending: one below the smallest probability,
/// the midpoint between every pair of consecutive distinct probabilities,
/// and one above the largest.
pub fn threshold_candidates(set: &[ScoredRecording]) -> Vec<f64> {
    let values = distinct_values(prepare(set).iter().flat_map(|r| r.probs.iter().copied()));
    midpoint_candidates(&values)
}

fn distinct_values(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn midpoint_candidates(values: &[f64]) -> Vec<f64> {
    let Some(&first) = values.first() else {
        return vec![0.5];
    };
    let mut out = Vec::with_capacity(values.len() + 1);
    out.push(first / 2.0);
    out.extend(values.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    out.push((values[values.len() - 1] + 1.0) / 2.0);
    out
}

/// Values at which the detector output can change: every frame value that
/// is not strictly inside a monotone stretch.
fn critical_values(probs: &[f64], out: &mut Vec<f64>) {
    let n = probs.len();
    let mut a = 0;
    while a < n {
        let v = probs[a];
        let mut b = a;
        while b + 1 < n && probs[b + 1] == v {
            b += 1;
        }
        let through = a > 0
            && b + 1 < n
            && ((probs[a - 1] < v && v < probs[b + 1]) || (probs[a - 1] > v && v > probs[b + 1]));
        if !through {
            out.push(v);
        }
        a = b + 1;
    }
}

/// Candidate thresholds that produce pairwise distinct detector outputs,
/// each being the highest candidate producing that output. Descending.
fn representative_thresholds(set: &[Prepared<'_>]) -> Vec<f64> {
    let all = distinct_values(set.iter().flat_map(|r| r.probs.iter().copied()));
    let mut crit = Vec::new();
    for rec in set {
        critical_values(&rec.probs, &mut crit);
    }
    let crit = distinct_values(crit.into_iter());

    let mut out = Vec::with_capacity(crit.len() + 1);
    if let Some(&top) = all.last() {
        out.push((top + 1.0) / 2.0);
    } else {
        out.push(0.5);
    }
    for &c in crit.iter().rev() {
        let k = all.partition_point(|&v| v < c);
        let below = if k == 0 { 0.0 } else { all[k - 1] };
        out.push(if k == 0 { c / 2.0 } else { (below + c) / 2.0 });
    }
    out
}

/// Threshold maximizing pooled F1 over the candidate set of
/// [`threshold_candidates`]; ties go to the higher threshold.
pub fn tune_threshold(
    dev: &[ScoredRecording],
    detector: &DetectorConfig,
    forgiveness: f64,
) -> Result<f64> {
    Ok(best_point(&pr_curve(dev, detector, forgiveness)?).threshold)
}

/// Highest-F1 point of a descending curve, preferring the higher threshold.
pub fn best_point(curve: &[PrPoint]) -> PrPoint {
    let mut best = curve[0];
    for p in &curve[1..] {
        if p.f1 > best.f1 {
            best = *p;
        }
    }
    best
}

/// Operating points over the candidate thresholds, thresholds descending.
///
/// Candidates that yield identical detections are represented once, by the
/// highest of them.
pub fn pr_curve(
    set: &[ScoredRecording],
    detector: &DetectorConfig,
    forgiveness: f64,
) -> Result<Vec<PrPoint>> {
    if set.is_empty() {
        return Err(Error::InvalidInput("scored set is empty".into()));
    }
    let prepared = prepare(set);
    let thresholds = representative_thresholds(&prepared);
    Ok(thresholds
        .into_iter()
        .map(|t| {
            let cfg = detector.with_threshold(t);
            PrPoint::new(t, pooled_counts(&prepared, &cfg, forgiveness).score())
        })
        .collect())
}

/// Writes `threshold,precision,recall,f1` rows.
pub fn write_pr_curve_csv<W: Write>(mut out: W, curve: &[PrPoint]) -> Result<()> {
    writeln!(out, "threshold,precision,recall,f1")?;
    for p in curve {
        writeln!(
            out,
            "{:.9},{:.6},{:.6},{:.6}",
            p.threshold, p.precision, p.recall, p.f1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectionMode;

    fn times(v: &[f64]) -> ChangePointTimes {
        ChangePointTimes::new(v.to_vec()).unwrap()
    }

    #[test]
    fn tie_goes_to_earlier_hypothesis() {
        let m = match_changepoints(&times(&[1.0]), &times(&[0.9, 1.1]), 0.25);
        assert_eq!(m.pairs, vec![(1.0, 0.9)]);
        assert_eq!(m.unmatched_hyps, vec![1.1]);
        assert!(m.unmatched_refs.is_empty());
    }

    #[test]
    fn tie_goes_to_earlier_reference() {
        let m = match_changepoints(&times(&[0.9, 1.1]), &times(&[1.0]), 0.25);
        assert_eq!(m.pairs, vec![(0.9, 1.0)]);
        assert_eq!(m.unmatched_refs, vec![1.1]);
    }

    #[test]
    fn matching_examples() {
        assert_eq!(
            match_changepoints(&times(&[]), &times(&[]), 0.25),
            MatchResult::default()
        );
        let m = match_changepoints(&times(&[1.0, 5.0]), &times(&[1.1, 2.0]), 0.25);
        assert_eq!(m.pairs, vec![(1.0, 1.1)]);
        assert_eq!(m.unmatched_refs, vec![5.0]);
        assert_eq!(m.unmatched_hyps, vec![2.0]);
    }

    #[test]
    fn closest_pair_wins_over_order() {
        // hyp 1.2 is 0.1 from ref 1.3 and 0.2 from ref 1.0.
        let m = match_changepoints(&times(&[1.0, 1.3]), &times(&[1.2]), 0.25);
        assert_eq!(m.pairs, vec![(1.3, 1.2)]);
        assert_eq!(m.unmatched_refs, vec![1.0]);
    }

    #[test]
    fn forgiveness_boundary_is_inclusive() {
        // 0.08 * 3 is not exactly 0.24 in binary floating point.
        let m = match_changepoints(&times(&[0.0]), &times(&[0.08 * 3.0]), 0.24);
        assert_eq!(m.pairs.len(), 1);
    }

    #[test]
    fn score_examples() {
        let half = MatchCounts {
            true_positives: 1,
            false_positives: 1,
            false_negatives: 1,
        }
        .score();
        assert_eq!((half.precision, half.recall, half.f1), (0.5, 0.5, 0.5));
        let perfect = MatchCounts {
            true_positives: 4,
            ..Default::default()
        }
        .score();
        assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));
        let zero = MatchCounts {
            true_positives: 0,
            false_positives: 3,
            false_negatives: 2,
        }
        .score();
        assert_eq!((zero.precision, zero.recall, zero.f1), (0.0, 0.0, 0.0));
        let empty = MatchCounts::default().score();
        assert_eq!((empty.precision, empty.recall, empty.f1), (1.0, 1.0, 1.0));
    }

    fn recording(probs: &[f64], refs: &[f64]) -> ScoredRecording {
        (
            FrameScoreSequence::from_probabilities(probs, 0.08).unwrap(),
            times(refs),
        )
    }

    #[test]
    fn tuning_picks_highest_perfect_threshold() {
        let dev = vec![recording(&[0.05, 0.1, 0.9, 0.1, 0.02], &[0.16])];
        let cfg = DetectorConfig::default();
        let t = tune_threshold(&dev, &cfg, 0.25).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        let counts = evaluate_at(&dev, &cfg.with_threshold(t), 0.25);
        assert_eq!(counts.score().f1, 1.0);
    }

    #[test]
    fn tuning_without_references_predicts_nothing() {
        let dev = vec![recording(&[0.05, 0.1, 0.2, 0.1], &[])];
        let t = tune_threshold(&dev, &DetectorConfig::default(), 0.25).unwrap();
        assert!(t > 0.2);
        assert!(tune_threshold(&[], &DetectorConfig::default(), 0.25).is_err());
    }

    #[test]
    fn candidates_are_midpoints() {
        let set = vec![recording(&[0.2, 0.4, 0.4], &[])];
        let c = threshold_candidates(&set);
        let expected = [0.1, 0.3, 0.7];
        assert_eq!(c.len(), expected.len());
        for (a, b) in c.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_is_descending_and_writes_csv() {
        let set = vec![
            recording(&[0.1, 0.8, 0.2, 0.3, 0.6, 0.1], &[0.08, 0.4]),
            recording(&[0.7, 0.1, 0.1, 0.1], &[0.24]),
        ];
        let cfg = DetectorConfig::new(0.5, DetectionMode::LocalMaxima, 0.0).unwrap();
        let curve = pr_curve(&set, &cfg, 0.1).unwrap();
        assert!(curve.windows(2).all(|w| w[0].threshold > w[1].threshold));
        let mut buf = Vec::new();
        write_pr_curve_csv(&mut buf, &curve).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("threshold,precision,recall,f1\n"));
        assert_eq!(text.lines().count(), curve.len() + 1);
    }
}
