mod common;

use common::rng;
use rand::Rng;
use scd_core::detection::{DetectionMode, DetectorConfig};
use scd_core::evaluation::{
    evaluate_at, match_changepoints, pr_curve, precision_recall_f1, threshold_candidates,
    tune_threshold, ScoredRecording,
};
use scd_core::{ChangePointTimes, FrameScoreSequence};

fn random_times<R: Rng>(rng: &mut R, max: usize, horizon: f64) -> ChangePointTimes {
    let k = rng.random_range(0..=max);
    // Multiples of 10 ms, as produced by frame-level detectors.
    let mut v: Vec<f64> = (0..k)
        .map(|_| rng.random_range(0..(horizon * 100.0) as u32) as f64 / 100.0)
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    ChangePointTimes::new(v).unwrap()
}

/// Size of a maximum matching by exhaustive search.
fn optimal_matches(refs: &[f64], hyps: &[f64], forgiveness: f64) -> usize {
    fn go(i: usize, refs: &[f64], hyps: &[f64], used: &mut Vec<bool>, f: f64) -> usize {
        if i == refs.len() {
            return 0;
        }
        let mut best = go(i + 1, refs, hyps, used, f);
        for j in 0..hyps.len() {
            if !used[j] && (refs[i] - hyps[j]).abs() <= f + 1e-9 {
                used[j] = true;
                best = best.max(1 + go(i + 1, refs, hyps, used, f));
                used[j] = false;
            }
        }
        best
    }
    go(0, refs, hyps, &mut vec![false; hyps.len()], forgiveness)
}

#[test]
fn greedy_matching_is_close_to_optimal() {
    let mut rng = rng(31);
    for _ in 0..1000 {
        let refs = random_times(&mut rng, 6, 3.0);
        let hyps = random_times(&mut rng, 6, 3.0);
        let f = rng.random_range(0.0..0.6);
        let m = match_changepoints(&refs, &hyps, f);
        let opt = optimal_matches(refs.as_slice(), hyps.as_slice(), f);
        assert!(m.pairs.len() <= opt);
        // A greedy maximal matching is at least half the maximum.
        assert!(2 * m.pairs.len() >= opt);
    }
}

#[test]
fn matching_prefers_closest_pairs() {
    let refs = ChangePointTimes::new(vec![1.0]).unwrap();
    let hyps = ChangePointTimes::new(vec![0.8, 1.1]).unwrap();
    let m = match_changepoints(&refs, &hyps, 0.25);
    assert_eq!(m.pairs, vec![(1.0, 1.1)]);
    assert_eq!(m.unmatched_hyps, vec![0.8]);
}

fn random_set<R: Rng>(rng: &mut R, recordings: usize, quantized: bool) -> Vec<ScoredRecording> {
    (0..recordings)
        .map(|_| {
            let n = rng.random_range(5..=60);
            let probs: Vec<f64> = (0..n)
                .map(|_| {
                    if quantized {
                        rng.random_range(1..1000) as f64 / 1000.0
                    } else {
                        rng.random_range(0.0..1.0)
                    }
                })
                .collect();
            let shift = 0.01;
            let refs = random_times(rng, 4, n as f64 * shift);
            (FrameScoreSequence::from_probabilities(&probs, shift).unwrap(), refs)
        })
        .collect()
}

#[test]
fn pr_curve_points_are_pointwise_correct() {
    let mut rng = rng(32);
    for mode in [DetectionMode::ThresholdOnly, DetectionMode::LocalMaxima] {
        let det = DetectorConfig::new(0.5, mode, 0.03).unwrap();
        for _ in 0..20 {
            let set = random_set(&mut rng, 3, false);
            let curve = pr_curve(&set, &det, 0.02).unwrap();
            for w in curve.windows(2) {
                assert!(w[0].threshold > w[1].threshold);
            }
            for p in &curve {
                let s = evaluate_at(&set, &det.with_threshold(p.threshold), 0.02).score();
                assert_eq!((s.precision, s.recall, s.f1), (p.precision, p.recall, p.f1));
            }
        }
    }
}

/// The representative thresholds reach the same best F1 as the full
/// candidate set.
#[test]
fn representative_thresholds_lose_nothing() {
    let mut rng = rng(33);
    for mode in [DetectionMode::ThresholdOnly, DetectionMode::LocalMaxima] {
        let det = DetectorConfig::new(0.5, mode, 0.02).unwrap();
        for _ in 0..30 {
            let flag = rng.random_bool(0.5);
            let set = random_set(&mut rng, 2, flag);
            let full_best = threshold_candidates(&set)
                .into_iter()
                .map(|t| evaluate_at(&set, &det.with_threshold(t), 0.03).score().f1)
                .fold(f64::NEG_INFINITY, f64::max);
            let curve_best = pr_curve(&set, &det, 0.03)
                .unwrap()
                .iter()
                .map(|p| p.f1)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(full_best, curve_best);
            let tuned = tune_threshold(&set, &det, 0.03).unwrap();
            assert_eq!(evaluate_at(&set, &det.with_threshold(tuned), 0.03).score().f1, full_best);
        }
    }
}

#[test]
fn recall_is_monotone_for_threshold_only_detection() {
    // Lowering the threshold only adds or widens runs, so recall cannot fall
    // while the bumps stay separated. At the background level they merge.
    let probs = [0.1, 0.6, 0.9, 0.6, 0.1, 0.1, 0.1, 0.4, 0.7, 0.4, 0.1];
    let scores = FrameScoreSequence::from_probabilities(&probs, 0.1).unwrap();
    let refs = ChangePointTimes::new(vec![0.2, 0.8]).unwrap();
    let det = DetectorConfig::default();
    let curve = pr_curve(&[(scores, refs)], &det, 0.05).unwrap();
    let separated: Vec<_> = curve.iter().filter(|p| p.threshold > 0.1 + 1e-9).collect();
    assert!(separated.len() >= 3);
    for w in separated.windows(2) {
        assert!(w[1].recall >= w[0].recall);
    }
}

#[test]
fn degenerate_conventions() {
    let none = ChangePointTimes::empty();
    let some = ChangePointTimes::new(vec![1.0]).unwrap();
    let s = precision_recall_f1(&match_changepoints(&none, &none, 0.25));
    assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    let s = precision_recall_f1(&match_changepoints(&some, &none, 0.25));
    assert_eq!((s.precision, s.recall, s.f1), (1.0, 0.0, 0.0));
    let s = precision_recall_f1(&match_changepoints(&none, &some, 0.25));
    assert_eq!((s.precision, s.recall, s.f1), (0.0, 1.0, 0.0));
}
