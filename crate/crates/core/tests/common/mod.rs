//! Random instance generators and numeric helpers shared by the
//! integration tests.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scd_core::losses::collar_windows;
use scd_core::{ChangePointSet, CollarConfig, CollarSemantics, FrameScoreSequence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - b| / max(1, |a|, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Normalized scores with boundary probabilities in `[lo, 1 - lo]`.
pub fn random_scores<R: Rng>(rng: &mut R, n: usize, lo: f64) -> FrameScoreSequence {
    let probs: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=1.0 - lo)).collect();
    FrameScoreSequence::from_probabilities(&probs, 0.01).unwrap()
}

/// Scores whose two log-likelihoods are drawn independently, so frames are
/// generally not normalized. All values lie in `[-6, -0.001]`.
pub fn random_unnormalized_scores<R: Rng>(rng: &mut R, n: usize) -> FrameScoreSequence {
    let draw = |rng: &mut R| -> Vec<f64> { (0..n).map(|_| rng.random_range(-6.0..=-0.001)).collect() };
    let lp0 = draw(rng);
    let lp1 = draw(rng);
    FrameScoreSequence::new(lp0, lp1, 0.01).unwrap()
}

/// Up to `max_points` change points whose collar windows are disjoint.
pub fn random_changepoints<R: Rng>(
    rng: &mut R,
    n: usize,
    max_points: usize,
    cfg: &CollarConfig,
) -> ChangePointSet {
    loop {
        let k = rng.random_range(0..=max_points.min(n));
        let mut pos: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
        pos.sort_unstable();
        pos.dedup();
        let z = ChangePointSet::new(pos, n).unwrap();
        if collar_windows(&z, cfg, n).is_ok() {
            return z;
        }
    }
}

pub fn random_collar<R: Rng>(rng: &mut R, max_c: usize) -> CollarConfig {
    let c = rng.random_range(0..=max_c);
    if c >= 1 && rng.random_bool(0.5) {
        CollarConfig::strict(c)
    } else {
        CollarConfig::inclusive(c)
    }
}

pub fn semantics_name(cfg: &CollarConfig) -> &'static str {
    match cfg.semantics {
        CollarSemantics::Inclusive => "inclusive",
        CollarSemantics::Strict => "strict",
    }
}

/// A collar-loss test instance.
pub struct Instance {
    pub scores: FrameScoreSequence,
    pub changepoints: ChangePointSet,
    pub collar: CollarConfig,
}

/// Instances with `N <= 20`, `|Z| <= 3`, `c <= 3`, both semantics. Every
/// other instance has unnormalized scores.
pub fn oracle_instances(seed: u64, count: usize) -> Vec<Instance> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let n = rng.random_range(1..=20);
            let collar = random_collar(&mut rng, 3);
            let changepoints = random_changepoints(&mut rng, n, 3, &collar);
            let scores = if i % 2 == 0 {
                random_scores(&mut rng, n, 1e-4)
            } else {
                random_unnormalized_scores(&mut rng, n)
            };
            Instance {
                scores,
                changepoints,
                collar,
            }
        })
        .collect()
}

/// Copy of `scores` with one log-likelihood shifted by `h`.
pub fn perturb(scores: &FrameScoreSequence, frame: usize, which: usize, h: f64) -> FrameScoreSequence {
    let mut lp0 = scores.log_p0().to_vec();
    let mut lp1 = scores.log_p1().to_vec();
    if which == 0 {
        lp0[frame] += h;
    } else {
        lp1[frame] += h;
    }
    FrameScoreSequence::new(lp0, lp1, scores.frame_shift()).unwrap()
}
