//! Sequence-labelling objectives for boundary detection.
//!
//! Three supervision variants are provided:
//!
//! * standard binary cross-entropy over dense labels ([`bce_dense`]) and its
//!   sparse form over the annotated change points ([`bce_sparse`]);
//! * the neighborhood baseline, which marks every frame near an annotated
//!   change point as positive ([`expand_neighborhood`]) and then applies the
//!   standard loss;
//! * the collar-aware loss, which marginalizes over every label configuration
//!   placing exactly one boundary inside each annotated point's collar
//!   window. [`collar_loss_efficient`] evaluates it in time linear in the
//!   collar sizes; [`collar_loss_bruteforce`] enumerates the configurations
//!   and serves as its reference.
//!
//! All values are negative log-likelihoods in nats. Gradients are taken with
//! respect to the per-frame `(log_p0, log_p1)` inputs; [`logit_gradient`]
//! chains them through a single-logit parameterization.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::math::{logsumexp, sigmoid};
use crate::types::{ChangePointSet, CollarConfig, FrameScoreSequence, LabelSequence};

/// Upper bound on the number of configurations the brute-force loss will
/// enumerate.
pub const MAX_ENUMERATED_CONFIGURATIONS: u128 = 1_000_000;

/// Gradient with respect to the per-frame log-likelihood pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrad {
    pub d_log_p0: Vec<f64>,
    pub d_log_p1: Vec<f64>,
}

impl FrameGrad {
    fn filled(len: usize, d_log_p0: f64, d_log_p1: f64) -> Self {
        Self {
            d_log_p0: vec![d_log_p0; len],
            d_log_p1: vec![d_log_p1; len],
        }
    }

    pub fn len(&self) -> usize {
        self.d_log_p0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_log_p0.is_empty()
    }

    /// Euclidean norm over both components.
    pub fn norm(&self) -> f64 {
        self.d_log_p0
            .iter()
            .chain(&self.d_log_p1)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad: FrameGrad,
}

// ---------------------------------------------------------------------------
// Standard objective
// ---------------------------------------------------------------------------

/// Binary cross-entropy against dense labels:
/// `-sum_i [y_i log_p1_i + (1 - y_i) log_p0_i]`.
pub fn bce_dense(scores: &FrameScoreSequence, labels: &LabelSequence) -> Result<LossResult> {
    if labels.len() != scores.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let mut value = 0.0;
    let mut grad = FrameGrad::filled(scores.len(), 0.0, 0.0);
    for i in 0..scores.len() {
        if labels.is_positive(i) {
            value -= scores.log_p1()[i];
            grad.d_log_p1[i] = -1.0;
        } else {
            value -= scores.log_p0()[i];
            grad.d_log_p0[i] = -1.0;
        }
    }
    Ok(LossResult { value, grad })
}

/// The same loss written over the annotated change points: all frames are
/// scored as non-boundaries, then each annotated frame's term is swapped.
pub fn bce_sparse(scores: &FrameScoreSequence, changepoints: &ChangePointSet) -> Result<LossResult> {
    check_changepoints(scores, changepoints)?;
    let mut log_lik: f64 = scores.log_p0().iter().sum();
    let mut grad = FrameGrad::filled(scores.len(), -1.0, 0.0);
    for &z in changepoints.positions() {
        log_lik -= scores.log_p0()[z];
        log_lik += scores.log_p1()[z];
        grad.d_log_p0[z] = 0.0;
        grad.d_log_p1[z] = -1.0;
    }
    Ok(LossResult {
        value: -log_lik,
        grad,
    })
}

/// Marks every frame within `radius_seconds` of an annotated change point as
/// positive (inclusive, clamped to the sequence).
pub fn expand_neighborhood(
    changepoints: &ChangePointSet,
    radius_seconds: f64,
    frame_shift: f64,
    num_frames: usize,
) -> LabelSequence {
    let radius = (radius_seconds / frame_shift + 1e-9).floor().max(0.0) as usize;
    let mut labels = LabelSequence::zeros(num_frames);
    for &z in changepoints.positions() {
        if num_frames == 0 {
            break;
        }
        let lo = z.saturating_sub(radius);
        let hi = (z + radius).min(num_frames - 1);
        for i in lo..=hi {
            labels.set_positive(i);
        }
    }
    labels
}

// ---------------------------------------------------------------------------
// Collar-aware objective
// ---------------------------------------------------------------------------

/// Collar windows of every change point, validated to be pairwise disjoint.
pub fn collar_windows(
    changepoints: &ChangePointSet,
    cfg: &CollarConfig,
    num_frames: usize,
) -> Result<Vec<RangeInclusive<usize>>> {
    cfg.validate()?;
    let mut windows: Vec<RangeInclusive<usize>> = Vec::with_capacity(changepoints.len());
    for (k, &z) in changepoints.positions().iter().enumerate() {
        let w = cfg.window(z, num_frames)?;
        if let Some(prev) = windows.last() {
            if prev.end() >= w.start() {
                return Err(Error::CollarOverlap {
                    first: changepoints.positions()[k - 1],
                    second: z,
                });
            }
        }
        windows.push(w);
    }
    Ok(windows)
}

/// Softmax weight of each candidate boundary frame inside one collar window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPosterior {
    pub window: RangeInclusive<usize>,
    /// `weights[k]` belongs to frame `window.start() + k`.
    pub weights: Vec<f64>,
    /// `log sum_j exp(log_p1_j + sum_{t != j} log_p0_t)` over the window.
    pub log_marginal: f64,
    /// `sum_{t in window} log_p0_t`.
    pub log_p0_sum: f64,
}

/// Per-window candidate posteriors used by the efficient collar loss.
pub fn collar_window_posteriors(
    scores: &FrameScoreSequence,
    changepoints: &ChangePointSet,
    cfg: &CollarConfig,
) -> Result<Vec<WindowPosterior>> {
    check_changepoints(scores, changepoints)?;
    let windows = collar_windows(changepoints, cfg, scores.len())?;
    let lp0 = scores.log_p0();
    let lp1 = scores.log_p1();
    let mut out = Vec::with_capacity(windows.len());
    let mut candidates = Vec::new();
    for window in windows {
        let log_p0_sum: f64 = lp0[window.clone()].iter().sum();
        candidates.clear();
        // Everything in the window is a non-boundary except candidate j.
        candidates.extend(window.clone().map(|j| lp1[j] + (log_p0_sum - lp0[j])));
        let log_marginal = logsumexp(&candidates);
        if !log_marginal.is_finite() {
            return Err(Error::Numeric(format!(
                "log-marginal of window {window:?} is {log_marginal}"
            )));
        }
        let weights = candidates
            .iter()
            .map(|&c| (c - log_marginal).exp())
            .collect();
        out.push(WindowPosterior {
            window,
            weights,
            log_marginal,
            log_p0_sum,
        });
    }
    Ok(out)
}

/// Collar-aware loss evaluated window by window.
///
/// `value = -[ sum_i log_p0_i - sum_W sum_{t in W} log_p0_t + sum_W log_marginal(W) ]`
///
/// Within a window, `d/d log_p1_j = -a_j` and `d/d log_p0_t = -(1 - a_t)`
/// where `a` are the candidate posteriors; frames outside every window get
/// `-1` on `log_p0`.
pub fn collar_loss_efficient(
    scores: &FrameScoreSequence,
    changepoints: &ChangePointSet,
    cfg: &CollarConfig,
) -> Result<LossResult> {
    let posteriors = collar_window_posteriors(scores, changepoints, cfg)?;
    let mut log_lik: f64 = scores.log_p0().iter().sum();
    let mut grad = FrameGrad::filled(scores.len(), -1.0, 0.0);
    for post in &posteriors {
        log_lik -= post.log_p0_sum;
        log_lik += post.log_marginal;
        for (k, t) in post.window.clone().enumerate() {
            let a = post.weights[k];
            grad.d_log_p1[t] = -a;
            grad.d_log_p0[t] = -(1.0 - a);
        }
    }
    let value = -log_lik;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("collar loss is {value}")));
    }
    Ok(LossResult { value, grad })
}

/// Number of configurations in the collar-aware marginalization.
pub fn configuration_count(windows: &[RangeInclusive<usize>]) -> u128 {
    windows
        .iter()
        .map(|w| w.clone().count() as u128)
        .fold(1u128, |acc, n| acc.saturating_mul(n))
}

/// Every alternative change-point set obtained by moving each annotated
/// point anywhere inside its own collar window.
pub fn enumerate_configurations(
    changepoints: &ChangePointSet,
    cfg: &CollarConfig,
) -> Result<Vec<ChangePointSet>> {
    let n = changepoints.num_frames();
    let windows = collar_windows(changepoints, cfg, n)?;
    let count = configuration_count(&windows);
    if count > MAX_ENUMERATED_CONFIGURATIONS {
        return Err(Error::TooLarge {
            configurations: count,
            limit: MAX_ENUMERATED_CONFIGURATIONS,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut current: Vec<usize> = windows.iter().map(|w| *w.start()).collect();
    loop {
        out.push(ChangePointSet::new(current.clone(), n)?);
        // Odometer increment, last window fastest.
        let mut k = windows.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            if current[k] < *windows[k].end() {
                current[k] += 1;
                break;
            }
            current[k] = *windows[k].start();
        }
    }
}

/// Collar-aware loss by explicit enumeration:
/// `-log sum_{Z'} exp(-L(Z'))`, with the gradient as the posterior-weighted
/// average of the per-configuration gradients.
pub fn collar_loss_bruteforce(
    scores: &FrameScoreSequence,
    changepoints: &ChangePointSet,
    cfg: &CollarConfig,
) -> Result<LossResult> {
    check_changepoints(scores, changepoints)?;
    let configs = enumerate_configurations(changepoints, cfg)?;
    let per_config = configs
        .iter()
        .map(|z| bce_sparse(scores, z))
        .collect::<Result<Vec<_>>>()?;
    let neg_losses: Vec<f64> = per_config.iter().map(|r| -r.value).collect();
    let value = -logsumexp(&neg_losses);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("collar loss is {value}")));
    }
    let mut grad = FrameGrad::filled(scores.len(), 0.0, 0.0);
    for r in &per_config {
        let w = (value - r.value).exp();
        for i in 0..scores.len() {
            grad.d_log_p0[i] += w * r.grad.d_log_p0[i];
            grad.d_log_p1[i] += w * r.grad.d_log_p1[i];
        }
    }
    Ok(LossResult { value, grad })
}

/// Chains a `(log_p0, log_p1)` gradient through
/// `log_p1 = logsigmoid(a)`, `log_p0 = logsigmoid(-a)`.
pub fn logit_gradient(logits: &[f64], grad: &FrameGrad) -> Vec<f64> {
    logits
        .iter()
        .zip(grad.d_log_p0.iter().zip(&grad.d_log_p1))
        .map(|(&a, (&g0, &g1))| g1 * sigmoid(-a) - g0 * sigmoid(a))
        .collect()
}

fn check_changepoints(scores: &FrameScoreSequence, changepoints: &ChangePointSet) -> Result<()> {
    if let Some(&z) = changepoints.positions().iter().find(|&&z| z >= scores.len()) {
        return Err(Error::IndexOutOfRange {
            index: z,
            len: scores.len(),
        });
    }
    if changepoints.num_frames() != scores.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            actual: changepoints.num_frames(),
        });
    }
    Ok(())
}
