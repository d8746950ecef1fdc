//! A small windowed feed-forward boundary scorer.
//!
//! For frame `t` the model reads the feature frames `t - past ..= t + future`
//! (replicating the edge frames beyond the sequence), applies an affine map,
//! a `log cosh` activation, and a second affine map to a single boundary
//! logit. The activation is even, so one hidden unit can respond to a change
//! of the windowed features in either direction. Forward and backward passes
//! are written out by hand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::synth::SynthSequence;
use crate::types::FrameScoreSequence;

/// Upper bound on the parameter count.
pub const MAX_PARAMETERS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub past_frames: usize,
    pub future_frames: usize,
    pub hidden: usize,
}

impl ModelConfig {
    pub fn window(&self) -> usize {
        self.past_frames + self.future_frames + 1
    }

    pub fn input_dim(&self) -> usize {
        self.window() * self.feature_dim
    }

    pub fn num_parameters(&self) -> usize {
        self.hidden * self.input_dim() + 2 * self.hidden + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyModel {
    cfg: ModelConfig,
    params: Vec<f64>,
}

/// Per-frame activations kept from the forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Vec<f64>,
    /// Hidden pre-activations, `num_frames x hidden`.
    pre: Vec<f64>,
}

/// `ln(cosh(x))` without overflow.
#[inline]
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl TinyModel {
    /// Random initialization scaled by fan-in; the output bias starts at
    /// `output_bias`.
    pub fn new(cfg: ModelConfig, output_bias: f64, seed: u64) -> Result<Self> {
        if cfg.feature_dim == 0 || cfg.hidden == 0 {
            return Err(Error::InvalidConfig(
                "feature_dim and hidden must be positive".into(),
            ));
        }
        if cfg.num_parameters() > MAX_PARAMETERS {
            return Err(Error::InvalidConfig(format!(
                "model has {} parameters, limit is {MAX_PARAMETERS}",
                cfg.num_parameters()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = Normal::new(0.0, 1.0 / (cfg.input_dim() as f64).sqrt()).unwrap();
        let w2 = Normal::new(0.0, 1.0 / (cfg.hidden as f64).sqrt()).unwrap();
        let mut params = Vec::with_capacity(cfg.num_parameters());
        params.extend((0..cfg.hidden * cfg.input_dim()).map(|_| w1.sample(&mut rng)));
        params.extend(std::iter::repeat_n(0.0, cfg.hidden));
        params.extend((0..cfg.hidden).map(|_| w2.sample(&mut rng)));
        params.push(output_bias);
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `true` for entries of [`params`](Self::params) that are weights
    /// rather than biases.
    pub fn weight_mask(&self) -> Vec<bool> {
        let h = self.cfg.hidden;
        let mut mask = vec![true; h * self.cfg.input_dim()];
        mask.extend(std::iter::repeat_n(false, h));
        mask.extend(std::iter::repeat_n(true, h));
        mask.push(false);
        mask
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let h = self.cfg.hidden;
        let w1_len = h * self.cfg.input_dim();
        let (w1, rest) = self.params.split_at(w1_len);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h);
        (w1, b1, w2, rest[0])
    }

    fn frame_index(&self, t: usize, k: usize, n: usize) -> usize {
        (t + k).saturating_sub(self.cfg.past_frames).min(n - 1)
    }

    fn check_input(&self, seq: &SynthSequence) -> Result<()> {
        if seq.feature_dim != self.cfg.feature_dim {
            return Err(Error::LengthMismatch {
                expected: self.cfg.feature_dim,
                actual: seq.feature_dim,
            });
        }
        if seq.num_frames() == 0 {
            return Err(Error::InvalidInput("empty sequence".into()));
        }
        Ok(())
    }

    pub fn forward(&self, seq: &SynthSequence) -> Result<ForwardPass> {
        self.check_input(seq)?;
        let n = seq.num_frames();
        let h = self.cfg.hidden;
        let d = self.cfg.feature_dim;
        let in_dim = self.cfg.input_dim();
        let (w1, b1, w2, b2) = self.split();

        let mut pre = vec![0.0; n * h];
        let mut logits = Vec::with_capacity(n);
        let mut input = vec![0.0; in_dim];
        for t in 0..n {
            for k in 0..self.cfg.window() {
                let src = self.frame_index(t, k, n);
                input[k * d..(k + 1) * d].copy_from_slice(seq.frame(src));
            }
            let z = &mut pre[t * h..(t + 1) * h];
            let mut logit = b2;
            for (j, zj) in z.iter_mut().enumerate() {
                let row = &w1[j * in_dim..(j + 1) * in_dim];
                *zj = b1[j] + row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>();
                logit += w2[j] * log_cosh(*zj);
            }
            logits.push(logit);
        }
        if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("model produced logit {bad}")));
        }
        Ok(ForwardPass { logits, pre })
    }

    /// Parameter gradient given `d loss / d logit` for every frame.
    pub fn backward(
        &self,
        seq: &SynthSequence,
        pass: &ForwardPass,
        d_logits: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_input(seq)?;
        let n = seq.num_frames();
        if d_logits.len() != n || pass.logits.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: d_logits.len(),
            });
        }
        let h = self.cfg.hidden;
        let d = self.cfg.feature_dim;
        let in_dim = self.cfg.input_dim();
        let (_, _, w2, _) = self.split();

        let mut grad = vec![0.0; self.params.len()];
        let (g_w1, rest) = grad.split_at_mut(h * in_dim);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(h);

        let mut d_pre = vec![0.0; h];
        for t in 0..n {
            let g = d_logits[t];
            if g == 0.0 {
                continue;
            }
            let z = &pass.pre[t * h..(t + 1) * h];
            g_b2[0] += g;
            for j in 0..h {
                g_w2[j] += g * log_cosh(z[j]);
                d_pre[j] = g * w2[j] * z[j].tanh();
                g_b1[j] += d_pre[j];
            }
            for k in 0..self.cfg.window() {
                let x = seq.frame(self.frame_index(t, k, n));
                for j in 0..h {
                    let row = &mut g_w1[j * in_dim + k * d..j * in_dim + (k + 1) * d];
                    for (gw, xi) in row.iter_mut().zip(x) {
                        *gw += d_pre[j] * xi;
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Frame scores for a sequence.
    pub fn score(&self, seq: &SynthSequence) -> Result<FrameScoreSequence> {
        let pass = self.forward(seq)?;
        FrameScoreSequence::from_logits(&pass.logits, seq.frame_shift)
    }
}
