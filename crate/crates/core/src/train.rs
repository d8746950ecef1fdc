//! Minibatch SGD for [`TinyModel`] under either supervision scheme.
//!
//! Per-sequence gradients within a batch are computed in parallel and then
//! summed in batch order, so results do not depend on the thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::losses::{bce_dense, collar_loss_efficient, expand_neighborhood, logit_gradient};
use crate::model::TinyModel;
use crate::synth::SynthSequence;
use crate::types::{CollarConfig, FrameScoreSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Binary cross-entropy after marking every frame within the
    /// neighborhood radius of an annotated change as positive.
    StandardNeighborhood,
    /// Marginalization over one boundary per collar window.
    CollarAware,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::StandardNeighborhood => "neighborhood",
            Objective::CollarAware => "collar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    /// Plain fixed-step gradient descent.
    Sgd,
    /// Adam with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub collar: CollarConfig,
    pub neighborhood_radius_seconds: f64,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// The averaged minibatch gradient is rescaled to at most this L2 norm.
    /// `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    /// L2 penalty coefficient on the weights (biases are not decayed). The
    /// penalty is not part of the reported loss.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::CollarAware,
            collar: CollarConfig::inclusive(3),
            neighborhood_radius_seconds: 0.05,
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            batch_size: 8,
            epochs: 10,
            max_grad_norm: Some(10.0),
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        if !(self.neighborhood_radius_seconds >= 0.0) {
            return Err(Error::InvalidConfig(
                "neighborhood radius must be non-negative".into(),
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "weight_decay {} must be non-negative",
                self.weight_decay
            )));
        }
        if let Some(c) = self.max_grad_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "max_grad_norm {c} must be positive"
                )));
            }
        }
        self.collar.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TinyModel,
    /// Mean per-sequence training loss after each epoch.
    pub loss_trace: Vec<f64>,
}

/// Objective value and `d loss / d logit` for one sequence given its logits.
pub fn objective_on_logits(
    logits: &[f64],
    seq: &SynthSequence,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let scores = FrameScoreSequence::from_logits(logits, seq.frame_shift)?;
    let result = match cfg.objective {
        Objective::StandardNeighborhood => {
            let labels = expand_neighborhood(
                &seq.annotated,
                cfg.neighborhood_radius_seconds,
                seq.frame_shift,
                seq.num_frames(),
            );
            bce_dense(&scores, &labels)?
        }
        Objective::CollarAware => collar_loss_efficient(&scores, &seq.annotated, &cfg.collar)?,
    };
    Ok((result.value, logit_gradient(logits, &result.grad)))
}

/// Loss and parameter gradient of one sequence.
pub fn sequence_loss(
    model: &TinyModel,
    seq: &SynthSequence,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let pass = model.forward(seq)?;
    let (value, d_logits) = objective_on_logits(&pass.logits, seq, cfg)?;
    let grad = model.backward(seq, &pass, &d_logits)?;
    Ok((value, grad))
}

/// Mean per-sequence loss over a set of sequences.
pub fn corpus_loss(model: &TinyModel, seqs: &[SynthSequence], cfg: &TrainConfig) -> Result<f64> {
    if seqs.is_empty() {
        return Ok(0.0);
    }
    let values = seqs
        .par_iter()
        .map(|s| {
            let pass = model.forward(s)?;
            objective_on_logits(&pass.logits, s, cfg).map(|(v, _)| v)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / seqs.len() as f64)
}

/// Trains `model` on `train`.
///
/// Each step averages the per-sequence gradients (sums over frames) of one
/// shuffled minibatch, optionally clips the result and adds weight decay,
/// then applies the configured optimizer.
pub fn train(mut model: TinyModel, train: &[SynthSequence], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let weight_mask = model.weight_mask();
    let mut adam = Adam::new(model.params().len());

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let grads = batch
                .par_iter()
                .map(|&i| sequence_loss(&model, &train[i], cfg).map(|(_, g)| g))
                .collect::<Result<Vec<_>>>()?;
            let mut step = vec![0.0; model.params().len()];
            for g in &grads {
                for (s, gi) in step.iter_mut().zip(g) {
                    *s += gi;
                }
            }
            let mut scale = 1.0 / batch.len() as f64;
            if let Some(limit) = cfg.max_grad_norm {
                let norm = scale * step.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > limit {
                    scale *= limit / norm;
                }
            }
            for s in &mut step {
                *s *= scale;
            }
            if cfg.weight_decay > 0.0 {
                for (s, (p, is_weight)) in step.iter_mut().zip(model.params().iter().zip(&weight_mask)) {
                    if *is_weight {
                        *s += cfg.weight_decay * p;
                    }
                }
            }
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, s) in model.params_mut().iter_mut().zip(&step) {
                        *p -= cfg.learning_rate * s;
                    }
                }
                Optimizer::Adam => adam.apply(model.params_mut(), &step, cfg.learning_rate),
            }
            let params = model.params();
            if let Some(bad) = params.iter().find(|p| !p.is_finite()) {
                return Err(Error::Divergence(format!(
                    "parameter became {bad} in epoch {epoch}"
                )));
            }
        }
        let loss = corpus_loss(&model, train, cfg)?;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("loss is {loss} after epoch {epoch}")));
        }
        loss_trace.push(loss);
    }
    Ok(TrainOutcome { model, loss_trace })
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}
