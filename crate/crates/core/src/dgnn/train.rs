//! Loss, optimiser and the training loop.

use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::model::{model_backward, model_forward, select_class, ModelConfig, ModelParams, Mode, N_CLASSES};
use crate::error::{Error, Result};
use crate::eval::classification_metrics;
use crate::skeleton::{build_topology, incidence_matrices, make_window, DirectedSkeletonGraph, FeatureWindow, IncidencePair, IntentionClass};
use crate::synth::{load_split, DatasetManifest, LabeledSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Frames between the window end and the predicted label.
    pub prediction_offset: usize,
    /// Spacing of training window ends, frames.
    pub sample_stride: usize,
    /// Class-balanced subsample drawn from the pool each epoch; 0 uses the
    /// whole pool.
    pub samples_per_epoch: usize,
    /// Spacing of validation window ends, frames.
    pub val_stride: usize,
    /// Global gradient norm limit per batch; 0 disables clipping.
    pub grad_clip: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            weight_decay: 0.005,
            momentum: 0.9,
            batch_size: 32,
            epochs: 30,
            seed: 7,
            prediction_offset: 25,
            sample_stride: 5,
            samples_per_epoch: 1500,
            val_stride: 25,
            grad_clip: 1.0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.weight_decay >= 0.0 && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::Precondition("learning rate must be positive, decay >= 0, momentum in [0, 1)".into()));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::Precondition("gradient clip must be finite and non-negative".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.sample_stride == 0 || self.val_stride == 0 {
            return Err(Error::Precondition("batch size, epochs and strides must be positive".into()));
        }
        self.model.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_balanced_accuracy: f64,
}

/// Softmax cross-entropy of one sample and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &[f64; N_CLASSES], label: IntentionClass) -> Result<(f64, [f64; N_CLASSES])> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|l| (l - m).exp());
    let z: f64 = exps.iter().sum();
    let loss = m + z.ln() - logits[label.index()];
    if !loss.is_finite() {
        return Err(Error::Numerical { layer: usize::MAX });
    }
    let mut grad = exps.map(|e| e / z);
    grad[label.index()] -= 1.0;
    Ok((loss, grad))
}

/// Mean cross-entropy over the batch and its exact gradient for the dropout
/// masks drawn from `rng`. Weight decay is applied by the optimiser.
pub fn loss_and_grad<R: Rng + ?Sized>(
    batch: &[(FeatureWindow, IntentionClass)],
    params: &ModelParams,
    inc: &IncidencePair,
    rng: &mut R,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (window, label) in batch {
        let (logits, cache) = model_forward(window, params, inc, Mode::Train, rng)?;
        let (loss, d_logits) = cross_entropy(&logits, *label)?;
        total += loss;
        model_backward(&cache, params, inc, &d_logits.map(|d| d * scale), &mut grads);
    }
    Ok((total * scale, grads))
}

/// Rescales `grads` so their global L2 norm is at most `max_norm` (0 = off).
/// Returns the norm before clipping.
pub fn clip_gradient(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.tensors().iter().map(|(_, t)| t.sum_squares()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for (_, t) in grads.tensors_mut() {
            t.scale(s);
        }
    }
    norm
}

/// SGD with momentum and weight decay folded into the update.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: ModelParams,
}

impl Sgd {
    pub fn new(params: &ModelParams, learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            weight_decay,
            velocity: params.zeros_like(),
        }
    }

    pub fn from_config(params: &ModelParams, config: &TrainConfig) -> Self {
        Self::new(params, config.learning_rate, config.momentum, config.weight_decay)
    }

    /// `v = momentum * v - lr * (g + decay * p); p += v`.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        let (lr, mu, wd) = (self.learning_rate, self.momentum, self.weight_decay);
        let velocity = self.velocity.tensors_mut();
        let grads = grads.tensors();
        for (((_, p), (_, v)), (_, g)) in params.tensors_mut().into_iter().zip(velocity).zip(grads) {
            for ((pi, vi), gi) in p.data.iter_mut().zip(v.data.iter_mut()).zip(&g.data) {
                *vi = mu * *vi - lr * (gi + wd * *pi);
                *pi += *vi;
            }
        }
    }
}

/// One training or validation example: the window ending at `end` in
/// sequence `sequence`, labelled `offset` frames later.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub sequence: usize,
    pub end: usize,
    pub label: IntentionClass,
}

pub fn window_samples(sequences: &[LabeledSequence], window_length: usize, offset: usize, stride: usize) -> Vec<SampleRef> {
    let mut out = Vec::new();
    for (s, seq) in sequences.iter().enumerate() {
        let n = seq.len();
        let mut end = window_length.saturating_sub(1);
        while end + offset < n {
            out.push(SampleRef {
                sequence: s,
                end,
                label: seq.labels[end + offset],
            });
            end += stride;
        }
    }
    out
}

pub fn sample_window(
    sequences: &[LabeledSequence],
    sample: &SampleRef,
    graph: &DirectedSkeletonGraph,
    window_length: usize,
) -> Result<FeatureWindow> {
    let frames = &sequences[sample.sequence].frames[sample.end + 1 - window_length..=sample.end];
    make_window(frames, graph, window_length)
}

/// Draws up to `n / 3` samples of each class, then shuffles.
fn balanced_subsample(pool: &[SampleRef], n: usize, rng: &mut impl Rng) -> Vec<SampleRef> {
    if n == 0 || n >= pool.len() {
        let mut all = pool.to_vec();
        all.shuffle(rng);
        return all;
    }
    let per_class = n.div_ceil(N_CLASSES);
    let mut out = Vec::with_capacity(n);
    for class in IntentionClass::ALL {
        let mut members: Vec<SampleRef> = pool.iter().filter(|s| s.label == class).copied().collect();
        members.shuffle(rng);
        members.truncate(per_class);
        out.extend(members);
    }
    out.shuffle(rng);
    out
}

/// Eval-mode predictions for a list of samples.
pub fn predict_samples(
    sequences: &[LabeledSequence],
    samples: &[SampleRef],
    params: &ModelParams,
    graph: &DirectedSkeletonGraph,
    inc: &IncidencePair,
) -> Result<Vec<IntentionClass>> {
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    samples
        .iter()
        .map(|s| {
            let w = sample_window(sequences, s, graph, params.config.window_length)?;
            let (logits, _) = model_forward(&w, params, inc, Mode::Eval, &mut unused)?;
            Ok(select_class(&logits))
        })
        .collect()
}

/// Trains on in-memory sequences and returns the checkpoint of the epoch
/// with the best validation balanced accuracy. `on_epoch` sees each epoch's
/// metrics as they are produced.
pub fn train_sequences(
    train: &[LabeledSequence],
    val: &[LabeledSequence],
    config: &TrainConfig,
    manifest_hash: &str,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<Checkpoint> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Precondition("training and validation splits must be non-empty".into()));
    }
    let graph = build_topology();
    let inc = incidence_matrices(&graph);
    let t = config.model.window_length;
    let pool = window_samples(train, t, config.prediction_offset, config.sample_stride);
    let val_samples = window_samples(val, t, config.prediction_offset, config.val_stride);
    if pool.is_empty() || val_samples.is_empty() {
        return Err(Error::Precondition("sequences too short for one window".into()));
    }
    let mut warnings = Vec::new();
    for class in IntentionClass::ALL {
        if !pool.iter().any(|s| s.label == class) {
            let msg = format!("class {} absent from training data", class.name());
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let val_labels: Vec<IntentionClass> = val_samples.iter().map(|s| s.label).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(&config.model, &mut rng)?;
    let mut opt = Sgd::from_config(&params, config);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    for epoch in 0..config.epochs {
        let epoch_samples = balanced_subsample(&pool, config.samples_per_epoch, &mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in epoch_samples.chunks(config.batch_size) {
            let batch = chunk
                .iter()
                .map(|s| Ok((sample_window(train, s, &graph, t)?, s.label)))
                .collect::<Result<Vec<_>>>()?;
            let (loss, mut grads) = loss_and_grad(&batch, &params, &inc, &mut rng)?;
            clip_gradient(&mut grads, config.grad_clip);
            opt.step(&mut params, &grads);
            loss_sum += loss;
            batches += 1;
        }
        let preds = predict_samples(val, &val_samples, &params, &graph, &inc)?;
        let m = classification_metrics(&preds, &val_labels)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_accuracy: m.accuracy,
            val_balanced_accuracy: m.balanced_accuracy,
        };
        info!(
            "epoch {epoch}: loss {:.4} val acc {:.4} balanced {:.4}",
            metrics.train_loss, metrics.val_accuracy, metrics.val_balanced_accuracy
        );
        on_epoch(&metrics);
        if best.as_ref().is_none_or(|(score, _, _)| m.balanced_accuracy >= *score) {
            best = Some((m.balanced_accuracy, epoch, params.clone()));
        }
        history.push(metrics);
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok(Checkpoint::new(best_params, config.clone(), history, best_epoch, manifest_hash.to_string(), warnings, &graph))
}

/// Loads the manifest's splits and trains.
pub fn train(manifest_path: &Path, config: &TrainConfig, on_epoch: &mut dyn FnMut(&EpochMetrics)) -> Result<Checkpoint> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    if manifest.train.recordings.is_empty() || manifest.val.recordings.is_empty() {
        return Err(Error::Precondition("manifest has an empty split".into()));
    }
    let train = load_split(dir, &manifest.train)?;
    let val = load_split(dir, &manifest.val)?;
    train_sequences(&train, &val, config, &manifest.hash(), on_epoch)
}
