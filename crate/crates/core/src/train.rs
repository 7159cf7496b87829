//! Mini-batch training with validation checkpointing, and evaluation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datagen::{LabeledDataset, CHANNELS, CLASSES, IMAGE_BYTES, SIDE};
use crate::error::{Error, Result};
use crate::layers::{softmax_cross_entropy, Mode, NormKind};
use crate::model::{Model, ModelConfig, INPUT_CHANNELS};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::{Rng, Tensor};

const EVAL_BATCH: usize = 256;
const DROPOUT_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 50, batch_size: 128, optimizer: OptimizerConfig::default(), shuffle_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config(String::from("epochs must be at least 1")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config(String::from("batch size must be positive")));
        }
        if self.batch_size < 2 && model.norm == Some(NormKind::Batch) {
            return Err(Error::Config(String::from("batch norm needs a batch size of at least 2")));
        }
        if !(self.optimizer.lr() > 0.0 && self.optimizer.lr().is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.optimizer.lr())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-example loss over the epoch's training batches.
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Parameters of the best validation epoch along with the run's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub config: ModelConfig,
    pub train_config: TrainConfig,
    pub state: BTreeMap<String, Tensor>,
    pub best_val_accuracy: f64,
    /// 1-based.
    pub epoch_of_best: usize,
    pub history: Vec<EpochRecord>,
}

impl ModelSnapshot {
    pub fn model(&self) -> Result<Model> {
        Model::from_state(&self.config, &self.state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub predicted: u8,
    /// Softmax probability of the predicted class.
    pub max_prob: f64,
}

impl Prediction {
    pub fn correct(&self) -> bool {
        self.label == self.predicted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

/// Images `indices` of `ds` as a `[n, 3, 32, 32]` tensor scaled to `[0, 1]`.
pub fn batch_tensor(ds: &LabeledDataset, indices: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(indices.len() * IMAGE_BYTES);
    for &i in indices {
        data.extend(ds.image(i).iter().map(|&v| v as f32 / 255.0));
    }
    Tensor::new(alloc::vec![indices.len(), CHANNELS, SIDE, SIDE], data).expect("batch shape matches image bytes")
}

fn batch_labels(ds: &LabeledDataset, indices: &[usize]) -> Vec<usize> {
    indices.iter().map(|&i| ds.labels[i] as usize).collect()
}

/// Batch boundaries over `n` examples; a trailing singleton joins the batch
/// before it so batch statistics are always defined.
fn batches(n: usize, size: usize) -> Vec<core::ops::Range<usize>> {
    let mut out: Vec<_> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().expect("nonempty");
        out.last_mut().expect("nonempty").end = last.end;
    }
    out
}

fn check_compatible(config: &ModelConfig) -> Result<()> {
    if config.classes != CLASSES {
        return Err(Error::Config(format!("model has {} classes, datasets have {CLASSES}", config.classes)));
    }
    if CHANNELS != INPUT_CHANNELS {
        return Err(Error::ChannelMismatch { expected: INPUT_CHANNELS, found: CHANNELS });
    }
    Ok(())
}

/// Trains `model` and returns the parameters of the epoch with the best
/// validation accuracy (earliest on ties). `progress` sees every epoch.
pub fn train<F: FnMut(&EpochRecord)>(
    mut model: Model,
    train_set: &LabeledDataset,
    val_set: &LabeledDataset,
    config: &TrainConfig,
    mut progress: F,
) -> Result<ModelSnapshot> {
    config.validate(model.config())?;
    check_compatible(model.config())?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config(String::from("training and validation sets must be nonempty")));
    }
    let mut optimizer = Optimizer::new(config.optimizer);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, BTreeMap<String, Tensor>)> = None;

    for epoch in 1..=config.epochs {
        Rng::for_stream(config.shuffle_seed, epoch as u64).shuffle(&mut order);
        let mut dropout_rng = Rng::for_stream(config.shuffle_seed, DROPOUT_STREAM | epoch as u64);
        let mut loss_sum = 0.0f64;
        for (b, range) in batches(order.len(), config.batch_size).into_iter().enumerate() {
            let idx = &order[range];
            let x = batch_tensor(train_set, idx);
            model.zero_grad();
            let logits = model.forward(&x, Mode::Train, &mut dropout_rng)?;
            let out = softmax_cross_entropy(&logits, &batch_labels(train_set, idx))?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b + 1, loss: out.loss });
            }
            loss_sum += out.loss as f64 * idx.len() as f64;
            model.backward(&out.grad_logits)?;
            optimizer.step_model(&mut model);
        }
        let val_accuracy = evaluate_model(&mut model, val_set)?.accuracy;
        let record = EpochRecord { epoch, train_loss: loss_sum / order.len() as f64, val_accuracy };
        progress(&record);
        history.push(record);
        if best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, model.state()));
        }
    }

    let (best_val_accuracy, epoch_of_best, state) = best.expect("at least one epoch");
    Ok(ModelSnapshot {
        config: model.config().clone(),
        train_config: config.clone(),
        state,
        best_val_accuracy,
        epoch_of_best,
        history,
    })
}

/// Scores `ds` with an arbitrary batch classifier returning `[n, classes]` logits.
pub fn evaluate_with<F>(ds: &LabeledDataset, mut forward: F) -> Result<Evaluation>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    let mut predictions = Vec::with_capacity(ds.len());
    let all: Vec<usize> = (0..ds.len()).collect();
    for idx in all.chunks(EVAL_BATCH) {
        let logits = forward(&batch_tensor(ds, idx))?;
        let labels = batch_labels(ds, idx);
        let probs = softmax_cross_entropy(&logits, &labels)?.probs;
        let classes = probs.shape()[1];
        for (row, &label) in probs.data().chunks_exact(classes).zip(&labels) {
            // First maximum wins, matching argmax conventions.
            let (predicted, &p) = row
                .iter()
                .enumerate()
                .fold((0, &row[0]), |best, (i, p)| if *p > *best.1 { (i, p) } else { best });
            predictions.push(Prediction { label: label as u8, predicted: predicted as u8, max_prob: p as f64 });
        }
    }
    let correct = predictions.iter().filter(|p| p.correct()).count();
    let accuracy = if predictions.is_empty() { 0.0 } else { correct as f64 / predictions.len() as f64 };
    Ok(Evaluation { accuracy, predictions })
}

/// Evaluates in eval mode: running statistics for batch norm, dropout off.
pub fn evaluate_model(model: &mut Model, ds: &LabeledDataset) -> Result<Evaluation> {
    check_compatible(model.config())?;
    // Eval mode never draws from the generator.
    let mut rng = Rng::new(0);
    evaluate_with(ds, |x| model.forward(x, Mode::Eval, &mut rng))
}

pub fn evaluate(snapshot: &ModelSnapshot, ds: &LabeledDataset) -> Result<Evaluation> {
    evaluate_model(&mut snapshot.model()?, ds)
}
