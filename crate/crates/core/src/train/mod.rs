//! Training with early stopping, and evaluation on a split.

mod metrics;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, AutodiffError, Tape};
use crate::graph::SplitAssignment;
use crate::model::{class_weights, MandateModel, ModelError, ModelInputs};
use crate::rng::{stream_rng, Stream};

pub use metrics::{auc, f1_macro, gmean, Confusion, MetricError, MetricsReport, DECISION_THRESHOLD};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("split {0} is empty")]
    EmptySplit(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        /// Parameters after the last epoch whose loss was finite.
        last_finite: Box<MandateModel>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Nodes per step when the graph exceeds the attention cap.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, patience: 20, learning_rate: 1e-3, batch_size: 1024, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best monitored value; asks to stop once `patience` epochs
/// pass without a strict improvement. NaN never improves.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        let improved = match self.best {
            None => !value.is_nan(),
            Some((_, best)) => value > best,
        };
        if improved {
            self.best = Some((epoch, value));
            return StopDecision::Improved;
        }
        let since = epoch - self.best.map_or(0, |(e, _)| e);
        if since >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_f1_macro: f64,
    pub val_gmean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Kept out of every written artifact so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_auc,val_f1_macro,val_gmean\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{},{}", r.epoch, r.train_loss, r.val_auc, r.val_f1_macro, r.val_gmean);
        }
        s
    }
}

pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: MandateModel,
    pub history: TrainHistory,
}

fn labels_of(inputs: &ModelInputs, nodes: &[usize]) -> Vec<bool> {
    nodes.iter().map(|&i| inputs.labels[i].class() == Some(1)).collect()
}

/// Metrics of `model` on `nodes` (a named split).
pub fn evaluate(
    model: &MandateModel,
    inputs: &ModelInputs,
    nodes: &[usize],
    split: &str,
) -> Result<MetricsReport, TrainError> {
    if nodes.is_empty() {
        return Err(TrainError::EmptySplit(split.to_string()));
    }
    let scores = model.predict(inputs, nodes)?;
    Ok(MetricsReport::compute(split, &scores, &labels_of(inputs, nodes))?)
}

fn metrics_from_all(all: &[f64], inputs: &ModelInputs, nodes: &[usize], split: &str) -> Result<MetricsReport, TrainError> {
    let scores: Vec<f64> = nodes.iter().map(|&i| all[i]).collect();
    Ok(MetricsReport::compute(split, &scores, &labels_of(inputs, nodes))?)
}

/// Optimize `model` on the training split, monitoring validation AUC.
/// Returns the parameters of the best validation epoch.
pub fn train(
    mut model: MandateModel,
    inputs: &ModelInputs,
    split: &SplitAssignment,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let started = Instant::now();
    for (name, nodes) in [("train", &split.train), ("val", &split.val)] {
        if nodes.is_empty() {
            return Err(TrainError::EmptySplit(name.into()));
        }
    }
    let weights = class_weights(&inputs.labels, &split.train)?;
    let n = inputs.num_nodes();
    let mut is_train = vec![false; n];
    for &i in &split.train {
        is_train[i] = true;
    }
    let lambda = model.arch.config.lambda_orth;
    let mut adam = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() });
    let mut rng = stream_rng(cfg.seed, Stream::Batch);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.params.clone();
    let mut records = Vec::new();
    let mut stopped_early = false;
    let full_batch = n <= model.arch.config.attention_cap;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        let batches: Vec<Vec<usize>> = if full_batch {
            vec![order.clone()]
        } else {
            order.shuffle(&mut rng);
            order.chunks(cfg.batch_size.min(model.arch.config.attention_cap)).map(|c| c.to_vec()).collect()
        };
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        let last_finite = model.params.clone();
        for batch in batches {
            let targets: Vec<Option<usize>> =
                batch.iter().map(|&i| if is_train[i] { inputs.labels[i].class() } else { None }).collect();
            if targets.iter().all(Option::is_none) {
                continue;
            }
            let tape = Tape::new();
            let bound = model.params.bind(&tape, true);
            let fp = model.arch.forward(&tape, &bound, inputs, &batch, Some(&mut rng))?;
            let loss = fp.loss(&targets, weights, lambda)?;
            let value = loss.value().item().expect("scalar loss");
            let diverged = |reason: String| TrainError::Diverged {
                epoch,
                reason,
                last_finite: Box::new(MandateModel { arch: model.arch.clone(), params: last_finite.clone() }),
            };
            if !value.is_finite() {
                return Err(diverged(format!("loss is {value}")));
            }
            let mut grads = tape.backward(loss).map_err(ModelError::from)?;
            let grads = bound.collect_grads(&mut grads);
            match adam.step(&mut model.params, &grads) {
                Ok(()) => {}
                Err(AutodiffError::NonFiniteGradient(name)) => {
                    return Err(diverged(format!("non-finite gradient for {name}")));
                }
                Err(e) => return Err(ModelError::from(e).into()),
            }
            loss_sum += value;
            steps += 1;
        }
        let all = model.predict_all(inputs)?;
        if let Some(i) = all.iter().position(|p| !p.is_finite()) {
            return Err(TrainError::Diverged {
                epoch,
                reason: format!("non-finite prediction for node {i}"),
                last_finite: Box::new(MandateModel { arch: model.arch.clone(), params: last_finite }),
            });
        }
        let val = metrics_from_all(&all, inputs, &split.val, "val")?;
        records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / steps.max(1) as f64,
            val_auc: val.auc,
            val_f1_macro: val.f1_macro,
            val_gmean: val.gmean,
        });
        match stopper.observe(epoch, val.auc) {
            StopDecision::Improved => best = model.params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    let best_epoch = stopper.best().map_or(records.len(), |(e, _)| e);
    model.params = best;
    Ok(TrainOutcome {
        model,
        history: TrainHistory { records, best_epoch, stopped_early, wall_seconds: started.elapsed().as_secs_f64() },
    })
}
