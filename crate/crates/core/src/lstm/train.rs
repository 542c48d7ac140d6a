use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::{bce_loss, LstmNetwork, NetworkConfig, NetworkParams};
use crate::cohort::LabeledSequence;
use crate::error::{Error, Result};
use crate::eval::auc_roc;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Share of training patients held out for early stopping.
    pub validation_fraction: f64,
    /// Global gradient L2 clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub adam: AdamConfig,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 64,
            patience: 5,
            seed: 0,
            validation_fraction: 0.15,
            clip_norm: Some(5.0),
            adam: AdamConfig::default(),
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("max_epochs, batch_size and patience must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.network.validate()
    }
}

/// Tracks the best validation loss and decides when to stop.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: None, stale: 0 }
    }

    pub fn update(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training-mode loss over the epoch's mini-batches.
    pub train_loss: f64,
    pub validation_loss: f64,
    /// `None` when the validation split holds a single class.
    pub validation_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_sequences: usize,
    pub validation_sequences: usize,
}

/// Held-out patients for early stopping: a seeded patient-level split.
fn split_by_patient(data: &[LabeledSequence], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut patients: Vec<&str> = data
        .iter()
        .map(|s| s.patient_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    patients.shuffle(&mut stream_rng(seed, 1));
    let n_val = ((patients.len() as f64 * fraction).round() as usize).clamp(1, patients.len().saturating_sub(1).max(1));
    let held: std::collections::HashSet<&str> = patients[..n_val].iter().copied().collect();
    (0..data.len()).partition(|&i| !held.contains(data[i].patient_id.as_str()))
}

fn batch_refs<'a>(data: &'a [LabeledSequence], idx: &'a [usize]) -> impl Iterator<Item = (&'a [Vec<f64>], &'a [bool])> + 'a {
    idx.iter().map(move |&i| (data[i].steps.as_slice(), data[i].mask.as_slice()))
}

/// Eval-mode loss and AUC on a subset.
fn evaluate(net: &LstmNetwork, data: &[LabeledSequence], idx: &[usize]) -> Result<(f64, Option<f64>)> {
    let probs = net.forward(batch_refs(data, idx), None)?.probabilities();
    let labels: Vec<bool> = idx.iter().map(|&i| data[i].label).collect();
    let loss = bce_loss(&labels, &probs)?;
    Ok((loss, auc_roc(&probs, &labels).ok()))
}

/// Mini-batch Adam with early stopping on a patient-level validation split.
/// Returns the parameters of the epoch with the lowest validation loss.
pub fn train(data: &[LabeledSequence], config: &TrainConfig) -> Result<(LstmNetwork, TrainingLog)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    let positives = data.iter().filter(|s| s.label).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::DegenerateLabels(format!(
            "training data holds a single class ({positives} positives of {})",
            data.len()
        )));
    }
    let input_size = data[0].steps.first().map_or(0, Vec::len);

    let mut init_rng = stream_rng(config.seed, 0);
    let mut shuffle_rng = stream_rng(config.seed, 2);
    let mut dropout_rng = stream_rng(config.seed, 3);

    let mut net = LstmNetwork::new(input_size, config.network, &mut init_rng)?;
    let (mut train_idx, val_idx) = split_by_patient(data, config.validation_fraction, config.seed);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::validation("need at least two patients to carve a validation split"));
    }
    let names = NetworkParams::tensor_names();
    let mut adam = AdamState::new(config.adam, net.params.tensors().iter().map(|t| t.len()));
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = net.params.clone();
    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        train_sequences: train_idx.len(),
        validation_sequences: val_idx.len(),
    };

    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in train_idx.chunks(config.batch_size) {
            let cache = net.forward(batch_refs(data, chunk), Some(&mut dropout_rng))?;
            let labels: Vec<bool> = chunk.iter().map(|&i| data[i].label).collect();
            loss_sum += bce_loss(&labels, &cache.probabilities())? * chunk.len() as f64;
            let mut grads = net.backward(&cache, &labels)?;
            if let Some(max) = config.clip_norm {
                grads.clip_norm(max);
            }
            let grad_refs = grads.tensors();
            adam.step(&mut net.params.tensors_mut(), &grad_refs, &names)?;
        }
        let (validation_loss, validation_auc) = evaluate(&net, data, &val_idx)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            validation_loss,
            validation_auc,
        });
        log::debug!("epoch {epoch}: train {:.5} val {validation_loss:.5}", loss_sum / train_idx.len() as f64);
        match stopper.update(epoch, validation_loss) {
            StopDecision::Improved => best = net.params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                log.stopped_early = true;
                break;
            }
        }
    }
    log.best_epoch = stopper.best_epoch().unwrap_or(0);
    if log.best_epoch == 0 {
        return Err(Error::validation("validation loss was never finite"));
    }
    net.params = best;
    Ok((net, log))
}
