//! Glue between the models and the evaluation/attribution layers: trainers
//! for the repeated-split harness and scorers for the explainers.

use crate::cohort::{build_sequences, CharlsonWeightTable, FeatureOptions, FeatureRegistry, PatientHistory, SequenceConfig};
use crate::error::{Error, Result};
use crate::eval::{ScoredInstance, Trainer};
use crate::explain::{Instance, Scorer};
use crate::lace::{BaselineModel, BaselineOptions};
use crate::lstm::{train, LstmCheckpoint, LstmNetwork, TrainConfig, TrainingLog};

/// Fits the logistic baseline on each training split.
#[derive(Debug, Clone)]
pub struct LaceTrainer {
    pub options: BaselineOptions,
    pub table: CharlsonWeightTable,
}

impl Trainer for LaceTrainer {
    fn name(&self) -> String {
        if self.options.extended { "lace-lr-extended".into() } else { "lace-lr".into() }
    }

    fn fit_and_score(&self, train: &[PatientHistory], test: &[PatientHistory], _seed: u64) -> Result<Vec<ScoredInstance>> {
        let model = BaselineModel::fit(train, &self.table, &self.options)?;
        model
            .design(test, &self.table)?
            .into_iter()
            .map(|r| Ok(ScoredInstance { score: model.predict(&r.values)?, id: r.admission_id, label: r.label }))
            .collect()
    }
}

/// Fits the registry and the recurrent network on each training split.
/// The repeat seed replaces `train.seed`.
#[derive(Debug, Clone)]
pub struct LstmTrainer {
    pub name: String,
    pub features: FeatureOptions,
    pub sequence: SequenceConfig,
    pub train: TrainConfig,
    pub table: CharlsonWeightTable,
}

impl LstmTrainer {
    pub fn fit(&self, histories: &[PatientHistory], seed: u64) -> Result<(LstmCheckpoint, TrainingLog)> {
        let registry = FeatureRegistry::fit(histories, &self.features, &self.table)?;
        let data = build_sequences(histories, &registry, &self.table, self.sequence)?;
        let (network, log) = train(&data, &TrainConfig { seed, ..self.train })?;
        Ok((LstmCheckpoint::new(registry, self.sequence, network), log))
    }
}

impl Trainer for LstmTrainer {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn fit_and_score(&self, train: &[PatientHistory], test: &[PatientHistory], seed: u64) -> Result<Vec<ScoredInstance>> {
        let (ckpt, _) = self.fit(train, seed)?;
        build_sequences(test, &ckpt.registry, &self.table, self.sequence)?
            .into_iter()
            .map(|s| {
                let score = ckpt.network.predict(&s.steps, &s.mask)?;
                Ok(ScoredInstance { id: s.index_admission_id, score, label: s.label })
            })
            .collect()
    }
}

impl Scorer for LstmNetwork {
    fn score(&self, steps: &[Vec<f64>], mask: &[bool]) -> Result<f64> {
        self.predict(steps, mask)
    }
}

/// Scores the last unmasked step with the baseline's logistic model.
impl Scorer for BaselineModel {
    fn score(&self, steps: &[Vec<f64>], mask: &[bool]) -> Result<f64> {
        let t = mask.iter().rposition(|m| *m).ok_or_else(|| Error::validation("instance has no unmasked steps"))?;
        self.predict(&steps[t])
    }
}

/// A trained model together with the way it turns histories into instances.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Baseline(BaselineModel),
    Lstm(LstmCheckpoint),
}

impl TrainedModel {
    /// Loads either artifact kind, dispatching on its `kind` field.
    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Kind {
            kind: String,
        }
        let kind: Kind = serde_json::from_str(s)?;
        match kind.kind.as_str() {
            crate::lace::MODEL_KIND => Ok(Self::Baseline(BaselineModel::from_json(s)?)),
            crate::lstm::CHECKPOINT_KIND => Ok(Self::Lstm(LstmCheckpoint::from_json(s)?)),
            other => Err(Error::Checkpoint(format!("unknown model kind `{other}`"))),
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        match self {
            Self::Baseline(m) => m.feature_names.clone(),
            Self::Lstm(c) => c.registry.names().into_iter().map(String::from).collect(),
        }
    }

    /// One instance per admission, in history order.
    pub fn instances(&self, histories: &[PatientHistory], table: &CharlsonWeightTable) -> Result<Vec<Instance>> {
        Ok(match self {
            Self::Baseline(m) => {
                m.design(histories, table)?.into_iter().map(|r| Instance::tabular(r.admission_id, r.label, r.values)).collect()
            }
            Self::Lstm(c) => build_sequences(histories, &c.registry, table, c.sequence)?.into_iter().map(Instance::from).collect(),
        })
    }

    pub fn scorer(&self) -> &dyn Scorer {
        match self {
            Self::Baseline(m) => m,
            Self::Lstm(c) => &c.network,
        }
    }
}

/// Restricts attribution to a subset of columns: the other columns always
/// keep the values of `anchor`, the instance being explained.
pub struct ColumnSubsetScorer<'a> {
    pub inner: &'a dyn Scorer,
    pub anchor: &'a Instance,
    pub columns: &'a [usize],
}

impl ColumnSubsetScorer<'_> {
    /// Projects `instance` onto the selected columns.
    pub fn project(&self, instance: &Instance) -> Instance {
        Instance {
            id: instance.id.clone(),
            label: instance.label,
            steps: instance.steps.iter().map(|r| self.columns.iter().map(|&c| r[c]).collect()).collect(),
            mask: instance.mask.clone(),
        }
    }
}

impl Scorer for ColumnSubsetScorer<'_> {
    fn score(&self, steps: &[Vec<f64>], mask: &[bool]) -> Result<f64> {
        let mut full = self.anchor.steps.clone();
        for (row, sub) in full.iter_mut().zip(steps) {
            for (&c, v) in self.columns.iter().zip(sub) {
                row[c] = *v;
            }
        }
        self.inner.score(&full, mask)
    }
}
