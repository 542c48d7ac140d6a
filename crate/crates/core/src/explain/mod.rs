//! Model-agnostic attribution over feature columns: permutation importance
//! (AUC decrease) and Shapley values, plus force-plot data export.
//!
//! Instances are left-padded step matrices with a mask; a tabular row is a
//! one-step instance. Interventions act on a whole feature column, i.e. on
//! every timestep of that feature at once.

mod permutation;
mod shap;

use serde::{Deserialize, Serialize};

pub use permutation::{permutation_importance, permutation_importance_all, write_ranking_csv, PermutationResult, PermutationRow};
pub use shap::{
    export_force_plot_data, parse_force_plot, shap_values, ForcePlotDocument, ForcePlotEntry, ForcePlotFeature,
    ShapExplanation, ShapMetadata, ShapMode, FORCE_PLOT_SCHEMA_VERSION, MAX_EXACT_FEATURES,
};

use crate::cohort::LabeledSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub label: bool,
    pub steps: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
}

impl Instance {
    pub fn tabular(id: impl Into<String>, label: bool, values: Vec<f64>) -> Self {
        Self { id: id.into(), label, steps: vec![values], mask: vec![true] }
    }

    pub fn width(&self) -> usize {
        self.steps.first().map_or(0, Vec::len)
    }

    /// Value of `feature` at the last unmasked step.
    pub fn last_value(&self, feature: usize) -> Option<f64> {
        let t = self.mask.iter().rposition(|m| *m)?;
        self.steps[t].get(feature).copied()
    }
}

impl From<LabeledSequence> for Instance {
    fn from(s: LabeledSequence) -> Self {
        Self { id: s.index_admission_id, label: s.label, steps: s.steps, mask: s.mask }
    }
}

/// Anything that maps an instance to a risk score.
pub trait Scorer {
    fn score(&self, steps: &[Vec<f64>], mask: &[bool]) -> Result<f64>;
}

/// Adapts a closure over tabular rows (the last unmasked step).
pub struct RowScorer<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Scorer for RowScorer<F> {
    fn score(&self, steps: &[Vec<f64>], mask: &[bool]) -> Result<f64> {
        let t = mask.iter().rposition(|m| *m).ok_or_else(|| Error::validation("instance has no unmasked steps"))?;
        Ok((self.0)(&steps[t]))
    }
}

pub(crate) fn check_layout(instances: &[Instance], width: usize, what: &str) -> Result<usize> {
    let len = instances.first().map_or(0, |i| i.steps.len());
    for inst in instances {
        if inst.steps.len() != len || inst.mask.len() != len {
            return Err(Error::Shape { context: format!("{what}: sequence length of {}", inst.id), expected: len, actual: inst.steps.len() });
        }
        if let Some(row) = inst.steps.iter().find(|r| r.len() != width) {
            return Err(Error::Shape { context: format!("{what}: feature width of {}", inst.id), expected: width, actual: row.len() });
        }
    }
    Ok(len)
}
