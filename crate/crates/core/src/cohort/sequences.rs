use std::io::Write;

use serde::{Deserialize, Serialize};

use super::charlson::CharlsonWeightTable;
use super::events::label_readmissions;
use super::features::{admission_facts, FeatureRegistry};
use super::records::PatientHistory;
use crate::error::Result;

pub const DEFAULT_MAX_SEQ_LEN: usize = 10;
pub const TENSOR_DUMP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    pub max_seq_len: usize,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self { max_seq_len: DEFAULT_MAX_SEQ_LEN }
    }
}

/// One index admission with its (left-padded) history.
///
/// `steps` always has `max_seq_len` rows; `mask[t]` is false on padding rows,
/// which are zero-filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub patient_id: String,
    pub index_admission_id: String,
    pub label: bool,
    pub steps: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One sequence per admission acting as index admission.
pub fn build_sequences(
    histories: &[PatientHistory],
    registry: &FeatureRegistry,
    table: &CharlsonWeightTable,
    config: SequenceConfig,
) -> Result<Vec<LabeledSequence>> {
    let width = registry.len();
    let max_len = config.max_seq_len.max(1);
    let mut out = Vec::new();
    for h in histories {
        let rows: Vec<Vec<f64>> = admission_facts(h, table)?.iter().map(|f| registry.normalize(f)).collect();
        for (k, (admission_id, label)) in label_readmissions(h).into_iter().enumerate() {
            let first = (k + 1).saturating_sub(max_len);
            let kept = &rows[first..=k];
            let pad = max_len - kept.len();
            let mut steps = vec![vec![0.0; width]; pad];
            steps.extend(kept.iter().cloned());
            let mut mask = vec![false; pad];
            mask.extend(std::iter::repeat_n(true, kept.len()));
            out.push(LabeledSequence {
                patient_id: h.patient_id.clone(),
                index_admission_id: admission_id,
                label,
                steps,
                mask,
            });
        }
    }
    Ok(out)
}

/// Index-admission feature row (no history), as used by the tabular baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub patient_id: String,
    pub admission_id: String,
    pub label: bool,
    pub values: Vec<f64>,
}

/// One row per admission with imputed values; z-scored when `normalize`.
pub fn build_index_rows(
    histories: &[PatientHistory],
    registry: &FeatureRegistry,
    table: &CharlsonWeightTable,
    normalize: bool,
) -> Result<Vec<IndexRow>> {
    let mut out = Vec::new();
    for h in histories {
        let facts = admission_facts(h, table)?;
        for (f, (admission_id, label)) in facts.iter().zip(label_readmissions(h)) {
            out.push(IndexRow {
                patient_id: h.patient_id.clone(),
                admission_id,
                label,
                values: if normalize { registry.normalize(f) } else { registry.raw(f) },
            });
        }
    }
    Ok(out)
}

/// Debug dump of built sequences as a single JSON document.
pub fn dump_sequences<W: Write>(writer: W, registry: &FeatureRegistry, sequences: &[LabeledSequence]) -> Result<()> {
    #[derive(Serialize)]
    struct Dump<'a> {
        schema_version: u32,
        registry_hash: String,
        feature_names: Vec<&'a str>,
        sequences: &'a [LabeledSequence],
    }
    serde_json::to_writer(
        writer,
        &Dump {
            schema_version: TENSOR_DUMP_SCHEMA_VERSION,
            registry_hash: registry.layout_hash(),
            feature_names: registry.names(),
            sequences,
        },
    )?;
    Ok(())
}
