use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{auc_roc, top_decile_metrics};
use crate::cohort::{label_readmissions, PatientHistory};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Normal-approximation multiplier for a two-sided 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPlan {
    pub seed: u64,
    pub n_repeats: usize,
    pub train_fraction: f64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self { seed: 0, n_repeats: 20, train_fraction: 0.7 }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_repeats == 0 {
            return Err(Error::Config("n_repeats must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction must be in (0, 1), got {}", self.train_fraction)));
        }
        Ok(())
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        derive_seed(self.seed, repeat as u64)
    }

    /// Patient-level split for one repeat: `(train, test)` indices into `histories`.
    pub fn split(&self, histories: &[PatientHistory], repeat: usize) -> (Vec<usize>, Vec<usize>) {
        let mut order: Vec<usize> = (0..histories.len()).collect();
        order.sort_by(|&a, &b| histories[a].patient_id.cmp(&histories[b].patient_id));
        order.shuffle(&mut stream_rng(self.repeat_seed(repeat), 0));
        let n_train = ((histories.len() as f64 * self.train_fraction).round() as usize).clamp(1, histories.len() - 1);
        let test = order.split_off(n_train);
        (order, test)
    }
}

/// One scored test instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub id: String,
    pub score: f64,
    pub label: bool,
}

/// A model-fitting procedure: fit on `train`, score every index admission of `test`.
pub trait Trainer {
    fn name(&self) -> String;
    fn fit_and_score(&self, train: &[PatientHistory], test: &[PatientHistory], seed: u64) -> Result<Vec<ScoredInstance>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatMetrics {
    pub repeat: usize,
    pub seed: u64,
    pub auc: f64,
    pub precision_top_decile: f64,
    pub recall_top_decile: f64,
    pub train_patients: usize,
    pub test_patients: usize,
    pub test_instances: usize,
}

/// Mean with a normal-approximation 95% interval across repeats.
/// Interval fields are `None` for a single repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub stddev: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self { mean, stddev: None, ci_half_width: None, ci_low: None, ci_high: None };
        }
        let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let hw = Z_95 * sd / n.sqrt();
        Self { mean, stddev: Some(sd), ci_half_width: Some(hw), ci_low: Some(mean - hw), ci_high: Some(mean + hw) }
    }

    /// Whether the two intervals share any point. Without intervals, false.
    pub fn overlaps(&self, other: &Aggregate) -> bool {
        match (self.ci_low, self.ci_high, other.ci_low, other.ci_high) {
            (Some(a0), Some(a1), Some(b0), Some(b1)) => a0 <= b1 && b0 <= a1,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub auc: Aggregate,
    pub precision_top_decile: Aggregate,
    pub recall_top_decile: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub model: String,
    pub plan: SplitPlan,
    pub repeats: Vec<RepeatMetrics>,
    pub aggregates: Aggregates,
}

impl EvaluationReport {
    pub fn from_repeats(model: String, plan: SplitPlan, repeats: Vec<RepeatMetrics>) -> Self {
        let col = |f: fn(&RepeatMetrics) -> f64| Aggregate::of(&repeats.iter().map(f).collect::<Vec<_>>());
        let aggregates = Aggregates {
            auc: col(|r| r.auc),
            precision_top_decile: col(|r| r.precision_top_decile),
            recall_top_decile: col(|r| r.recall_top_decile),
        };
        Self { schema_version: REPORT_SCHEMA_VERSION, model, plan, repeats, aggregates }
    }

    /// Flat per-repeat CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "repeat", "seed", "auc", "precision_top_decile", "recall_top_decile", "test_instances"])
            .map_err(csv_err)?;
        for r in &self.repeats {
            w.write_record([
                self.model.clone(),
                r.repeat.to_string(),
                r.seed.to_string(),
                r.auc.to_string(),
                r.precision_top_decile.to_string(),
                r.recall_top_decile.to_string(),
                r.test_instances.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Side-by-side per-split AUCs: one row per repeat, one column per model.
pub fn write_comparison_csv<W: Write>(writer: W, reports: &[EvaluationReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["repeat".to_string(), "seed".to_string()];
    header.extend(reports.iter().map(|r| format!("auc_{}", r.model)));
    w.write_record(&header).map_err(csv_err)?;
    let n = reports.first().map_or(0, |r| r.repeats.len());
    if reports.iter().any(|r| r.repeats.len() != n) {
        return Err(Error::validation("comparison needs reports with the same repeats"));
    }
    for i in 0..n {
        let mut row = vec![reports[0].repeats[i].repeat.to_string(), reports[0].repeats[i].seed.to_string()];
        row.extend(reports.iter().map(|r| r.repeats[i].auc.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn check_classes(histories: &[PatientHistory]) -> Result<()> {
    let mut with_pos = 0;
    let mut with_neg = 0;
    for h in histories {
        let labels = label_readmissions(h);
        with_pos += usize::from(labels.iter().any(|(_, l)| *l));
        with_neg += usize::from(labels.iter().any(|(_, l)| !*l));
    }
    if with_pos < 2 || with_neg < 2 {
        return Err(Error::DegenerateLabels(format!(
            "need at least 2 patients per class; {with_pos} with a readmission, {with_neg} with a non-readmission"
        )));
    }
    Ok(())
}

/// Repeated patient-level train/test evaluation of one trainer.
///
/// Each repeat fits the trainer on its own training side (feature statistics
/// included) and scores the held-out side. Repeats run in index order, so the
/// report is deterministic for a given plan.
pub fn run_repeated_evaluation<T: Trainer + ?Sized>(
    histories: &[PatientHistory],
    trainer: &T,
    plan: &SplitPlan,
) -> Result<EvaluationReport> {
    plan.validate()?;
    check_classes(histories)?;
    let mut repeats = Vec::with_capacity(plan.n_repeats);
    for repeat in 0..plan.n_repeats {
        let seed = plan.repeat_seed(repeat);
        let wrap = |e: Error| Error::Repeat { repeat, seed, source: Box::new(e) };
        let (train_idx, test_idx) = plan.split(histories, repeat);
        let train: Vec<PatientHistory> = train_idx.iter().map(|&i| histories[i].clone()).collect();
        let test: Vec<PatientHistory> = test_idx.iter().map(|&i| histories[i].clone()).collect();
        debug_assert!(disjoint(&train, &test));
        let scored = trainer.fit_and_score(&train, &test, seed).map_err(wrap)?;
        let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
        let labels: Vec<bool> = scored.iter().map(|s| s.label).collect();
        let ids: Vec<&str> = scored.iter().map(|s| s.id.as_str()).collect();
        let auc = auc_roc(&scores, &labels).map_err(wrap)?;
        let top = top_decile_metrics(&scores, &labels, &ids).map_err(wrap)?;
        log::info!("{} repeat {repeat}: auc {auc:.4}", trainer.name());
        repeats.push(RepeatMetrics {
            repeat,
            seed,
            auc,
            precision_top_decile: top.precision,
            recall_top_decile: top.recall,
            train_patients: train.len(),
            test_patients: test.len(),
            test_instances: scored.len(),
        });
    }
    Ok(EvaluationReport::from_repeats(trainer.name(), *plan, repeats))
}

/// True when no patient id appears on both sides.
pub fn disjoint(train: &[PatientHistory], test: &[PatientHistory]) -> bool {
    let ids: BTreeSet<&str> = train.iter().map(|h| h.patient_id.as_str()).collect();
    test.iter().all(|h| !ids.contains(h.patient_id.as_str()))
}
