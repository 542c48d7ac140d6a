use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_layout, Instance, Scorer};
use crate::error::{Error, Result};
use crate::eval::auc_roc;
use crate::rng::{derive_seed, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationRow {
    pub feature: String,
    pub baseline_auc: f64,
    pub mean_permuted_auc: f64,
    /// `baseline_auc - mean_permuted_auc`; may be negative.
    pub importance: f64,
    /// Sample standard deviation of the permuted AUCs (0 for one shuffle).
    pub stddev: f64,
    pub n_repeats: usize,
    /// The column held a single value, so no shuffle was run.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub baseline_auc: f64,
    pub seed: u64,
    pub rows: Vec<PermutationRow>,
}

impl PermutationResult {
    /// Rows sorted by importance, largest first (stable on ties).
    pub fn ranking(&self) -> Vec<&PermutationRow> {
        let mut rows: Vec<&PermutationRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.importance.total_cmp(&a.importance));
        rows
    }
}

fn score_all<S: Scorer + ?Sized>(scorer: &S, instances: &[Instance]) -> Result<Vec<f64>> {
    instances.iter().map(|i| scorer.score(&i.steps, &i.mask)).collect()
}

/// Importance of one feature column: the mean AUC drop over `n_repeats`
/// shuffles. Each shuffle reassigns the whole column (all aligned timesteps)
/// of instance `perm[j]` to instance `j`, leaving other columns in place.
pub fn permutation_importance<S: Scorer + ?Sized>(
    scorer: &S,
    instances: &[Instance],
    feature: usize,
    feature_name: &str,
    n_repeats: usize,
    seed: u64,
) -> Result<PermutationRow> {
    let labels: Vec<bool> = instances.iter().map(|i| i.label).collect();
    let baseline_auc = auc_roc(&score_all(scorer, instances)?, &labels)?;
    permute_one(scorer, instances, &labels, baseline_auc, feature, feature_name, n_repeats, seed)
}

#[allow(clippy::too_many_arguments)]
fn permute_one<S: Scorer + ?Sized>(
    scorer: &S,
    instances: &[Instance],
    labels: &[bool],
    baseline_auc: f64,
    feature: usize,
    feature_name: &str,
    n_repeats: usize,
    seed: u64,
) -> Result<PermutationRow> {
    if n_repeats == 0 {
        return Err(Error::validation("permutation importance needs n_repeats >= 1"));
    }
    let width = instances.first().map_or(0, Instance::width);
    if feature >= width {
        return Err(Error::Shape { context: format!("feature index for `{feature_name}`"), expected: width, actual: feature });
    }
    check_layout(instances, width, "permutation importance")?;
    let first = instances[0].steps[0][feature];
    let constant = instances.iter().all(|i| i.steps.iter().all(|r| r[feature] == first));
    if constant {
        log::warn!("feature `{feature_name}` is constant on the evaluation set; importance is 0");
        return Ok(PermutationRow {
            feature: feature_name.to_string(),
            baseline_auc,
            mean_permuted_auc: baseline_auc,
            importance: 0.0,
            stddev: 0.0,
            n_repeats,
            constant: true,
        });
    }
    let mut rng = stream_rng(seed, 0);
    let mut perm: Vec<usize> = (0..instances.len()).collect();
    let mut shuffled = instances.to_vec();
    let mut aucs = Vec::with_capacity(n_repeats);
    for _ in 0..n_repeats {
        perm.shuffle(&mut rng);
        for (j, &src) in perm.iter().enumerate() {
            for (t, row) in shuffled[j].steps.iter_mut().enumerate() {
                row[feature] = instances[src].steps[t][feature];
            }
        }
        aucs.push(auc_roc(&score_all(scorer, &shuffled)?, labels)?);
    }
    let n = aucs.len() as f64;
    let mean = aucs.iter().sum::<f64>() / n;
    let stddev = if aucs.len() > 1 {
        (aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(PermutationRow {
        feature: feature_name.to_string(),
        baseline_auc,
        mean_permuted_auc: mean,
        importance: baseline_auc - mean,
        stddev,
        n_repeats,
        constant: false,
    })
}

/// Permutation importance of every column. Feature `k` shuffles with its own
/// seed derived from `(seed, k)`, so results do not depend on evaluation order.
pub fn permutation_importance_all<S: Scorer + ?Sized>(
    scorer: &S,
    instances: &[Instance],
    names: &[String],
    n_repeats: usize,
    seed: u64,
) -> Result<PermutationResult> {
    let labels: Vec<bool> = instances.iter().map(|i| i.label).collect();
    let baseline_auc = auc_roc(&score_all(scorer, instances)?, &labels)?;
    let rows = names
        .iter()
        .enumerate()
        .map(|(k, name)| permute_one(scorer, instances, &labels, baseline_auc, k, name, n_repeats, derive_seed(seed, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PermutationResult { baseline_auc, seed, rows })
}

/// Ranking table: one row per feature, most important first.
pub fn write_ranking_csv<W: Write>(writer: W, result: &PermutationResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["rank", "feature", "importance", "stddev", "baseline_auc", "mean_permuted_auc"]).map_err(io)?;
    for (rank, r) in result.ranking().into_iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            r.feature.clone(),
            r.importance.to_string(),
            r.stddev.to_string(),
            r.baseline_auc.to_string(),
            r.mean_permuted_auc.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
