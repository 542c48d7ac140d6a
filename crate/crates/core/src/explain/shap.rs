//! Shapley attributions with background-sampled interventions.
//!
//! The coalition value is `v(S) = mean_b f(x_S, b_{S̄})`: features in `S`
//! take the instance's column, the rest take background row `b`'s column,
//! on the instance's own timeline (mask). The base value is `v(∅)`, which
//! for tabular inputs is the mean model output over the background set.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_layout, Instance, Scorer};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Exact enumeration is limited to this many features (2^12 coalitions).
pub const MAX_EXACT_FEATURES: usize = 12;
pub const FORCE_PLOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ShapMode {
    /// All coalitions, averaged over the full background set.
    Exact,
    /// Random feature orderings, each paired with one random background row.
    MonteCarlo { n_samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMetadata {
    pub mode: ShapMode,
    pub seed: u64,
    pub background_size: usize,
    /// `|base + Σφ - f(x)|`.
    pub efficiency_residual: f64,
    /// Monte-Carlo standard error of the residual; `None` in exact mode.
    pub standard_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub instance_id: String,
    pub base_value: f64,
    pub output: f64,
    pub feature_names: Vec<String>,
    /// Instance value per feature at its last unmasked step.
    pub feature_values: Vec<f64>,
    pub attributions: Vec<f64>,
    pub metadata: ShapMetadata,
}

fn hybrid(x: &Instance, b: &Instance, from_x: &[bool], out: &mut [Vec<f64>]) {
    for ((row, xr), br) in out.iter_mut().zip(&x.steps).zip(&b.steps) {
        for (k, v) in row.iter_mut().enumerate() {
            *v = if from_x[k] { xr[k] } else { br[k] };
        }
    }
}

pub fn shap_values<S: Scorer + ?Sized>(
    scorer: &S,
    instance: &Instance,
    background: &[Instance],
    names: &[String],
    mode: ShapMode,
    seed: u64,
) -> Result<ShapExplanation> {
    if background.is_empty() {
        return Err(Error::validation("shap: background set is empty"));
    }
    let d = names.len();
    if instance.width() != d {
        return Err(Error::Shape { context: "shap feature names".into(), expected: instance.width(), actual: d });
    }
    let all: Vec<Instance> = std::iter::once(instance.clone()).chain(background.iter().cloned()).collect();
    check_layout(&all, d, "shap")?;
    let output = scorer.score(&instance.steps, &instance.mask)?;
    let mut buf = instance.steps.clone();
    let mut eval = |b: &Instance, from_x: &[bool]| -> Result<f64> {
        hybrid(instance, b, from_x, &mut buf);
        scorer.score(&buf, &instance.mask)
    };

    let none = vec![false; d];
    let mut base_value = 0.0;
    for b in background {
        base_value += eval(b, &none)?;
    }
    base_value /= background.len() as f64;

    let (attributions, standard_error) = match mode {
        ShapMode::Exact => {
            if d > MAX_EXACT_FEATURES {
                return Err(Error::validation(format!(
                    "exact shap supports at most {MAX_EXACT_FEATURES} features, got {d}"
                )));
            }
            let n_sets = 1usize << d;
            let mut value = vec![0.0; n_sets];
            let mut from_x = vec![false; d];
            for (set, v) in value.iter_mut().enumerate() {
                for (k, flag) in from_x.iter_mut().enumerate() {
                    *flag = set >> k & 1 == 1;
                }
                let mut acc = 0.0;
                for b in background {
                    acc += eval(b, &from_x)?;
                }
                *v = acc / background.len() as f64;
            }
            value[0] = base_value;
            // weight(s) = s! (d - s - 1)! / d!
            let mut weight = vec![0.0; d];
            for (s, w) in weight.iter_mut().enumerate() {
                *w = 1.0 / (d as f64 * binomial(d - 1, s));
            }
            let mut phi = vec![0.0; d];
            for (k, p) in phi.iter_mut().enumerate() {
                let bit = 1usize << k;
                for set in (0..n_sets).filter(|s| s & bit == 0) {
                    *p += weight[set.count_ones() as usize] * (value[set | bit] - value[set]);
                }
            }
            (phi, None)
        }
        ShapMode::MonteCarlo { n_samples } => {
            if n_samples == 0 {
                return Err(Error::validation("shap: n_samples must be at least 1"));
            }
            let mut rng = stream_rng(seed, 0);
            let mut order: Vec<usize> = (0..d).collect();
            let mut phi = vec![0.0; d];
            let mut empties = Vec::with_capacity(n_samples.div_ceil(2));
            let mut from_x = vec![false; d];
            let mut rows: Vec<usize> = (0..background.len()).collect();
            let mut b = &background[0];
            for i in 0..n_samples {
                // Antithetic pairs: each permutation is followed by its reverse
                // on the same background row. Rows are drawn without
                // replacement, one reshuffled pass at a time.
                if i % 2 == 0 {
                    let pair = i / 2;
                    if pair % rows.len() == 0 {
                        rows.shuffle(&mut rng);
                    }
                    order.shuffle(&mut rng);
                    b = &background[rows[pair % rows.len()]];
                } else {
                    order.reverse();
                }
                from_x.iter_mut().for_each(|f| *f = false);
                let mut prev = eval(b, &from_x)?;
                if i % 2 == 0 {
                    empties.push(prev);
                }
                for &k in &order {
                    from_x[k] = true;
                    let cur = eval(b, &from_x)?;
                    phi[k] += cur - prev;
                    prev = cur;
                }
            }
            phi.iter_mut().for_each(|p| *p /= n_samples as f64);
            // The residual is the gap between the drawn and full background
            // means. The SE treats draws as independent, which overstates it
            // under stratification.
            let n = empties.len() as f64;
            let mean = empties.iter().sum::<f64>() / n;
            let se = if empties.len() > 1 {
                (empties.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                0.0
            };
            (phi, Some(se))
        }
    };
    let efficiency_residual = (base_value + attributions.iter().sum::<f64>() - output).abs();
    Ok(ShapExplanation {
        instance_id: instance.id.clone(),
        base_value,
        output,
        feature_names: names.to_vec(),
        feature_values: (0..d).map(|k| instance.last_value(k).unwrap_or(0.0)).collect(),
        attributions,
        metadata: ShapMetadata { mode, seed, background_size: background.len(), efficiency_residual, standard_error },
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcePlotFeature {
    pub name: String,
    pub value: f64,
    pub attribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcePlotEntry {
    pub instance_id: String,
    pub base_value: f64,
    pub output: f64,
    /// Sorted by |attribution|, largest first.
    pub features: Vec<ForcePlotFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcePlotDocument {
    pub schema_version: u32,
    pub explanations: Vec<ForcePlotEntry>,
}

pub fn export_force_plot_data(explanations: &[ShapExplanation]) -> ForcePlotDocument {
    let explanations = explanations
        .iter()
        .map(|e| {
            let mut features: Vec<ForcePlotFeature> = e
                .feature_names
                .iter()
                .zip(&e.feature_values)
                .zip(&e.attributions)
                .map(|((name, value), attribution)| ForcePlotFeature { name: name.clone(), value: *value, attribution: *attribution })
                .collect();
            features.sort_by(|a, b| b.attribution.abs().total_cmp(&a.attribution.abs()));
            ForcePlotEntry { instance_id: e.instance_id.clone(), base_value: e.base_value, output: e.output, features }
        })
        .collect();
    ForcePlotDocument { schema_version: FORCE_PLOT_SCHEMA_VERSION, explanations }
}

pub fn parse_force_plot(s: &str) -> Result<ForcePlotDocument> {
    let doc: ForcePlotDocument = serde_json::from_str(s)?;
    if doc.schema_version != FORCE_PLOT_SCHEMA_VERSION {
        return Err(Error::validation(format!("unsupported force-plot schema {}", doc.schema_version)));
    }
    Ok(doc)
}
