//! LACE baseline: the index's point table, a logistic model over the LACE
//! components (optionally the full feature registry), and the conversion of
//! coefficients to integer point scores.

mod logistic;
mod points;
mod subscores;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use logistic::{fit_logistic, FitMetadata, LogisticConfig, LogisticModel};
pub use points::{point_scores, to_point_score, PointScoreTable};
pub use subscores::{lace_subscores, LaceComponents, LaceScore};

use crate::cohort::{build_index_rows, CharlsonWeightTable, FeatureOptions, FeatureRegistry, IndexRow, PatientHistory};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;
pub const MODEL_KIND: &str = "lace-lr";

/// Registry columns used by the default baseline.
pub const LACE_FEATURES: [&str; 4] = ["los_days", "acute_admission", "cci_score", "ed_visits_6mo"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineOptions {
    /// Use every registry feature instead of the four LACE components.
    pub extended: bool,
    pub features: FeatureOptions,
    pub logistic: LogisticConfig,
}

/// Fitted baseline plus the registry it reads its inputs through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub schema_version: u32,
    pub kind: String,
    pub registry_hash: String,
    pub feature_names: Vec<String>,
    pub model: LogisticModel,
    pub registry: FeatureRegistry,
}

impl BaselineModel {
    pub fn fit(histories: &[PatientHistory], table: &CharlsonWeightTable, options: &BaselineOptions) -> Result<Self> {
        let registry = FeatureRegistry::fit(histories, &options.features, table)?;
        let feature_names: Vec<String> = if options.extended {
            registry.names().into_iter().map(String::from).collect()
        } else {
            LACE_FEATURES
                .iter()
                .filter(|n| registry.position(n).is_some())
                .map(|n| n.to_string())
                .collect()
        };
        if feature_names.is_empty() {
            return Err(Error::Config("baseline has no features left after exclusions".into()));
        }
        let mut this = Self {
            schema_version: MODEL_SCHEMA_VERSION,
            kind: MODEL_KIND.into(),
            registry_hash: registry.layout_hash(),
            feature_names,
            model: LogisticModel {
                intercept: 0.0,
                coefficients: Vec::new(),
                metadata: FitMetadata { iterations: 0, final_deviance: 0.0, ridge: options.logistic.ridge },
            },
            registry,
        };
        let rows = this.design(histories, table)?;
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
        let y: Vec<bool> = rows.iter().map(|r| r.label).collect();
        this.model = fit_logistic(&x, &y, &options.logistic)?;
        Ok(this)
    }

    fn columns(&self) -> Result<Vec<usize>> {
        self.feature_names
            .iter()
            .map(|n| {
                self.registry.position(n).ok_or_else(|| Error::UnknownFeature {
                    name: n.clone(),
                    valid: self.registry.names().join(", "),
                })
            })
            .collect()
    }

    /// Raw (imputed, unnormalized) model inputs for every admission.
    pub fn design(&self, histories: &[PatientHistory], table: &CharlsonWeightTable) -> Result<Vec<IndexRow>> {
        let cols = self.columns()?;
        let mut rows = build_index_rows(histories, &self.registry, table, false)?;
        for r in &mut rows {
            r.values = cols.iter().map(|&c| r.values[c]).collect();
        }
        Ok(rows)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.model.predict_proba(x)
    }

    pub fn point_scores(&self) -> Result<PointScoreTable> {
        to_point_score(&self.model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut m: Self = serde_json::from_str(s)?;
        if m.schema_version != MODEL_SCHEMA_VERSION || m.kind != MODEL_KIND {
            return Err(Error::Checkpoint(format!(
                "expected {MODEL_KIND} schema {MODEL_SCHEMA_VERSION}, found {} schema {}",
                m.kind, m.schema_version
            )));
        }
        m.registry = m.registry.restore()?;
        if m.registry.layout_hash() != m.registry_hash {
            return Err(Error::Checkpoint("registry hash mismatch".into()));
        }
        if m.model.coefficients.len() != m.feature_names.len() {
            return Err(Error::Checkpoint("coefficient arity differs from feature list".into()));
        }
        m.columns()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
