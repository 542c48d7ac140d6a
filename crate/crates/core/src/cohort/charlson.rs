use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../../data/charlson_weights.toml");
const ALLOWED_WEIGHTS: [u32; 4] = [1, 2, 3, 6];

/// Charlson category -> integer weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharlsonWeightTable {
    weights: BTreeMap<String, u32>,
}

impl CharlsonWeightTable {
    pub fn new(weights: BTreeMap<String, u32>) -> Result<Self> {
        for (cat, w) in &weights {
            if !ALLOWED_WEIGHTS.contains(w) {
                return Err(Error::Config(format!(
                    "charlson category `{cat}` has weight {w}; allowed weights are 1, 2, 3, 6"
                )));
            }
        }
        Ok(Self { weights })
    }

    /// The table shipped in `data/charlson_weights.toml`.
    pub fn shipped() -> Self {
        Self::from_toml_str(DEFAULT_TABLE).expect("shipped charlson table is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            weights: BTreeMap<String, u32>,
        }
        let file: File = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Self::new(file.weights)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn weight(&self, category: &str) -> Option<u32> {
        self.weights.get(category).copied()
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, u32)> {
        self.weights.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub(crate) fn check_categories(&self, categories: &BTreeSet<String>, admission_id: &str) -> Result<()> {
        if let Some(bad) = categories.iter().find(|c| !self.weights.contains_key(*c)) {
            return Err(Error::validation(format!(
                "admission {admission_id}: unknown charlson category `{bad}`"
            )));
        }
        Ok(())
    }
}

/// Charlson comorbidity index: sum of weights over distinct categories.
pub fn compute_cci<'a, I>(categories: I, table: &CharlsonWeightTable) -> Result<u32>
where
    I: IntoIterator<Item = &'a str>,
{
    let distinct: BTreeSet<&str> = categories.into_iter().collect();
    let mut total = 0;
    for cat in distinct {
        total += table
            .weight(cat)
            .ok_or_else(|| Error::validation(format!("unknown charlson category `{cat}`")))?;
    }
    Ok(total)
}
