//! Feature registry: the fixed, versioned column layout shared by the
//! baseline and the sequence model, plus training-split imputation and
//! z-score statistics.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::charlson::{compute_cci, CharlsonWeightTable};
use super::events::{count_window_events, LOOKBACK_DAYS};
use super::records::{PatientHistory, Season, Sex};
use crate::error::{Error, Result};

pub const REGISTRY_VERSION: u32 = 1;

/// Everything the features are derived from, for one admission in context.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionFacts {
    pub los_days: u32,
    pub acute_admission: bool,
    pub cci_score: u32,
    pub ed_visits_6mo: u32,
    pub admissions_6mo: u32,
    pub surgery: bool,
    pub num_medications: Option<u32>,
    pub num_consultations: Option<u32>,
    pub season: Season,
    pub sex: Sex,
    pub age: u32,
}

/// Derives [`AdmissionFacts`] for every admission of `history`, in order.
pub fn admission_facts(history: &PatientHistory, table: &CharlsonWeightTable) -> Result<Vec<AdmissionFacts>> {
    (0..history.admissions.len()).map(|k| facts_at(history, k, table)).collect()
}

/// [`AdmissionFacts`] of admission `k`, using only admissions before it.
pub fn facts_at(history: &PatientHistory, k: usize, table: &CharlsonWeightTable) -> Result<AdmissionFacts> {
    let adm = &history.admissions[k];
    Ok(AdmissionFacts {
        los_days: adm.los_days()?,
        acute_admission: adm.acute_admission,
        cci_score: compute_cci(adm.comorbidity_categories.iter().map(String::as_str), table)
            .map_err(|e| Error::validation(format!("admission {}: {e}", adm.admission_id)))?,
        ed_visits_6mo: count_window_events(history, adm.admit_date, LOOKBACK_DAYS, |a| a.via_emergency_dept)?,
        admissions_6mo: count_window_events(history, adm.admit_date, LOOKBACK_DAYS, |_| true)?,
        surgery: adm.surgery,
        num_medications: adm.num_medications,
        num_consultations: adm.num_consultations,
        season: adm.season(),
        sex: history.sex,
        age: history.age_at_index,
    })
}

/// Age buckets 65-74, 75-84, 85+.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgeBucket {
    From65To74,
    From75To84,
    From85,
}

impl AgeBucket {
    pub fn of(age: u32) -> Self {
        match age {
            0..=74 => AgeBucket::From65To74,
            75..=84 => AgeBucket::From75To84,
            _ => AgeBucket::From85,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feature {
    LosDays,
    AcuteAdmission,
    CciScore,
    EdVisits6mo,
    Admissions6mo,
    Surgery,
    NumMedications,
    NumConsultations,
    Season(Season),
    SexFemale,
    AgeYears,
    AgeBucket(AgeBucket),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Changes from admission to admission.
    Temporal,
    /// Per-patient; replicated onto every timestep.
    Static,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::LosDays => "los_days",
            Feature::AcuteAdmission => "acute_admission",
            Feature::CciScore => "cci_score",
            Feature::EdVisits6mo => "ed_visits_6mo",
            Feature::Admissions6mo => "admissions_6mo",
            Feature::Surgery => "surgery",
            Feature::NumMedications => "num_medications",
            Feature::NumConsultations => "num_consultations",
            Feature::Season(Season::Winter) => "season_winter",
            Feature::Season(Season::Spring) => "season_spring",
            Feature::Season(Season::Summer) => "season_summer",
            Feature::Season(Season::Fall) => "season_fall",
            Feature::SexFemale => "sex_female",
            Feature::AgeYears => "age",
            Feature::AgeBucket(AgeBucket::From65To74) => "age_65_74",
            Feature::AgeBucket(AgeBucket::From75To84) => "age_75_84",
            Feature::AgeBucket(AgeBucket::From85) => "age_85_plus",
        }
    }

    /// Name used by include/exclude lists: one-hot blocks share a group.
    pub fn group(self) -> &'static str {
        match self {
            Feature::Season(_) => "season",
            Feature::AgeYears | Feature::AgeBucket(_) => "age",
            Feature::SexFemale => "sex",
            other => other.name(),
        }
    }

    pub fn kind(self) -> FeatureKind {
        match self {
            Feature::SexFemale | Feature::AgeYears | Feature::AgeBucket(_) => FeatureKind::Static,
            _ => FeatureKind::Temporal,
        }
    }

    /// Raw (unnormalized) value; `None` when the source field is missing.
    pub fn extract(self, f: &AdmissionFacts) -> Option<f64> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        Some(match self {
            Feature::LosDays => f.los_days as f64,
            Feature::AcuteAdmission => flag(f.acute_admission),
            Feature::CciScore => f.cci_score as f64,
            Feature::EdVisits6mo => f.ed_visits_6mo as f64,
            Feature::Admissions6mo => f.admissions_6mo as f64,
            Feature::Surgery => flag(f.surgery),
            Feature::NumMedications => f.num_medications? as f64,
            Feature::NumConsultations => f.num_consultations? as f64,
            Feature::Season(s) => flag(f.season == s),
            Feature::SexFemale => flag(f.sex == Sex::Female),
            Feature::AgeYears => f.age as f64,
            Feature::AgeBucket(b) => flag(AgeBucket::of(f.age) == b),
        })
    }

    /// Every feature the registry knows about, in canonical order.
    pub fn catalog() -> Vec<Feature> {
        let mut all = vec![
            Feature::LosDays,
            Feature::AcuteAdmission,
            Feature::CciScore,
            Feature::EdVisits6mo,
            Feature::Admissions6mo,
            Feature::Surgery,
            Feature::NumMedications,
            Feature::NumConsultations,
        ];
        all.extend(Season::ALL.map(Feature::Season));
        all.push(Feature::SexFemale);
        all.push(Feature::AgeYears);
        all.extend([AgeBucket::From65To74, AgeBucket::From75To84, AgeBucket::From85].map(Feature::AgeBucket));
        all
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Self::catalog().into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AgeMode {
    #[default]
    Raw,
    Bucketed,
}

/// Column selection: raw vs bucketed age, plus feature (or group) exclusions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub age_mode: AgeMode,
    pub exclude: Vec<String>,
}

impl FeatureOptions {
    /// Names accepted in `exclude`: group names plus individual column names.
    pub fn valid_names() -> Vec<&'static str> {
        let mut names: Vec<&'static str> = Vec::new();
        for f in Feature::catalog() {
            for n in [f.group(), f.name()] {
                if !names.contains(&n) {
                    names.push(n);
                }
            }
        }
        names
    }

    /// Resolves the ordered feature list these options select.
    pub fn resolve(&self) -> Result<Vec<Feature>> {
        let valid = Self::valid_names();
        for name in &self.exclude {
            if !valid.contains(&name.as_str()) {
                return Err(Error::UnknownFeature {
                    name: name.clone(),
                    valid: valid.join(", "),
                });
            }
        }
        let excluded = |f: Feature| self.exclude.iter().any(|e| e == f.group() || e == f.name());
        let features: Vec<Feature> = Feature::catalog()
            .into_iter()
            .filter(|f| match (self.age_mode, f) {
                (AgeMode::Raw, Feature::AgeBucket(_)) => false,
                (AgeMode::Bucketed, Feature::AgeYears) => false,
                _ => true,
            })
            .filter(|f| !excluded(*f))
            .collect();
        if features.is_empty() {
            return Err(Error::Config("feature options exclude every feature".into()));
        }
        Ok(features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    /// Training-split median of the non-missing values; used for imputation.
    pub median: f64,
    pub mean: f64,
    pub stddev: f64,
}

/// Ordered feature layout with training-split statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRegistry {
    pub version: u32,
    pub options: FeatureOptions,
    pub features: Vec<FeatureDescriptor>,
    #[serde(skip)]
    resolved: Vec<Feature>,
}

impl FeatureRegistry {
    /// Fits imputation medians and z-score statistics over every admission
    /// of the (training) histories.
    pub fn fit(
        histories: &[PatientHistory],
        options: &FeatureOptions,
        table: &CharlsonWeightTable,
    ) -> Result<Self> {
        let resolved = options.resolve()?;
        let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); resolved.len()];
        for h in histories {
            for facts in admission_facts(h, table)? {
                for (col, f) in columns.iter_mut().zip(&resolved) {
                    col.push(f.extract(&facts));
                }
            }
        }
        if columns.first().is_none_or(|c| c.is_empty()) {
            return Err(Error::validation("cannot fit feature registry on zero admissions"));
        }
        let features = resolved
            .iter()
            .zip(&columns)
            .map(|(f, col)| {
                let median = median(col.iter().flatten().copied());
                let n = col.len() as f64;
                let values = || col.iter().map(|v| v.unwrap_or(median));
                let mean = values().sum::<f64>() / n;
                let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let stddev = var.sqrt();
                if stddev == 0.0 {
                    log::warn!("feature `{}` is constant on the training split; it will be emitted as 0", f.name());
                }
                FeatureDescriptor {
                    name: f.name().to_string(),
                    kind: f.kind(),
                    median,
                    mean,
                    stddev,
                }
            })
            .collect();
        Ok(Self {
            version: REGISTRY_VERSION,
            options: options.clone(),
            features,
            resolved,
        })
    }

    /// Rebuilds the resolved feature list after deserialization.
    pub fn restore(mut self) -> Result<Self> {
        let resolved = self
            .features
            .iter()
            .map(|d| {
                Feature::from_name(&d.name).ok_or_else(|| Error::UnknownFeature {
                    name: d.name.clone(),
                    valid: FeatureOptions::valid_names().join(", "),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if resolved != self.options.resolve()? {
            return Err(Error::Config("registry columns disagree with its feature options".into()));
        }
        self.resolved = resolved;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|d| d.name == name)
    }

    /// Hash of the column layout (version, names, kinds); statistics are excluded.
    pub fn layout_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.version.to_le_bytes());
        for d in &self.features {
            hasher.update(d.name.as_bytes());
            hasher.update([0u8, d.kind as u8]);
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// Imputed raw values, in registry order.
    pub fn raw(&self, facts: &AdmissionFacts) -> Vec<f64> {
        self.resolved
            .iter()
            .zip(&self.features)
            .map(|(f, d)| f.extract(facts).unwrap_or(d.median))
            .collect()
    }

    /// Imputed, z-scored values. Constant columns encode as 0.
    pub fn normalize(&self, facts: &AdmissionFacts) -> Vec<f64> {
        self.raw(facts)
            .into_iter()
            .zip(&self.features)
            .map(|(v, d)| if d.stddev > 0.0 { (v - d.mean) / d.stddev } else { 0.0 })
            .collect()
    }
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
