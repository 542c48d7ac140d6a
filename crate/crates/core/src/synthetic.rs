//! Reproducible synthetic Medicare-style cohorts with a planted
//! readmission-generating process.
//!
//! Each admission's readmission probability follows
//! `sigmoid(base_rate + Σ coef·feature + temporal_gain·T + noise)`, where the
//! features are the raw registry features of the admission and `T` flags an
//! increase in `admissions_6mo` relative to the previous admission. `T` only
//! exists in the ordering of admissions, so a model that sees a single index
//! admission cannot use it.
//!
//! Sampling defaults: geometric count of spontaneous admissions, log-normal
//! length of stay, Poisson medication and consultation counts, Bernoulli
//! flags, per-category comorbidity prevalence plus onset at each admission.
//! A readmission draws its gap uniformly from 1..=30 days after discharge;
//! any other follow-up admission starts 31 + Exp(mean `gap_mean_days`) days out.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use rand::Rng as _;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::cohort::{facts_at, AdmissionFacts, AdmissionRecord, CharlsonWeightTable, Feature, PatientHistory, Sex};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingParams {
    pub los_log_mean: f64,
    pub los_log_sd: f64,
    pub acute_prob: f64,
    /// P(arrived via the emergency department | acute).
    pub ed_given_acute: f64,
    pub surgery_prob: f64,
    pub medications_mean: f64,
    pub consultations_mean: f64,
    /// Probability that a medication or consultation count is left missing.
    pub missing_rate: f64,
    /// Per-category probability of a comorbidity present at the first admission.
    pub comorbidity_prevalence: f64,
    /// Per-category probability of onset at each later admission.
    pub comorbidity_onset: f64,
    pub female_prob: f64,
    pub age_min: u32,
    pub age_max: u32,
    pub first_admit_from: NaiveDate,
    pub first_admit_to: NaiveDate,
    pub gap_mean_days: f64,
    /// Hard cap on admissions per patient.
    pub max_admissions: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            los_log_mean: 1.3,
            los_log_sd: 0.7,
            acute_prob: 0.6,
            ed_given_acute: 0.7,
            surgery_prob: 0.25,
            medications_mean: 8.0,
            consultations_mean: 2.0,
            missing_rate: 0.0,
            comorbidity_prevalence: 0.06,
            comorbidity_onset: 0.02,
            female_prob: 0.55,
            age_min: 65,
            age_max: 95,
            first_admit_from: NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(),
            first_admit_to: NaiveDate::from_ymd_opt(2010, 12, 31).unwrap(),
            gap_mean_days: 120.0,
            max_admissions: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub seed: u64,
    /// Mean of the geometric count of spontaneous (non-readmission) admissions.
    pub mean_admissions: f64,
    /// Logit intercept of the planted process.
    pub base_rate: f64,
    /// Raw feature name -> planted logit coefficient.
    pub coefficients: BTreeMap<String, f64>,
    pub temporal_gain: f64,
    /// Standard deviation of per-admission logit noise.
    pub noise_scale: f64,
    pub sampling: SamplingParams,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_patients: 1000,
            seed: 42,
            mean_admissions: 2.5,
            base_rate: -2.5,
            coefficients: BTreeMap::new(),
            temporal_gain: 0.0,
            noise_scale: 0.0,
            sampling: SamplingParams::default(),
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sampling;
        let bad = |msg: String| Err(Error::validation(format!("cohort spec: {msg}")));
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1".into());
        }
        if !(self.mean_admissions >= 1.0) || !self.mean_admissions.is_finite() {
            return bad(format!("mean_admissions must be >= 1, got {}", self.mean_admissions));
        }
        if !(self.noise_scale >= 0.0) {
            return bad(format!("noise_scale must be >= 0, got {}", self.noise_scale));
        }
        let reals = [self.base_rate, self.temporal_gain, s.los_log_mean, s.gap_mean_days];
        if reals.iter().any(|v| !v.is_finite()) || self.coefficients.values().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        for (name, p) in [
            ("acute_prob", s.acute_prob),
            ("ed_given_acute", s.ed_given_acute),
            ("surgery_prob", s.surgery_prob),
            ("missing_rate", s.missing_rate),
            ("comorbidity_prevalence", s.comorbidity_prevalence),
            ("comorbidity_onset", s.comorbidity_onset),
            ("female_prob", s.female_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be a probability, got {p}"));
            }
        }
        if !(s.los_log_sd > 0.0) || !(s.gap_mean_days > 0.0) {
            return bad("los_log_sd and gap_mean_days must be positive".into());
        }
        if !(s.medications_mean > 0.0) || !(s.consultations_mean > 0.0) {
            return bad("poisson means must be positive".into());
        }
        if s.age_min < crate::cohort::MIN_AGE || s.age_max < s.age_min {
            return bad(format!("age range {}..={} invalid", s.age_min, s.age_max));
        }
        if s.first_admit_to < s.first_admit_from {
            return bad("first admission date range is empty".into());
        }
        if s.max_admissions == 0 {
            return bad("max_admissions must be at least 1".into());
        }
        self.planted()?;
        Ok(())
    }

    pub fn planted(&self) -> Result<PlantedProcess> {
        PlantedProcess::new(self.base_rate, &self.coefficients, self.temporal_gain)
    }
}

/// Noise-free part of the generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedProcess {
    pub base_rate: f64,
    pub coefficients: Vec<(Feature, f64)>,
    pub temporal_gain: f64,
}

impl PlantedProcess {
    pub fn new(base_rate: f64, coefficients: &BTreeMap<String, f64>, temporal_gain: f64) -> Result<Self> {
        let coefficients = coefficients
            .iter()
            .map(|(name, c)| {
                Feature::from_name(name).map(|f| (f, *c)).ok_or_else(|| Error::UnknownFeature {
                    name: name.clone(),
                    valid: Feature::catalog().iter().map(|f| f.name()).collect::<Vec<_>>().join(", "),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { base_rate, coefficients, temporal_gain })
    }

    /// Planted logit without noise. Missing raw values contribute 0.
    pub fn logit(&self, facts: &AdmissionFacts, temporal: bool) -> f64 {
        let linear: f64 = self.coefficients.iter().map(|(f, c)| c * f.extract(facts).unwrap_or(0.0)).sum();
        self.base_rate + linear + if temporal { self.temporal_gain } else { 0.0 }
    }

    pub fn probability(&self, facts: &AdmissionFacts, temporal: bool) -> f64 {
        sigmoid(self.logit(facts, temporal))
    }

    /// Noise-free readmission probability of every admission of a history.
    pub fn history_probabilities(&self, history: &PatientHistory, table: &CharlsonWeightTable) -> Result<Vec<f64>> {
        let facts = crate::cohort::admission_facts(history, table)?;
        let flags = temporal_flags(&facts);
        Ok(facts.iter().zip(flags).map(|(f, t)| self.probability(f, t)).collect())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The planted temporal term: admission `k` is flagged when its
/// `admissions_6mo` exceeds that of admission `k - 1`.
pub fn temporal_flags(facts: &[AdmissionFacts]) -> Vec<bool> {
    (0..facts.len())
        .map(|k| k > 0 && facts[k].admissions_6mo > facts[k - 1].admissions_6mo)
        .collect()
}

/// Generates the cohort. Patient `i` draws only from stream `i` of the spec
/// seed, so the output does not depend on generation order.
pub fn generate_cohort(spec: &CohortSpec, table: &CharlsonWeightTable) -> Result<Vec<PatientHistory>> {
    spec.validate()?;
    let planted = spec.planted()?;
    let categories: Vec<&str> = table.categories().map(|(c, _)| c).collect();
    (0..spec.n_patients)
        .map(|i| generate_patient(spec, &planted, table, &categories, i))
        .collect()
}

fn generate_patient(
    spec: &CohortSpec,
    planted: &PlantedProcess,
    table: &CharlsonWeightTable,
    categories: &[&str],
    index: usize,
) -> Result<PatientHistory> {
    let s = &spec.sampling;
    let mut rng = stream_rng(spec.seed, index as u64);
    let los = LogNormal::new(s.los_log_mean, s.los_log_sd).map_err(|e| Error::validation(e.to_string()))?;
    let meds = Poisson::new(s.medications_mean).map_err(|e| Error::validation(e.to_string()))?;
    let consults = Poisson::new(s.consultations_mean).map_err(|e| Error::validation(e.to_string()))?;
    let gap = Exp::new(1.0 / s.gap_mean_days).map_err(|e| Error::validation(e.to_string()))?;
    let noise = Normal::new(0.0, spec.noise_scale).map_err(|e| Error::validation(e.to_string()))?;
    let continue_prob = 1.0 - 1.0 / spec.mean_admissions;

    let patient_id = format!("P{index:07}");
    let sex = if rng.random::<f64>() < s.female_prob { Sex::Female } else { Sex::Male };
    let age = rng.random_range(s.age_min..=s.age_max);
    let span = (s.first_admit_to - s.first_admit_from).num_days();
    let mut admit = s.first_admit_from + Duration::days(rng.random_range(0..=span));
    let mut comorbidities: BTreeSet<String> = categories
        .iter()
        .filter(|_| rng.random::<f64>() < s.comorbidity_prevalence)
        .map(|c| c.to_string())
        .collect();

    let mut history = PatientHistory {
        patient_id: patient_id.clone(),
        age_at_index: age,
        sex,
        admissions: Vec::new(),
    };
    let mut prev_admissions_6mo = None;
    loop {
        let k = history.admissions.len();
        if k > 0 {
            for c in categories {
                if rng.random::<f64>() < s.comorbidity_onset {
                    comorbidities.insert(c.to_string());
                }
            }
        }
        let los_days = los.sample(&mut rng).floor().min(365.0) as i64;
        let acute = rng.random::<f64>() < s.acute_prob;
        let via_ed = acute && rng.random::<f64>() < s.ed_given_acute;
        let surgery = rng.random::<f64>() < s.surgery_prob;
        let count = |d: &Poisson<f64>, rng: &mut Rng| {
            let v = d.sample(rng) as u32;
            (rng.random::<f64>() >= s.missing_rate).then_some(v)
        };
        let num_medications = count(&meds, &mut rng);
        let num_consultations = count(&consults, &mut rng);
        let discharge = admit + Duration::days(los_days);
        history.admissions.push(AdmissionRecord {
            admission_id: format!("{patient_id}-A{k:03}"),
            patient_id: patient_id.clone(),
            admit_date: admit,
            discharge_date: discharge,
            acute_admission: acute,
            via_emergency_dept: via_ed,
            surgery,
            num_medications,
            num_consultations,
            comorbidity_categories: comorbidities.clone(),
        });

        let facts = facts_at(&history, k, table)?;
        let temporal = prev_admissions_6mo.is_some_and(|p| facts.admissions_6mo > p);
        prev_admissions_6mo = Some(facts.admissions_6mo);
        let logit = planted.logit(&facts, temporal) + noise.sample(&mut rng);
        let readmit = rng.random::<f64>() < sigmoid(logit);

        let next_gap = if readmit {
            rng.random_range(1..=30)
        } else if rng.random::<f64>() < continue_prob {
            31 + gap.sample(&mut rng).floor() as i64
        } else {
            break;
        };
        if history.admissions.len() >= s.max_admissions {
            break;
        }
        admit = discharge + Duration::days(next_gap);
    }
    Ok(history)
}
