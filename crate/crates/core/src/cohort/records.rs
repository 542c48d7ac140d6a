use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::charlson::CharlsonWeightTable;
use crate::error::{Error, Result};

/// Minimum age of the Medicare senior population modelled here.
pub const MIN_AGE: u32 = 65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

/// Meteorological seasons: Dec-Feb winter, Mar-May spring, Jun-Aug summer, Sep-Nov fall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Fall];

    pub fn from_date(date: NaiveDate) -> Self {
        match date.month() {
            12 | 1 | 2 => Season::Winter,
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            _ => Season::Fall,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub admission_id: String,
    pub patient_id: String,
    pub admit_date: NaiveDate,
    pub discharge_date: NaiveDate,
    /// Emergent (true) vs. elective admission.
    pub acute_admission: bool,
    pub via_emergency_dept: bool,
    pub surgery: bool,
    /// `None` marks a missing value; imputed from the training median.
    #[serde(default)]
    pub num_medications: Option<u32>,
    #[serde(default)]
    pub num_consultations: Option<u32>,
    #[serde(default)]
    pub comorbidity_categories: BTreeSet<String>,
}

impl AdmissionRecord {
    pub fn season(&self) -> Season {
        Season::from_date(self.admit_date)
    }

    pub fn los_days(&self) -> Result<u32> {
        compute_los(self.admit_date, self.discharge_date, &self.admission_id)
    }
}

/// Whole days between admission and discharge. Same-day discharge is 0.
pub fn compute_los(admit: NaiveDate, discharge: NaiveDate, admission_id: &str) -> Result<u32> {
    let days = (discharge - admit).num_days();
    if days < 0 {
        return Err(Error::validation(format!(
            "admission {admission_id}: discharge {discharge} precedes admission {admit}"
        )));
    }
    Ok(days as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientHistory {
    pub patient_id: String,
    pub age_at_index: u32,
    pub sex: Sex,
    pub admissions: Vec<AdmissionRecord>,
}

impl PatientHistory {
    /// Checks the record invariants. When `weights` is given, comorbidity
    /// categories must all be registered in it.
    pub fn validate(&self, weights: Option<&CharlsonWeightTable>) -> Result<()> {
        if self.age_at_index < MIN_AGE {
            return Err(Error::validation(format!(
                "patient {}: age {} below {MIN_AGE}",
                self.patient_id, self.age_at_index
            )));
        }
        let mut ids = BTreeSet::new();
        for (k, adm) in self.admissions.iter().enumerate() {
            if adm.patient_id != self.patient_id {
                return Err(Error::validation(format!(
                    "admission {} belongs to patient {}, found under {}",
                    adm.admission_id, adm.patient_id, self.patient_id
                )));
            }
            if !ids.insert(adm.admission_id.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate admission id {}",
                    adm.admission_id
                )));
            }
            adm.los_days()?;
            if let Some(table) = weights {
                table.check_categories(&adm.comorbidity_categories, &adm.admission_id)?;
            }
            if k > 0 {
                let prev = &self.admissions[k - 1];
                if adm.admit_date <= prev.discharge_date {
                    return Err(Error::validation(format!(
                        "patient {}: admission {} ({}) does not start after admission {} ends ({})",
                        self.patient_id,
                        adm.admission_id,
                        adm.admit_date,
                        prev.admission_id,
                        prev.discharge_date
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn position_of_date(&self, index_date: NaiveDate) -> Option<usize> {
        self.admissions.iter().position(|a| a.admit_date == index_date)
    }
}

/// Reads one `PatientHistory` per non-blank line.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<PatientHistory>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let history: PatientHistory = serde_json::from_str(&line).map_err(|e| {
            Error::validation(format!("line {}: {e}", lineno + 1))
        })?;
        out.push(history);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, histories: &[PatientHistory]) -> Result<()> {
    for h in histories {
        serde_json::to_writer(&mut writer, h)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
