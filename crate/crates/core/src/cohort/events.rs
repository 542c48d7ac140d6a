use chrono::NaiveDate;

use super::records::{AdmissionRecord, PatientHistory};
use crate::error::{Error, Result};

/// Look-back window for ED visits and prior admissions.
pub const LOOKBACK_DAYS: i64 = 180;
/// Readmission window, measured from discharge to the next admission.
pub const READMISSION_WINDOW_DAYS: i64 = 30;

/// Counts prior admissions with `admit_date` in `[index_date - window_days, index_date)`
/// that satisfy `filter`. The index admission itself never counts.
pub fn count_window_events<F>(
    history: &PatientHistory,
    index_date: NaiveDate,
    window_days: i64,
    filter: F,
) -> Result<u32>
where
    F: Fn(&AdmissionRecord) -> bool,
{
    if history.position_of_date(index_date).is_none() {
        return Err(Error::validation(format!(
            "patient {}: no admission on index date {index_date}",
            history.patient_id
        )));
    }
    let start = index_date - chrono::Duration::days(window_days);
    Ok(history
        .admissions
        .iter()
        .filter(|a| a.admit_date >= start && a.admit_date < index_date && filter(a))
        .count() as u32)
}

/// 30-day readmission label for every admission, in admission order.
///
/// An admission is positive iff the next admission starts within (0, 30] days
/// of its discharge. The last admission of a patient is always negative.
pub fn label_readmissions(history: &PatientHistory) -> Vec<(String, bool)> {
    let adms = &history.admissions;
    adms.iter()
        .enumerate()
        .map(|(k, a)| {
            let label = adms.get(k + 1).is_some_and(|next| {
                let gap = (next.admit_date - a.discharge_date).num_days();
                gap > 0 && gap <= READMISSION_WINDOW_DAYS
            });
            (a.admission_id.clone(), label)
        })
        .collect()
}
