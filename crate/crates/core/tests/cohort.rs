mod common;

use chrono::Datelike;
use common::{admission, date, days_from_civil, patient, XorShift};
use proptest::prelude::*;
use readmit::cohort::*;
use readmit::synthetic::{generate_cohort, CohortSpec};

fn civil_days(d: chrono::NaiveDate) -> i64 {
    days_from_civil(d.year() as i64, d.month() as i64, d.day() as i64)
}

#[test]
fn los_matches_civil_day_arithmetic() {
    for (a, d, want) in [("2010-02-27", "2010-03-02", 3), ("2012-02-28", "2012-03-01", 2), ("2011-12-31", "2012-01-01", 1), ("2010-05-05", "2010-05-05", 0)] {
        assert_eq!(compute_los(date(a), date(d), "x").unwrap(), want);
    }
    let mut rng = XorShift(7);
    let base = date("2000-01-01");
    for _ in 0..2000 {
        let a = base + chrono::Duration::days(rng.below(5000) as i64);
        let d = a + chrono::Duration::days(rng.below(400) as i64);
        assert_eq!(compute_los(a, d, "x").unwrap() as i64, civil_days(d) - civil_days(a));
    }
    let err = compute_los(date("2010-01-02"), date("2010-01-01"), "ADM-9").unwrap_err().to_string();
    assert!(err.contains("ADM-9"));
}

#[test]
fn window_counts_match_brute_force() {
    let table = CharlsonWeightTable::shipped();
    let spec = CohortSpec { n_patients: 200, mean_admissions: 4.0, ..Default::default() };
    let cohort = generate_cohort(&spec, &table).unwrap();
    for h in &cohort {
        for (k, adm) in h.admissions.iter().enumerate() {
            let idx = civil_days(adm.admit_date);
            let brute_all = h.admissions[..k].iter().filter(|p| idx - civil_days(p.admit_date) <= 180).count() as u32;
            let brute_ed = h.admissions[..k]
                .iter()
                .filter(|p| idx - civil_days(p.admit_date) <= 180 && p.via_emergency_dept)
                .count() as u32;
            assert_eq!(count_window_events(h, adm.admit_date, LOOKBACK_DAYS, |_| true).unwrap(), brute_all);
            assert_eq!(count_window_events(h, adm.admit_date, LOOKBACK_DAYS, |a| a.via_emergency_dept).unwrap(), brute_ed);
            let facts = facts_at(h, k, &table).unwrap();
            assert_eq!(facts.admissions_6mo, brute_all);
            assert_eq!(facts.ed_visits_6mo, brute_ed);
        }
    }
}

#[test]
fn window_boundaries() {
    let h = patient("P1", &[("2010-01-01", "2010-01-02"), ("2010-06-30", "2010-07-01"), ("2010-07-01", "2010-07-03")]);
    // 2010-01-01 is exactly 180 days before 2010-06-30.
    assert_eq!(count_window_events(&h, date("2010-06-30"), 180, |_| true).unwrap(), 1);
    assert_eq!(count_window_events(&h, date("2010-07-01"), 180, |_| true).unwrap(), 1);
    assert!(count_window_events(&h, date("2010-03-01"), 180, |_| true).is_err());
}

#[test]
fn readmission_labels_follow_thirty_day_gap() {
    let h = patient(
        "P1",
        &[("2010-01-01", "2010-01-05"), ("2010-02-04", "2010-02-06"), ("2010-03-09", "2010-03-10"), ("2010-03-11", "2010-03-12")],
    );
    let labels: Vec<bool> = label_readmissions(&h).into_iter().map(|(_, l)| l).collect();
    // gaps: 30 days, 31 days, 1 day, none
    assert_eq!(labels, [true, false, true, false]);
}

#[test]
fn validation_rejects_bad_histories() {
    let table = CharlsonWeightTable::shipped();
    let mut h = patient("P1", &[("2010-01-01", "2010-01-05"), ("2010-01-05", "2010-01-08")]);
    assert!(h.validate(Some(&table)).is_err(), "overlapping stays");
    h = patient("P1", &[("2010-01-01", "2010-01-05")]);
    h.age_at_index = 64;
    assert!(h.validate(Some(&table)).is_err());
    h.age_at_index = 65;
    h.admissions[0].comorbidity_categories.insert("gout".into());
    let err = h.validate(Some(&table)).unwrap_err().to_string();
    assert!(err.contains("gout"));
    let mut a = admission("P2", 0, "2010-01-01", "2010-01-02");
    a.admission_id = h.admissions[0].admission_id.clone();
    h.admissions[0].comorbidity_categories.clear();
    h.admissions.push(a);
    assert!(h.validate(Some(&table)).is_err(), "foreign/duplicate admission");
}

#[test]
fn sequences_are_left_padded_and_truncated() {
    let table = CharlsonWeightTable::shipped();
    let stays: Vec<(String, String)> = (0..5)
        .map(|k| (format!("2010-{:02}-01", 2 * k + 1), format!("2010-{:02}-03", 2 * k + 1)))
        .collect();
    let refs: Vec<(&str, &str)> = stays.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let h = patient("P1", &refs);
    let registry = FeatureRegistry::fit(std::slice::from_ref(&h), &FeatureOptions::default(), &table).unwrap();
    let seqs = build_sequences(std::slice::from_ref(&h), &registry, &table, SequenceConfig { max_seq_len: 3 }).unwrap();
    assert_eq!(seqs.len(), 5);
    assert_eq!(seqs[0].mask, [false, false, true]);
    assert_eq!(seqs[1].mask, [false, true, true]);
    assert_eq!(seqs[4].mask, [true, true, true]);
    assert!(seqs[0].steps[0].iter().all(|v| *v == 0.0));
    let facts = admission_facts(&h, &table).unwrap();
    // The last step of every sequence is its index admission; truncation keeps the most recent.
    for (k, s) in seqs.iter().enumerate() {
        assert_eq!(s.steps[2], registry.normalize(&facts[k]));
        assert_eq!(s.len(), (k + 1).min(3));
    }
    assert_eq!(seqs[4].steps[0], registry.normalize(&facts[2]));
}

#[test]
fn normalization_is_standard_on_the_fitting_split() {
    let table = CharlsonWeightTable::shipped();
    let cohort = generate_cohort(&CohortSpec { n_patients: 300, ..Default::default() }, &table).unwrap();
    let registry = FeatureRegistry::fit(&cohort, &FeatureOptions::default(), &table).unwrap();
    let rows: Vec<Vec<f64>> = build_index_rows(&cohort, &registry, &table, true).unwrap().into_iter().map(|r| r.values).collect();
    let n = rows.len() as f64;
    for (k, d) in registry.features.iter().enumerate() {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9, "{}: mean {mean}", d.name);
        if d.stddev > 0.0 {
            assert!((var - 1.0).abs() < 1e-9, "{}: var {var}", d.name);
        } else {
            assert_eq!(var, 0.0);
        }
    }
}

#[test]
fn missing_counters_impute_training_median() {
    let table = CharlsonWeightTable::shipped();
    let mut h = patient("P1", &[("2010-01-01", "2010-01-02"), ("2010-03-01", "2010-03-02"), ("2010-05-01", "2010-05-02")]);
    h.admissions[0].num_medications = Some(2);
    h.admissions[1].num_medications = Some(9);
    h.admissions[2].num_medications = None;
    let registry = FeatureRegistry::fit(std::slice::from_ref(&h), &FeatureOptions::default(), &table).unwrap();
    let col = registry.position("num_medications").unwrap();
    let facts = admission_facts(&h, &table).unwrap();
    assert_eq!(registry.raw(&facts[2])[col], 5.5);
}

#[test]
fn registry_and_jsonl_round_trip() {
    let table = CharlsonWeightTable::shipped();
    let cohort = generate_cohort(&CohortSpec { n_patients: 50, ..Default::default() }, &table).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &cohort).unwrap();
    assert_eq!(read_jsonl(buf.as_slice()).unwrap(), cohort);
    let opts = FeatureOptions { age_mode: AgeMode::Bucketed, exclude: vec!["season".into()] };
    let registry = FeatureRegistry::fit(&cohort, &opts, &table).unwrap();
    let back: FeatureRegistry = serde_json::from_str(&serde_json::to_string(&registry).unwrap()).unwrap();
    let back = back.restore().unwrap();
    assert_eq!(back.layout_hash(), registry.layout_hash());
    let facts = admission_facts(&cohort[0], &table).unwrap();
    assert_eq!(back.normalize(&facts[0]), registry.normalize(&facts[0]));
    let other = FeatureRegistry::fit(&cohort, &FeatureOptions::default(), &table).unwrap();
    assert_ne!(other.layout_hash(), registry.layout_hash());
}

#[test]
fn cci_examples() {
    let table = CharlsonWeightTable::shipped();
    assert_eq!(compute_cci(std::iter::empty::<&str>(), &table).unwrap(), 0);
    assert_eq!(compute_cci(["metastatic_tumor", "aids"], &table).unwrap(), 12);
    assert!(compute_cci(["not_a_category"], &table).is_err());
}

proptest! {
    #[test]
    fn cci_is_monotone_under_added_categories(picks in proptest::collection::vec(0usize..19, 0..10), extra in 0usize..19) {
        let table = CharlsonWeightTable::shipped();
        let names: Vec<&str> = table.categories().map(|(n, _)| n).collect();
        let base: Vec<&str> = picks.iter().map(|&i| names[i]).collect();
        let mut more = base.clone();
        more.push(names[extra]);
        let a = compute_cci(base.iter().copied(), &table).unwrap();
        let b = compute_cci(more.iter().copied(), &table).unwrap();
        prop_assert!(b >= a);
        // Duplicates never double count.
        let doubled: Vec<&str> = base.iter().chain(base.iter()).copied().collect();
        prop_assert_eq!(compute_cci(doubled.iter().copied(), &table).unwrap(), a);
    }
}
