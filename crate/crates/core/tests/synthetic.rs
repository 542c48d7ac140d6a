use readmit::cohort::{label_readmissions, CharlsonWeightTable, MIN_AGE};
use readmit::synthetic::*;

fn spec() -> CohortSpec {
    let mut s = CohortSpec { n_patients: 3000, temporal_gain: 1.0, ..Default::default() };
    s.coefficients.insert("cci_score".into(), 0.3);
    s.coefficients.insert("acute_admission".into(), 0.5);
    s.coefficients.insert("los_days".into(), 0.05);
    s
}

#[test]
fn realized_readmissions_match_planted_probabilities() {
    let table = CharlsonWeightTable::shipped();
    let spec = spec();
    let process = spec.planted().unwrap();
    let cohort = generate_cohort(&spec, &table).unwrap();
    // Bin admissions by planted probability; each bin's readmission rate must
    // match its mean probability within four binomial standard errors.
    let mut bins = vec![(0.0f64, 0.0f64, 0usize); 5];
    for h in &cohort {
        h.validate(Some(&table)).unwrap();
        assert!(h.age_at_index >= MIN_AGE);
        let probs = process.history_probabilities(h, &table).unwrap();
        for (p, (_, label)) in probs.iter().zip(label_readmissions(h)) {
            let b = ((p * 5.0) as usize).min(4);
            bins[b].0 += p;
            bins[b].1 += f64::from(u8::from(label));
            bins[b].2 += 1;
        }
    }
    for (psum, ysum, n) in bins.into_iter().filter(|b| b.2 >= 200) {
        let n = n as f64;
        let p = psum / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((ysum / n - p).abs() < 4.0 * se + 0.01, "bin mean {p}: realized {}", ysum / n);
    }
}

#[test]
fn generation_is_reproducible_and_seed_sensitive() {
    let table = CharlsonWeightTable::shipped();
    let s = CohortSpec { n_patients: 100, ..spec() };
    let a = generate_cohort(&s, &table).unwrap();
    assert_eq!(a, generate_cohort(&s, &table).unwrap());
    assert_ne!(a, generate_cohort(&CohortSpec { seed: 1, ..s.clone() }, &table).unwrap());
    // Patient i depends only on (seed, i): a larger cohort extends a smaller one.
    let big = generate_cohort(&CohortSpec { n_patients: 150, ..s }, &table).unwrap();
    assert_eq!(&big[..100], &a[..]);
}

#[test]
fn invalid_specs_are_rejected() {
    let table = CharlsonWeightTable::shipped();
    let mut s = spec();
    s.coefficients.insert("height".into(), 1.0);
    assert!(generate_cohort(&s, &table).is_err());
    assert!(generate_cohort(&CohortSpec { n_patients: 0, ..Default::default() }, &table).is_err());
    assert!(generate_cohort(&CohortSpec { mean_admissions: 0.5, ..Default::default() }, &table).is_err());
}
