mod common;

use common::XorShift;
use readmit::explain::*;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|k| format!("f{k}")).collect()
}

fn rows(rng: &mut XorShift, n: usize, d: usize) -> Vec<Instance> {
    (0..n).map(|i| Instance::tabular(format!("b{i}"), i % 2 == 0, (0..d).map(|_| rng.range(-2.0, 2.0)).collect())).collect()
}

/// A nonlinear toy with interactions.
fn toy(r: &[f64]) -> f64 {
    (r[0] * r[1]).tanh() + 0.5 * r[2] * r[2] - r[3] + (r[4] - r[5]).sin() + 0.3 * r[0] * r[5]
}

#[test]
fn linear_model_attributions_are_closed_form() {
    let mut rng = XorShift(1);
    let w = [0.7, -1.3, 0.2, 2.0, 0.0];
    let scorer = RowScorer(|r: &[f64]| 0.4 + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
    let background = rows(&mut rng, 25, 5);
    let mean: Vec<f64> = (0..5).map(|k| background.iter().map(|b| b.steps[0][k]).sum::<f64>() / 25.0).collect();
    for x in rows(&mut rng, 10, 5) {
        let e = shap_values(&scorer, &x, &background, &names(5), ShapMode::Exact, 0).unwrap();
        for k in 0..5 {
            assert!((e.attributions[k] - w[k] * (x.steps[0][k] - mean[k])).abs() < 1e-9);
        }
        assert!(e.metadata.efficiency_residual < 1e-9);
        assert_eq!(e.attributions[4], 0.0, "null player");
    }
}

#[test]
fn symmetry_and_null_player_exact() {
    let scorer = RowScorer(|r: &[f64]| (r[0] + r[1]).exp() / (1.0 + r[2] * r[2]));
    let mut rng = XorShift(2);
    let background = rows(&mut rng, 8, 4);
    // Features 0 and 1 are interchangeable when they take equal values in x
    // and in every background row.
    let background: Vec<Instance> = background
        .into_iter()
        .map(|mut b| {
            b.steps[0][1] = b.steps[0][0];
            b
        })
        .collect();
    let x = Instance::tabular("x", true, vec![0.9, 0.9, -0.4, 3.0]);
    let e = shap_values(&scorer, &x, &background, &names(4), ShapMode::Exact, 0).unwrap();
    assert!((e.attributions[0] - e.attributions[1]).abs() < 1e-9);
    assert!(e.attributions[3].abs() < 1e-9);
    assert!(e.metadata.efficiency_residual < 1e-9);
}

#[test]
fn monte_carlo_agrees_with_exact() {
    let mut rng = XorShift(3);
    let background = rows(&mut rng, 20, 6);
    let x = Instance::tabular("x", false, vec![1.2, -0.7, 0.5, 1.9, -1.1, 0.3]);
    let scorer = RowScorer(toy);
    let exact = shap_values(&scorer, &x, &background, &names(6), ShapMode::Exact, 0).unwrap();
    let mc = shap_values(&scorer, &x, &background, &names(6), ShapMode::MonteCarlo { n_samples: 10_000 }, 7).unwrap();
    let worst = exact.attributions.iter().zip(&mc.attributions).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 0.01, "max |Δφ| = {worst}");
    let se = mc.metadata.standard_error.unwrap();
    assert!(mc.metadata.efficiency_residual < 3.0 * se, "{} vs se {se}", mc.metadata.efficiency_residual);
    assert_eq!(exact.base_value, mc.base_value);
    let again = shap_values(&scorer, &x, &background, &names(6), ShapMode::MonteCarlo { n_samples: 10_000 }, 7).unwrap();
    assert_eq!(again, mc);
}

#[test]
fn sequence_attribution_intervenes_on_whole_columns() {
    // Score = sum of feature 0 over real steps + last value of feature 1.
    struct SeqScorer;
    impl Scorer for SeqScorer {
        fn score(&self, steps: &[Vec<f64>], mask: &[bool]) -> readmit::Result<f64> {
            let total: f64 = steps.iter().zip(mask).filter(|(_, m)| **m).map(|(r, _)| r[0]).sum();
            let last = mask.iter().rposition(|m| *m).unwrap();
            Ok(total + steps[last][1])
        }
    }
    let x = Instance { id: "x".into(), label: true, steps: vec![vec![0.0, 0.0], vec![1.0, 5.0], vec![2.0, 3.0]], mask: vec![false, true, true] };
    let b = Instance { id: "b".into(), label: false, steps: vec![vec![7.0, 7.0], vec![0.5, 1.0], vec![0.5, 1.0]], mask: vec![true, true, true] };
    let e = shap_values(&SeqScorer, &x, &[b], &names(2), ShapMode::Exact, 0).unwrap();
    // The instance's own mask applies throughout.
    assert!((e.attributions[0] - 2.0).abs() < 1e-12);
    assert!((e.attributions[1] - 2.0).abs() < 1e-12);
    assert!((e.base_value - 2.0).abs() < 1e-12);
}

#[test]
fn force_plot_round_trips_bit_exactly() {
    let mut rng = XorShift(4);
    let background = rows(&mut rng, 10, 6);
    let scorer = RowScorer(toy);
    let ex: Vec<ShapExplanation> = rows(&mut rng, 3, 6)
        .iter()
        .map(|x| shap_values(&scorer, x, &background, &names(6), ShapMode::Exact, 0).unwrap())
        .collect();
    let doc = export_force_plot_data(&ex);
    let parsed = parse_force_plot(&serde_json::to_string(&doc).unwrap()).unwrap();
    assert_eq!(parsed, doc);
    for (entry, e) in parsed.explanations.iter().zip(&ex) {
        let abs: Vec<f64> = entry.features.iter().map(|f| f.attribution.abs()).collect();
        assert!(abs.windows(2).all(|w| w[0] >= w[1]));
        for f in &entry.features {
            let k = e.feature_names.iter().position(|n| *n == f.name).unwrap();
            assert_eq!(f.attribution.to_bits(), e.attributions[k].to_bits());
        }
    }
    let empty = export_force_plot_data(&[]);
    assert_eq!(parse_force_plot(&serde_json::to_string(&empty).unwrap()).unwrap().explanations.len(), 0);
    assert!(parse_force_plot("{\"schema_version\": 99, \"explanations\": []}").is_err());
}

fn labeled(rng: &mut XorShift, n: usize) -> Vec<Instance> {
    (0..n)
        .map(|i| {
            let r: Vec<f64> = (0..3).map(|_| rng.range(-1.0, 1.0)).collect();
            let z = 3.0 * r[0] + 1.0 * r[1];
            let label = rng.unit() < 1.0 / (1.0 + (-z).exp());
            Instance::tabular(format!("i{i:04}"), label, r)
        })
        .collect()
}

#[test]
fn permutation_importance_ranks_signal_and_ignores_unused_features() {
    let mut rng = XorShift(5);
    let data = labeled(&mut rng, 600);
    let scorer = RowScorer(|r: &[f64]| 3.0 * r[0] + r[1]);
    let res = permutation_importance_all(&scorer, &data, &names(3), 10, 11).unwrap();
    assert_eq!(res.ranking()[0].feature, "f0");
    assert!(res.rows[0].importance > res.rows[1].importance);
    let unused = permutation_importance(&scorer, &data, 2, "f2", 50, 3).unwrap();
    assert!(unused.importance.abs() < 1e-12, "a column the scorer never reads cannot move the AUC");

    // A weakly used feature's importance averages out near zero.
    let weak = RowScorer(|r: &[f64]| 3.0 * r[0] + r[1] + 1e-3 * r[2]);
    let row = permutation_importance(&weak, &data, 2, "f2", 50, 3).unwrap();
    assert!(row.importance.abs() < 0.005, "{}", row.importance);

    let again = permutation_importance_all(&scorer, &data, &names(3), 10, 11).unwrap();
    assert_eq!(again, res);
    let mut csv = Vec::new();
    write_ranking_csv(&mut csv, &res).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
}

#[test]
fn permutation_of_a_constant_column_is_flagged() {
    let mut rng = XorShift(6);
    let mut data = labeled(&mut rng, 50);
    data.iter_mut().for_each(|i| i.steps[0][2] = 1.0);
    let row = permutation_importance(&RowScorer(|r: &[f64]| r[0] + r[2]), &data, 2, "f2", 5, 0).unwrap();
    assert!(row.constant && row.importance == 0.0);
    assert!(permutation_importance(&RowScorer(|r: &[f64]| r[0]), &data, 7, "f7", 5, 0).is_err());
}
