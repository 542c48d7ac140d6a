use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn class_counts(labels: &[bool]) -> (u64, u64) {
    let pos = labels.iter().filter(|l| **l).count() as u64;
    (pos, labels.len() as u64 - pos)
}

/// Area under the ROC curve via the Mann-Whitney rank sum: the probability
/// that a random positive outscores a random negative, ties counting one half.
///
/// Ranks are kept doubled (integers) so the statistic is exact before the
/// final division.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape { context: "auc scores vs labels".into(), expected: labels.len(), actual: scores.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::validation("auc: NaN score"));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels(format!(
            "auc needs both classes; got {pos} positives and {neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end+1 share the average (start+end+2)/2
        let doubled = (start + end + 2) as u128;
        let tied_pos = order[start..=end].iter().filter(|&&i| labels[i]).count() as u128;
        doubled_rank_sum += doubled * tied_pos;
        start = end + 1;
    }
    let doubled_u = doubled_rank_sum - (pos as u128) * (pos as u128 + 1);
    Ok(doubled_u as f64 / (2 * pos as u128 * neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopDecile {
    pub precision: f64,
    pub recall: f64,
    /// Size of the flagged set, `ceil(n / 10)`.
    pub k: usize,
}

/// Precision and recall among the `ceil(n/10)` highest-scored instances.
/// Ties at the cut are broken by ascending instance id.
pub fn top_decile_metrics<S: AsRef<str>>(scores: &[f64], labels: &[bool], ids: &[S]) -> Result<TopDecile> {
    let n = scores.len();
    if labels.len() != n || ids.len() != n {
        return Err(Error::Shape { context: "top-decile inputs".into(), expected: n, actual: labels.len().min(ids.len()) });
    }
    if n < 10 {
        return Err(Error::validation(format!("top-decile metrics need at least 10 instances, got {n}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::validation("top-decile: NaN score"));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels(format!(
            "top-decile metrics need both classes; got {pos} positives and {neg} negatives"
        )));
    }
    let k = n.div_ceil(10);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| ids[a].as_ref().cmp(ids[b].as_ref())));
    let tp = order[..k].iter().filter(|&&i| labels[i]).count();
    Ok(TopDecile { precision: tp as f64 / k as f64, recall: tp as f64 / pos as f64, k })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.3; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert!(matches!(auc_roc(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn top_decile_example() {
        // 100 instances; the ten highest scores hold 4 of the 10 positives
        let scores: Vec<f64> = (0..100).map(|i| 100.0 - i as f64).collect();
        let mut labels = vec![false; 100];
        for i in [0, 3, 5, 9, 20, 40, 50, 60, 70, 99] {
            labels[i] = true;
        }
        let ids: Vec<String> = (0..100).map(|i| format!("{i:03}")).collect();
        let m = top_decile_metrics(&scores, &labels, &ids).unwrap();
        assert_eq!((m.precision, m.recall, m.k), (0.4, 0.4, 10));
    }

    #[test]
    fn top_decile_ties_use_ids() {
        let scores = vec![1.0; 10];
        let mut labels = vec![false; 10];
        labels[7] = true;
        let ids = ["j", "i", "h", "g", "f", "e", "d", "a", "b", "c"];
        let m = top_decile_metrics(&scores, &labels, &ids).unwrap();
        assert_eq!(m.k, 1);
        assert_eq!(m.precision, 1.0);
        assert!(top_decile_metrics(&scores[..9], &labels[..9], &ids[..9]).is_err());
    }

    #[test]
    fn k_rounds_up() {
        let scores: Vec<f64> = (0..11).map(f64::from).collect();
        let labels: Vec<bool> = (0..11).map(|i| i >= 9).collect();
        let ids: Vec<String> = (0..11).map(|i| i.to_string()).collect();
        let m = top_decile_metrics(&scores, &labels, &ids).unwrap();
        assert_eq!(m.k, 2);
        assert_eq!(m.recall, 1.0);
    }
}
