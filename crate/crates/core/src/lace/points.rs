use serde::{Deserialize, Serialize};

use super::logistic::LogisticModel;
use crate::error::{Error, Result};

/// Integer point weights derived from regression coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointScoreTable {
    /// Smallest |β| among nonzero coefficients.
    pub reference: f64,
    pub points: Vec<i64>,
}

impl PointScoreTable {
    /// Patient score `Σ points_i · x_i`; for 0/1 indicators this is the sum
    /// of points over the active features.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.points.len() {
            return Err(Error::Shape { context: "point score".into(), expected: self.points.len(), actual: x.len() });
        }
        Ok(self.points.iter().zip(x).map(|(p, v)| *p as f64 * v).sum())
    }
}

/// Divides every coefficient by the smallest nonzero |β| and rounds half away
/// from zero (`f64::round`). Exactly-zero coefficients get 0 points.
pub fn to_point_score(model: &LogisticModel) -> Result<PointScoreTable> {
    point_scores(&model.coefficients)
}

pub fn point_scores(coefficients: &[f64]) -> Result<PointScoreTable> {
    let reference = coefficients
        .iter()
        .map(|b| b.abs())
        .filter(|b| *b > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !reference.is_finite() {
        return Err(Error::validation("point scores need at least one nonzero coefficient"));
    }
    let points = coefficients.iter().map(|b| (b / reference).round() as i64).collect();
    Ok(PointScoreTable { reference, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(point_scores(&[0.5, 1.0, 2.0]).unwrap().points, vec![1, 2, 4]);
        assert_eq!(point_scores(&[-0.3, 0.6]).unwrap().points, vec![-1, 2]);
        assert_eq!(point_scores(&[0.49, 1.0]).unwrap().points, vec![1, 2]);
    }

    #[test]
    fn halves_round_away_from_zero() {
        // dyadic coefficients so the ratios are exact halves
        assert_eq!(point_scores(&[0.5, 1.25]).unwrap().points, vec![1, 3]);
        assert_eq!(point_scores(&[0.5, -1.25]).unwrap().points, vec![1, -3]);
        assert_eq!(point_scores(&[0.25, 0.375]).unwrap().points, vec![1, 2]);
    }

    #[test]
    fn all_zero_is_an_error() {
        assert!(point_scores(&[0.0, 0.0]).is_err());
        assert!(point_scores(&[]).is_err());
    }

    #[test]
    fn score_sums_active_points() {
        let t = point_scores(&[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(t.score(&[1.0, 0.0, 1.0]).unwrap(), 5.0);
    }
}
