//! Ridge-penalized logistic regression fitted by iteratively reweighted
//! least squares (Newton-Raphson on the penalized log-likelihood).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::synthetic::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    /// L2 penalty `ridge/2 * Σβ_j²`; the intercept is not penalized.
    pub ridge: f64,
    pub max_iterations: usize,
    /// Converged when max |Δβ| falls below this.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { ridge: 1e-6, max_iterations: 100, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub iterations: usize,
    pub final_deviance: f64,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub metadata: FitMetadata,
}

impl LogisticModel {
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::Shape {
                context: "logistic predict".into(),
                expected: self.coefficients.len(),
                actual: x.len(),
            });
        }
        Ok(self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }

    /// `sigmoid(β₀ + β·x)`, clamped into the open unit interval.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let p = sigmoid(self.linear_predictor(x)?);
        Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// Gradient of the penalized log-likelihood at this model, intercept first.
    pub fn penalized_score(&self, x: &[Vec<f64>], y: &[bool]) -> Result<Vec<f64>> {
        let beta = self.stacked();
        let (score, _) = score_and_deviance(x, y, &beta, self.metadata.ridge)?;
        Ok(score)
    }

    fn stacked(&self) -> Vec<f64> {
        std::iter::once(self.intercept).chain(self.coefficients.iter().copied()).collect()
    }
}

/// A fit in which every residual |y - p| is below this is treated as
/// separated: the ridge is all that keeps the coefficients finite.
const SEPARATION_RESIDUAL: f64 = 1e-4;

fn check_shapes(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Shape { context: "design rows vs labels".into(), expected: x.len(), actual: y.len() });
    }
    let p = x.first().map_or(0, Vec::len);
    if let Some(row) = x.iter().find(|r| r.len() != p) {
        return Err(Error::Shape { context: "design row width".into(), expected: p, actual: row.len() });
    }
    Ok(p)
}

fn score_and_deviance(x: &[Vec<f64>], y: &[bool], beta: &[f64], ridge: f64) -> Result<(Vec<f64>, f64)> {
    let p = check_shapes(x, y)?;
    let mut score = vec![0.0; p + 1];
    let mut deviance = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
        let mu = sigmoid(eta);
        let r = f64::from(u8::from(label)) - mu;
        score[0] += r;
        for (s, v) in score[1..].iter_mut().zip(row) {
            *s += r * v;
        }
        deviance += 2.0 * log1p_exp(if label { -eta } else { eta });
    }
    for (s, b) in score[1..].iter_mut().zip(&beta[1..]) {
        *s -= ridge * b;
    }
    Ok((score, deviance))
}

/// ln(1 + e^z) without overflow.
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Fits `logit(p) = β₀ + Σ β_i x_i` by IRLS.
///
/// Fails on single-class labels, on non-convergence (with the per-iteration
/// max |Δβ| trace) and when the coefficients diverge under separation.
pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], config: &LogisticConfig) -> Result<LogisticModel> {
    let p = check_shapes(x, y)?;
    let n = y.len();
    let positives = y.iter().filter(|v| **v).count();
    if n == 0 || positives == 0 || positives == n {
        return Err(Error::DegenerateLabels(format!(
            "{positives} positives out of {n} rows; both classes are required"
        )));
    }
    for j in 0..p {
        if x.iter().all(|r| r[j] == x[0][j]) {
            log::warn!("design column {j} is constant; only the ridge penalty identifies it");
        }
    }

    let dim = p + 1;
    let mut beta = vec![0.0; dim];
    beta[0] = (positives as f64 / (n - positives) as f64).ln();
    let mut trace = Vec::new();
    let mut hessian = vec![0.0; dim * dim];
    let mut row1 = vec![0.0; dim];
    for iteration in 1..=config.max_iterations {
        hessian.iter_mut().for_each(|h| *h = 0.0);
        let mut gradient = vec![0.0; dim];
        let mut all_fitted = true;
        for (row, &label) in x.iter().zip(y) {
            row1[0] = 1.0;
            row1[1..].copy_from_slice(row);
            let eta: f64 = row1.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let target = f64::from(u8::from(label));
            if (target - mu).abs() > SEPARATION_RESIDUAL {
                all_fitted = false;
            }
            let w = mu * (1.0 - mu);
            let r = target - mu;
            for i in 0..dim {
                gradient[i] += r * row1[i];
                let wi = w * row1[i];
                for j in 0..=i {
                    hessian[i * dim + j] += wi * row1[j];
                }
            }
        }
        if all_fitted {
            return Err(Error::Separation { iteration, max_coef: max_abs(&beta) });
        }
        for i in 1..dim {
            gradient[i] -= config.ridge * beta[i];
            hessian[i * dim + i] += config.ridge;
        }
        for i in 0..dim {
            for j in 0..i {
                hessian[j * dim + i] = hessian[i * dim + j];
            }
        }
        let step = cholesky_solve(&hessian, &gradient)
            .ok_or_else(|| Error::validation("IRLS information matrix is not positive definite"))?;
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        let max_step = max_abs(&step);
        trace.push(max_step);
        if !max_step.is_finite() {
            break;
        }
        if max_step < config.tolerance {
            let separated = x.iter().zip(y).all(|(row, &label)| {
                let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
                (f64::from(u8::from(label)) - sigmoid(eta)).abs() < SEPARATION_RESIDUAL
            });
            if separated {
                return Err(Error::Separation { iteration, max_coef: max_abs(&beta) });
            }
            let (_, deviance) = score_and_deviance(x, y, &beta, config.ridge)?;
            return Ok(LogisticModel {
                intercept: beta[0],
                coefficients: beta[1..].to_vec(),
                metadata: FitMetadata { iterations: iteration, final_deviance: deviance, ridge: config.ridge },
            });
        }
    }
    let max_coef = max_abs(&beta);
    let diverging = trace.len() >= 10 && trace[trace.len() - 10..].windows(2).all(|w| w[1] >= w[0] * 0.5);
    if max_coef > 20.0 && diverging {
        return Err(Error::Separation { iteration: trace.len(), max_coef });
    }
    Err(Error::NonConvergence {
        iterations: trace.len(),
        last_step: trace.last().copied().unwrap_or(f64::NAN),
        trace,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_labels_are_reported() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            fit_logistic(&x, &[true, true], &LogisticConfig::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn symmetric_data_has_zero_intercept() {
        // every x value appears once with each label
        let mut x = Vec::new();
        let mut y = Vec::new();
        for v in [-2.0, -1.0, 0.5, 1.0, 2.0, 3.0] {
            for (xv, label) in [(v, true), (-v, false), (v, false), (-v, true)] {
                x.push(vec![xv]);
                y.push(label);
            }
        }
        let m = fit_logistic(&x, &y, &LogisticConfig::default()).unwrap();
        assert!(m.intercept.abs() < 1e-6);
    }

    #[test]
    fn separated_data_is_detected() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let err = fit_logistic(&x, &y, &LogisticConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err}");
    }

    #[test]
    fn predict_examples() {
        let meta = FitMetadata { iterations: 0, final_deviance: 0.0, ridge: 0.0 };
        let flat = LogisticModel { intercept: 0.0, coefficients: vec![0.0], metadata: meta.clone() };
        assert_eq!(flat.predict_proba(&[123.0]).unwrap(), 0.5);
        let m = LogisticModel { intercept: 0.0, coefficients: vec![1.0], metadata: meta };
        assert!((m.predict_proba(&[2.0]).unwrap() - 0.880_797_077_977_882_3).abs() < 1e-15);
        assert!(m.predict_proba(&[2.5]).unwrap() > m.predict_proba(&[2.0]).unwrap());
        assert!(matches!(m.predict_proba(&[1.0, 2.0]), Err(Error::Shape { .. })));
        assert!(m.predict_proba(&[1e4]).unwrap() < 1.0);
        assert!(m.predict_proba(&[-1e4]).unwrap() > 0.0);
    }
}
