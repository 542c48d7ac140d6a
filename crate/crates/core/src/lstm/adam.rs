use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Bias-corrected Adam over an ordered list of tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zero moments shaped like `shapes` (tensor lengths).
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = shapes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { config, t: 0, m, v }
    }

    /// One update. A non-finite gradient aborts before anything is modified;
    /// `names` label the tensors in the error.
    pub fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[&Vec<f64>], names: &[String]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape { context: "adam tensor count".into(), expected: self.m.len(), actual: params.len().min(grads.len()) });
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[k].len() || g.len() != self.m[k].len() {
                return Err(Error::Shape { context: format!("adam tensor {k}"), expected: self.m[k].len(), actual: g.len() });
            }
            if let Some(index) = g.iter().position(|v| !v.is_finite()) {
                let tensor = names.get(k).cloned().unwrap_or_else(|| format!("#{k}"));
                return Err(Error::NonFiniteGradient { tensor, index });
            }
        }
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for j in 0..g.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
