//! Bidirectional LSTM -> LSTM -> dense sigmoid head, with exact
//! backpropagation through time.
//!
//! Masked timesteps are skipped: both directions and the second layer carry
//! their state across them unchanged, so padding values are never read. The
//! sequence summary is the second layer's hidden state at the last unmasked
//! step.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::cell::{CellParams, GateCache, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::synthetic::sigmoid;

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the log.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub dropout: f64,
    /// Also drop out the second layer's output before the dense head.
    pub dropout_after_top: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { hidden1: 32, hidden2: 32, dropout: 0.4, dropout_after_top: true }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub forward: CellParams,
    pub backward: CellParams,
    pub top: CellParams,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::with_capacity(26);
        out.extend(self.forward.tensors());
        out.extend(self.backward.tensors());
        out.extend(self.top.tensors());
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::with_capacity(26);
        out.extend(self.forward.tensors_mut());
        out.extend(self.backward.tensors_mut());
        out.extend(self.top.tensors_mut());
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    /// Tensor names aligned with [`Self::tensors`].
    pub fn tensor_names() -> Vec<String> {
        let mut out = Vec::with_capacity(26);
        for layer in ["forward", "backward", "top"] {
            out.extend(TENSOR_NAMES.iter().map(|n| format!("{layer}.{n}")));
        }
        out.push("head.w".into());
        out.push("head.b".into());
        out
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales in place so the global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.l2_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            self.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v *= scale));
        }
        norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNetwork {
    pub config: NetworkConfig,
    pub input_size: usize,
    pub params: NetworkParams,
}

/// Per-sequence activations from a forward pass.
#[derive(Debug, Clone)]
pub struct SequenceCache {
    /// Indices of the unmasked steps, ascending.
    pub active: Vec<usize>,
    fwd: Vec<GateCache>,
    /// In processing order (last active step first).
    bwd: Vec<GateCache>,
    /// Per active step: `2·hidden1` layer-1 outputs after dropout.
    pub layer1_out: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers for `layer1_out`, when training.
    drop1: Option<Vec<Vec<f64>>>,
    top: Vec<GateCache>,
    drop2: Option<Vec<f64>>,
    /// Dense-head input (second layer's last hidden state after dropout).
    pub head_input: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
}

/// Forward caches for a batch, in batch order.
#[derive(Debug, Clone, Default)]
pub struct BatchCache {
    pub sequences: Vec<SequenceCache>,
}

impl BatchCache {
    pub fn probabilities(&self) -> Vec<f64> {
        self.sequences.iter().map(|s| s.probability).collect()
    }
}

fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
}

impl LstmNetwork {
    pub fn new(input_size: usize, config: NetworkConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if input_size == 0 {
            return Err(Error::Config("input size must be positive".into()));
        }
        let forward = CellParams::init(config.hidden1, input_size, rng);
        let backward = CellParams::init(config.hidden1, input_size, rng);
        let top = CellParams::init(config.hidden2, 2 * config.hidden1, rng);
        let bound = 1.0 / (config.hidden2 as f64).sqrt();
        let head_w = (0..config.hidden2).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(Self {
            config,
            input_size,
            params: NetworkParams { forward, backward, top, head_w, head_b: vec![0.0] },
        })
    }

    pub fn check_shapes(&self) -> Result<()> {
        let p = &self.params;
        let c = &self.config;
        for (cell, hidden, input, name) in [
            (&p.forward, c.hidden1, self.input_size, "forward"),
            (&p.backward, c.hidden1, self.input_size, "backward"),
            (&p.top, c.hidden2, 2 * c.hidden1, "top"),
        ] {
            if cell.hidden != hidden || cell.input != input {
                return Err(Error::Shape { context: format!("{name} cell dimensions"), expected: hidden, actual: cell.hidden });
            }
            cell.check_shapes()?;
        }
        if p.head_w.len() != c.hidden2 || p.head_b.len() != 1 {
            return Err(Error::Shape { context: "dense head".into(), expected: c.hidden2, actual: p.head_w.len() });
        }
        Ok(())
    }

    /// Runs one sequence. Dropout is applied only when `dropout_rng` is given
    /// (training mode).
    pub fn forward_sequence(
        &self,
        steps: &[Vec<f64>],
        mask: &[bool],
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<SequenceCache> {
        if steps.len() != mask.len() {
            return Err(Error::Shape { context: "sequence steps vs mask".into(), expected: mask.len(), actual: steps.len() });
        }
        let active: Vec<usize> = (0..mask.len()).filter(|&t| mask[t]).collect();
        if active.is_empty() {
            return Err(Error::validation("sequence has no unmasked steps"));
        }
        let p = &self.params;
        let h1 = self.config.hidden1;
        let h2 = self.config.hidden2;

        let mut fwd = Vec::with_capacity(active.len());
        let (mut h, mut c) = (vec![0.0; h1], vec![0.0; h1]);
        let mut fwd_out = Vec::with_capacity(active.len());
        for &t in &active {
            let (hn, cn, cache) = p.forward.forward(&steps[t], &h, &c)?;
            fwd_out.push(hn.clone());
            fwd.push(cache);
            h = hn;
            c = cn;
        }
        let mut bwd = Vec::with_capacity(active.len());
        let (mut h, mut c) = (vec![0.0; h1], vec![0.0; h1]);
        let mut bwd_out = vec![Vec::new(); active.len()];
        for (j, &t) in active.iter().enumerate().rev() {
            let (hn, cn, cache) = p.backward.forward(&steps[t], &h, &c)?;
            bwd_out[j] = hn.clone();
            bwd.push(cache);
            h = hn;
            c = cn;
        }

        let train = dropout_rng.is_some() && self.config.dropout > 0.0;
        let mut layer1_out: Vec<Vec<f64>> = fwd_out
            .into_iter()
            .zip(bwd_out)
            .map(|(mut a, b)| {
                a.extend(b);
                a
            })
            .collect();
        let drop1 = if train {
            let rng = dropout_rng.as_deref_mut().expect("train mode has an rng");
            let masks: Vec<Vec<f64>> =
                layer1_out.iter().map(|_| dropout_mask(2 * h1, self.config.dropout, rng)).collect();
            for (row, m) in layer1_out.iter_mut().zip(&masks) {
                row.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            Some(masks)
        } else {
            None
        };

        let mut top = Vec::with_capacity(active.len());
        let (mut h, mut c) = (vec![0.0; h2], vec![0.0; h2]);
        for x in &layer1_out {
            let (hn, cn, cache) = p.top.forward(x, &h, &c)?;
            top.push(cache);
            h = hn;
            c = cn;
        }
        let drop2 = if train && self.config.dropout_after_top {
            let rng = dropout_rng.as_deref_mut().expect("train mode has an rng");
            let m = dropout_mask(h2, self.config.dropout, rng);
            h.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
            Some(m)
        } else {
            None
        };
        let logit = p.head_b[0] + p.head_w.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
        Ok(SequenceCache {
            active,
            fwd,
            bwd,
            layer1_out,
            drop1,
            top,
            drop2,
            head_input: h,
            logit,
            probability: sigmoid(logit),
        })
    }

    pub fn forward<'a, I>(&self, batch: I, mut dropout_rng: Option<&mut Rng>) -> Result<BatchCache>
    where
        I: IntoIterator<Item = (&'a [Vec<f64>], &'a [bool])>,
    {
        let sequences = batch
            .into_iter()
            .map(|(steps, mask)| self.forward_sequence(steps, mask, dropout_rng.as_deref_mut()))
            .collect::<Result<Vec<_>>>()?;
        Ok(BatchCache { sequences })
    }

    /// Eval-mode probability for one sequence.
    pub fn predict(&self, steps: &[Vec<f64>], mask: &[bool]) -> Result<f64> {
        Ok(self.forward_sequence(steps, mask, None)?.probability)
    }

    /// Exact gradient of the mean binary cross-entropy over the batch.
    ///
    /// The loss gradient is taken through the unclamped sigmoid
    /// (`∂L/∂logit = (p - y)/N`), which equals the clamped loss's gradient
    /// whenever the clamp is inactive.
    pub fn backward(&self, cache: &BatchCache, labels: &[bool]) -> Result<NetworkParams> {
        if cache.sequences.len() != labels.len() {
            return Err(Error::validation(format!(
                "backward needs one forward cache per label: {} caches, {} labels",
                cache.sequences.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::validation("backward on an empty batch"));
        }
        let mut grads = self.params.zeros_like();
        let n = labels.len() as f64;
        for (seq, &y) in cache.sequences.iter().zip(labels) {
            let dlogit = (seq.probability - f64::from(u8::from(y))) / n;
            self.backward_sequence(seq, dlogit, &mut grads);
        }
        Ok(grads)
    }

    fn backward_sequence(&self, seq: &SequenceCache, dlogit: f64, grads: &mut NetworkParams) {
        let p = &self.params;
        let h1 = self.config.hidden1;
        let h2 = self.config.hidden2;
        let steps = seq.active.len();

        for (g, v) in grads.head_w.iter_mut().zip(&seq.head_input) {
            *g += dlogit * v;
        }
        grads.head_b[0] += dlogit;
        let mut dh_last: Vec<f64> = p.head_w.iter().map(|w| dlogit * w).collect();
        if let Some(m) = &seq.drop2 {
            dh_last.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
        }

        // second layer, last step back to first
        let mut d_layer1 = vec![Vec::new(); steps];
        let mut dh = dh_last;
        let mut dc = vec![0.0; h2];
        for j in (0..steps).rev() {
            let (dh_prev, dc_prev, mut dx) = p.top.backward(&seq.top[j], &dh, &dc, &mut grads.top, true);
            if let Some(masks) = &seq.drop1 {
                dx.iter_mut().zip(&masks[j]).for_each(|(d, k)| *d *= k);
            }
            d_layer1[j] = dx;
            dh = dh_prev;
            dc = dc_prev;
        }

        // forward direction ran first..last; unwind last..first
        let mut carry_h = vec![0.0; h1];
        let mut carry_c = vec![0.0; h1];
        for j in (0..steps).rev() {
            let dh: Vec<f64> = (0..h1).map(|k| d_layer1[j][k] + carry_h[k]).collect();
            let (dh_prev, dc_prev, _) = p.forward.backward(&seq.fwd[j], &dh, &carry_c, &mut grads.forward, false);
            carry_h = dh_prev;
            carry_c = dc_prev;
        }

        // backward direction ran last..first; unwind first..last
        let mut carry_h = vec![0.0; h1];
        let mut carry_c = vec![0.0; h1];
        for (processed, cache) in seq.bwd.iter().enumerate().rev() {
            let j = steps - 1 - processed;
            let dh: Vec<f64> = (0..h1).map(|k| d_layer1[j][h1 + k] + carry_h[k]).collect();
            let (dh_prev, dc_prev, _) = p.backward.backward(cache, &dh, &carry_c, &mut grads.backward, false);
            carry_h = dh_prev;
            carry_c = dc_prev;
        }
    }
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(labels: &[bool], probabilities: &[f64]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::validation("binary cross-entropy of an empty batch"));
    }
    if labels.len() != probabilities.len() {
        return Err(Error::Shape { context: "bce labels vs probabilities".into(), expected: labels.len(), actual: probabilities.len() });
    }
    let total: f64 = labels
        .iter()
        .zip(probabilities)
        .map(|(&y, &p)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if y { -p.ln() } else { -(1.0 - p).ln() }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn bce_examples() {
        assert!(bce_loss(&[true], &[1.0]).unwrap() <= 1e-11);
        assert!((bce_loss(&[true, false], &[0.5, 0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(&[true], &[0.25]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(bce_loss(&[], &[]).is_err());
    }

    #[test]
    fn fully_masked_sequence_rejected() {
        let net = LstmNetwork::new(2, NetworkConfig { hidden1: 2, hidden2: 2, ..Default::default() }, &mut stream_rng(1, 0)).unwrap();
        let steps = vec![vec![0.0; 2]; 3];
        assert!(net.forward_sequence(&steps, &[false; 3], None).is_err());
    }

    #[test]
    fn single_step_sequence_both_directions_see_it() {
        let mut rng = stream_rng(2, 0);
        let mut net = LstmNetwork::new(3, NetworkConfig { hidden1: 4, hidden2: 3, ..Default::default() }, &mut rng).unwrap();
        net.params.backward = net.params.forward.clone();
        let steps = vec![vec![0.0; 3], vec![0.3, -0.2, 1.0]];
        let cache = net.forward_sequence(&steps, &[false, true], None).unwrap();
        let out = &cache.layer1_out[0];
        assert_eq!(out[..4], out[4..]);
    }

    #[test]
    fn backward_checks_cache_arity() {
        let net = LstmNetwork::new(2, NetworkConfig { hidden1: 2, hidden2: 2, ..Default::default() }, &mut stream_rng(1, 0)).unwrap();
        let cache = BatchCache::default();
        assert!(net.backward(&cache, &[true]).is_err());
    }

    #[test]
    fn clip_norm_rescales() {
        let net = LstmNetwork::new(2, NetworkConfig { hidden1: 2, hidden2: 2, ..Default::default() }, &mut stream_rng(1, 0)).unwrap();
        let mut g = net.params.clone();
        let before = g.clip_norm(0.5);
        assert!(before > 0.5);
        assert!((g.l2_norm() - 0.5).abs() < 1e-12);
    }
}
