//! One LSTM cell: gates act on the concatenation `[h_prev, x_t]`.
//!
//! ```text
//! f = σ(W_f z + b_f)   i = σ(W_i z + b_i)   o = σ(W_o z + b_o)
//! g = tanh(W_C z + b_C)
//! c = f ⊙ c_prev + i ⊙ g
//! h = o ⊙ tanh(c)
//! ```

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::synthetic::sigmoid;

/// Weights are row-major `hidden × (hidden + input)`; the first `hidden`
/// columns multiply `h_prev`, the rest multiply `x_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub hidden: usize,
    pub input: usize,
    pub w_f: Vec<f64>,
    pub w_i: Vec<f64>,
    pub w_c: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

/// Activations kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct GateCache {
    pub z: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

pub(crate) const TENSOR_NAMES: [&str; 8] = ["w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o"];

impl CellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = vec![0.0; hidden * (hidden + input)];
        let b = vec![0.0; hidden];
        Self {
            hidden,
            input,
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    /// Uniform weights in ±1/√(hidden + input); forget-gate bias 1, other biases 0.
    pub fn init(hidden: usize, input: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(hidden, input);
        let bound = 1.0 / ((hidden + input) as f64).sqrt();
        for w in [&mut p.w_f, &mut p.w_i, &mut p.w_c, &mut p.w_o] {
            w.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        }
        p.b_f.iter_mut().for_each(|b| *b = 1.0);
        p
    }

    pub fn tensors(&self) -> [&Vec<f64>; 8] {
        [&self.w_f, &self.w_i, &self.w_c, &self.w_o, &self.b_f, &self.b_i, &self.b_c, &self.b_o]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }

    /// Checks every tensor against `hidden` and `input`.
    pub fn check_shapes(&self) -> Result<()> {
        let width = self.hidden + self.input;
        for (k, t) in self.tensors().iter().enumerate() {
            let expected = if k < 4 { self.hidden * width } else { self.hidden };
            if t.len() != expected {
                return Err(Error::Shape { context: format!("cell tensor {}", TENSOR_NAMES[k]), expected, actual: t.len() });
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>, GateCache)> {
        let h = self.hidden;
        for (context, expected, actual) in [
            ("cell input x_t", self.input, x.len()),
            ("cell h_prev", h, h_prev.len()),
            ("cell c_prev", h, c_prev.len()),
        ] {
            if expected != actual {
                return Err(Error::Shape { context: context.into(), expected, actual });
            }
        }
        let mut z = Vec::with_capacity(h + self.input);
        z.extend_from_slice(h_prev);
        z.extend_from_slice(x);

        let f = affine(&self.w_f, &self.b_f, &z, sigmoid);
        let i = affine(&self.w_i, &self.b_i, &z, sigmoid);
        let g = affine(&self.w_c, &self.b_c, &z, f64::tanh);
        let o = affine(&self.w_o, &self.b_o, &z, sigmoid);
        let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h_t: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
        let cache = GateCache { z, f, i, g, o, c_prev: c_prev.to_vec(), tanh_c };
        Ok((h_t, c, cache))
    }

    /// Backpropagates `dh` (total gradient on `h_t`) and `dc_next` (gradient
    /// on `c_t` from step t+1) through one step, accumulating parameter
    /// gradients into `grads`. Returns `(dh_prev, dc_prev, dx)`; `dx` is empty
    /// unless `want_dx`.
    pub fn backward(
        &self,
        cache: &GateCache,
        dh: &[f64],
        dc_next: &[f64],
        grads: &mut CellParams,
        want_dx: bool,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        let width = h + self.input;
        let mut d_f = vec![0.0; h];
        let mut d_i = vec![0.0; h];
        let mut d_g = vec![0.0; h];
        let mut d_o = vec![0.0; h];
        let mut dc_prev = vec![0.0; h];
        for k in 0..h {
            let (f, i, g, o, tc) = (cache.f[k], cache.i[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
            let dc = dc_next[k] + dh[k] * o * (1.0 - tc * tc);
            d_o[k] = dh[k] * tc * o * (1.0 - o);
            d_f[k] = dc * cache.c_prev[k] * f * (1.0 - f);
            d_i[k] = dc * g * i * (1.0 - i);
            d_g[k] = dc * i * (1.0 - g * g);
            dc_prev[k] = dc * f;
        }
        let upto = if want_dx { width } else { h };
        let mut dz = vec![0.0; upto];
        for (w, gw, gb, d) in [
            (&self.w_f, &mut grads.w_f, &mut grads.b_f, &d_f),
            (&self.w_i, &mut grads.w_i, &mut grads.b_i, &d_i),
            (&self.w_c, &mut grads.w_c, &mut grads.b_c, &d_g),
            (&self.w_o, &mut grads.w_o, &mut grads.b_o, &d_o),
        ] {
            for r in 0..h {
                let dr = d[r];
                if dr == 0.0 {
                    continue;
                }
                gb[r] += dr;
                let row = &w[r * width..(r + 1) * width];
                let grow = &mut gw[r * width..(r + 1) * width];
                for (gv, zv) in grow.iter_mut().zip(&cache.z) {
                    *gv += dr * zv;
                }
                for (dzv, wv) in dz.iter_mut().zip(&row[..upto]) {
                    *dzv += dr * wv;
                }
            }
        }
        let dx = if want_dx { dz.split_off(h) } else { Vec::new() };
        (dz, dc_prev, dx)
    }
}

fn affine(w: &[f64], b: &[f64], z: &[f64], act: fn(f64) -> f64) -> Vec<f64> {
    let width = z.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| {
            let row = &w[r * width..(r + 1) * width];
            act(bias + row.iter().zip(z).map(|(a, v)| a * v).sum::<f64>())
        })
        .collect()
}
