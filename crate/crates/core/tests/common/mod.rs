//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use chrono::NaiveDate;
use readmit::cohort::{AdmissionRecord, PatientHistory, Sex};

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

/// Admission `k` of `pid`, no comorbidities, emergency arrival.
pub fn admission(pid: &str, k: usize, admit: &str, discharge: &str) -> AdmissionRecord {
    AdmissionRecord {
        admission_id: format!("{pid}-A{k:03}"),
        patient_id: pid.into(),
        admit_date: date(admit),
        discharge_date: date(discharge),
        acute_admission: true,
        via_emergency_dept: true,
        surgery: false,
        num_medications: Some(5),
        num_consultations: Some(1),
        comorbidity_categories: BTreeSet::new(),
    }
}

/// A patient whose admissions span the given `(admit, discharge)` pairs.
pub fn patient(pid: &str, stays: &[(&str, &str)]) -> PatientHistory {
    PatientHistory {
        patient_id: pid.into(),
        age_at_index: 70,
        sex: Sex::Female,
        admissions: stays.iter().enumerate().map(|(k, (a, d))| admission(pid, k, a, d)).collect(),
    }
}

/// Sequential xorshift generator, independent of the crate's RNG.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}

/// Days since 1970-01-01 of a proleptic Gregorian date (H. Hinnant's algorithm).
pub fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

use readmit::lstm::{bce_loss, LstmNetwork, NetworkConfig};
use readmit::rng::{stream_rng, Rng};

/// A random toy batch: left-padded sequences, each with at least one step.
pub struct ToyBatch {
    pub steps: Vec<Vec<Vec<f64>>>,
    pub masks: Vec<Vec<bool>>,
    pub labels: Vec<bool>,
}

impl ToyBatch {
    pub fn random(rng: &mut XorShift, batch: usize, len: usize, width: usize) -> Self {
        let mut steps = Vec::new();
        let mut masks = Vec::new();
        let mut labels = Vec::new();
        for b in 0..batch {
            let active = 1 + rng.below(len as u64) as usize;
            masks.push((0..len).map(|t| t >= len - active).collect());
            steps.push((0..len).map(|_| (0..width).map(|_| rng.range(-1.5, 1.5)).collect()).collect());
            labels.push(b % 2 == 0);
        }
        Self { steps, masks, labels }
    }

    pub fn refs(&self) -> impl Iterator<Item = (&[Vec<f64>], &[bool])> {
        self.steps.iter().map(Vec::as_slice).zip(self.masks.iter().map(Vec::as_slice))
    }
}

pub fn batch_loss(net: &LstmNetwork, batch: &ToyBatch, dropout: Option<&Rng>) -> f64 {
    let mut rng = dropout.cloned();
    let cache = net.forward(batch.refs(), rng.as_mut()).unwrap();
    bce_loss(&batch.labels, &cache.probabilities()).unwrap()
}

/// Max relative error between BPTT gradients and central differences (step
/// `1e-5`) over every parameter of a random toy network. Relative error uses
/// `max(|analytic|, |numeric|, 1e-6)` as denominator.
pub fn gradient_check(case: u64, hidden: usize, width: usize, len: usize, batch: usize, dropout: bool) -> f64 {
    let mut xs = XorShift(0x9E37_79B9 ^ (case + 1).wrapping_mul(0x2545_F491_4F6C_DD1D));
    let config = NetworkConfig { hidden1: hidden, hidden2: hidden.max(2) - 1, dropout: if dropout { 0.3 } else { 0.0 }, dropout_after_top: true };
    let mut net = LstmNetwork::new(width, config, &mut stream_rng(case, 0)).unwrap();
    // Spread the weights beyond the small init so every gate is exercised.
    for t in net.params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = xs.range(-0.8, 0.8));
    }
    let data = ToyBatch::random(&mut xs, batch, len, width);
    let drop_rng = dropout.then(|| stream_rng(case, 9));
    let mut rng = drop_rng.clone();
    let cache = net.forward(data.refs(), rng.as_mut()).unwrap();
    let grads = net.backward(&cache, &data.labels).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().cloned().collect();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (k, g) in analytic.iter().enumerate() {
        for j in 0..g.len() {
            let orig = net.params.tensors()[k][j];
            net.params.tensors_mut()[k][j] = orig + h;
            let up = batch_loss(&net, &data, drop_rng.as_ref());
            net.params.tensors_mut()[k][j] = orig - h;
            let down = batch_loss(&net, &data, drop_rng.as_ref());
            net.params.tensors_mut()[k][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (g[j] - numeric).abs() / g[j].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Scalar LSTM cell written out gate by gate.
pub fn scalar_cell(w: [[f64; 2]; 4], b: [f64; 4], x: f64, h_prev: f64, c_prev: f64) -> (f64, f64) {
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let f = sig(w[0][0] * h_prev + w[0][1] * x + b[0]);
    let i = sig(w[1][0] * h_prev + w[1][1] * x + b[1]);
    let g = (w[2][0] * h_prev + w[2][1] * x + b[2]).tanh();
    let o = sig(w[3][0] * h_prev + w[3][1] * x + b[3]);
    let c = f * c_prev + i * g;
    (o * c.tanh(), c)
}

/// Exact AUC by counting every positive/negative pair (ties score 1/2).
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0u64;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            num += if si > sj { 2 } else if si == sj { 1 } else { 0 };
        }
    }
    num as f64 / (2 * pairs) as f64
}

/// LACE points written from the published table, band by band.
pub fn lace_table(los: u32, acute: bool, cci: u32, ed: u32) -> u32 {
    let l = if los < 1 {
        0
    } else if los == 1 {
        1
    } else if los == 2 {
        2
    } else if los == 3 {
        3
    } else if los <= 6 {
        4
    } else if los <= 13 {
        6
    } else {
        7
    };
    let a = if acute { 3 } else { 0 };
    let c = if cci >= 4 { 5 } else { cci };
    let e = if ed >= 4 { 4 } else { ed };
    l + a + c + e
}
