//! Thirty-day hospital readmission prediction for Medicare-age cohorts.
//!
//! The crate covers the whole pipeline: record ingestion and feature
//! derivation ([`cohort`]), synthetic cohorts with a planted generating
//! process ([`synthetic`]), the LACE logistic baseline ([`lace`]), a
//! from-scratch bidirectional LSTM classifier ([`lstm`]), repeated-split
//! evaluation ([`eval`]) and attribution ([`explain`]), tied together by a
//! config-driven command line ([`cli`]).

pub mod cli;
pub mod cohort;
pub mod config;
pub mod error;
pub mod eval;
pub mod explain;
pub mod lace;
mod linalg;
pub mod lstm;
pub mod pipeline;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
