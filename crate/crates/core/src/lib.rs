//! Noise injection nodes (NINs) on feed-forward networks.
//!
//! A NIN is an extra input that emits a random scalar ε per sample; the
//! trainable noise injection weights (NIW) carry it into the preactivations
//! of one hidden layer. This crate trains such networks, simulates the
//! two-layer linear toy model exactly, classifies the noise-scale phases,
//! extracts decay timescales from the gradient-flow limit and checks the
//! batch-moment theorem by Monte Carlo.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod continuum;
pub mod data;
pub mod error;
pub mod figure;
pub mod linear;
pub mod moments;
pub mod net;
pub mod noise;
pub mod phases;

pub use error::{Error, Result};
pub use noise::{NoiseMode, NoiseSpec, NoiseStream};
