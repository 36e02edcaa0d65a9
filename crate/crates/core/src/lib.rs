//! Sequence-agnostic probabilistic sign classification over per-frame hand-feature tracks.
//!
//! Each class is modelled per hand by a position factor (first and last position), a movement
//! factor (amount of movement plus a bag of quantized directions) and a handshape factor (a bag
//! of quantized handshapes). Factors are combined in log space with hand-usage gating.
//! An HMM-GMM backend, an evaluation harness and a synthetic data generator are included.

pub mod bow;
pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod eval;
pub mod error;
pub mod handshape;
pub mod hmm;
pub mod movement;
pub mod position;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
