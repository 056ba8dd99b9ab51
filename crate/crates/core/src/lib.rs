//! Simultaneous translation laboratory.
//!
//! Trains a small encoder-decoder transformer under sequence-to-sequence,
//! prefix-to-prefix and glancing-future regimes, decodes it under streaming
//! READ/WRITE policies, and scores the output for quality (BLEU), latency
//! (Average Lagging) and hallucination rate.
//!
//! The crate is organised bottom-up:
//!
//! * [`policy`] - wait-k policy vectors and HMT event lattices.
//! * [`curriculum`] - the glance ratio schedule and adjusted (future-extended) policies.
//! * [`masking`] - boolean attention masks derived from adjusted policies.
//! * [`model`] - the transformer, its hand-written backward pass, optimizer and checkpoints.
//! * [`data`] - synthetic tasks, corpus loading, vocabularies and batching.
//! * [`decode`] - streaming greedy decoding with READ/WRITE traces.
//! * [`metrics`] - BLEU, Average Lagging and hallucination rate.
//! * [`experiment`] - configuration files, training/evaluation runs and sweeps.

pub mod curriculum;
pub mod data;
pub mod decode;
pub mod error;
pub mod experiment;
pub mod masking;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod policy;
pub mod real;

pub use error::{Error, Result};
pub use real::Real;
