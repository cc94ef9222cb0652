//! Joint analysis of acoustic events and acoustic scenes.
//!
//! A shared convolutional encoder feeds two heads: a bidirectional
//! recurrent event detector emitting per-frame sigmoid posteriors over
//! event classes, and a convolutional scene classifier emitting one
//! softmax posterior per clip. Both are trained jointly by exact
//! backpropagation (through time, for the recurrence) under the weighted
//! objective `E = E1 + alpha * E2`.
//!
//! Modules:
//! - [`features`]: log-mel energy extraction (deterministic, `f64`)
//! - [`nn`]: the differentiable ops with hand-written backward passes
//! - [`model`]: architecture, initialization, forward pass, prediction
//! - [`train`]: losses, backward, Adam, folds, cross-validation
//! - [`metrics`]: segment-based F-score / error rate, scene F-score
//! - [`data`]: annotation parsing, corpora, targets, synthetic corpus
//! - [`checkpoint`]: parameter serialization
//! - [`audio`]: PCM WAV I/O

pub mod audio;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
