//! Short-range radar hand-gesture pipeline.
//!
//! The crate covers the whole chain from raw I/Q sweeps to class scores:
//!
//! * [`radar_io`]: sweep recordings, the `TRD1` container, framing and a
//!   point-target simulator with a closed-form Doppler oracle.
//! * [`features`]: range-frequency Doppler maps (RFDM) and auxiliary features.
//! * [`nn`]: float64 layer kernels with forward and backward passes.
//! * [`model`]: the 2D CNN + causal dilated TCN graph, parameter and MAC accounting.
//! * [`train`]: Adam, per-step cross-entropy, CV5 / leave-one-user-out splits, metrics.
//! * [`quant`]: post-training quantization, integer inference and static memory planning.

pub mod error;
pub mod features;
pub mod model;
pub mod nn;
pub mod quant;
pub mod radar_io;
pub mod train;

pub use error::{Error, Result};
