//! Spatiotemporal graph learning for firn layer thickness.
//!
//! The pipeline turns labeled snow-radar echogram segments into sequences of
//! geographic graphs ([`ingest`], [`graph`]), trains a Chebyshev
//! graph-convolutional LSTM and two baselines on them ([`model`], [`train`]),
//! and reports per-year RMSE ([`report`]). [`synth`] generates synthetic
//! corpora with controllable spatial and temporal structure.

mod codec;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod kv;
pub mod model;
pub mod report;
pub mod rng;
pub mod synth;
pub mod train;

pub use codec::write_atomic;
pub use error::{Error, Result};
