//! Early detection of developmental anomalies in timed microscopy image
//! sequences: dataset schema, synthetic plates, a spatiotemporal vision
//! transformer, its training loop, and a streaming decision engine.

pub mod data;
pub mod decision;
pub mod error;
pub mod kv;
pub mod model;
pub mod plot;
pub mod synth;
pub mod task;
pub mod train;

pub use error::{Error, Result};
pub use task::{TaskKind, TaskSpec};
