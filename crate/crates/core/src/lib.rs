//! Continual anomaly detection over a fixed-capacity embedding coreset.

pub mod coreset;
pub mod distance;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod tensor_io;
