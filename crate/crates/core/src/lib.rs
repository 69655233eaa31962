//! Trace-driven simulator for HTTP adaptive streaming.

pub mod abr;
pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod trace;
pub mod video;
