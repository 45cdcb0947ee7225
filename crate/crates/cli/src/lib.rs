//! Library surface of the `failslow` runner: command implementations,
//! config resolution, and per-family train/detect wiring. The binary in
//! `main.rs` is a thin dispatcher over these.

pub mod commands;
pub mod config;
pub mod model_ops;
