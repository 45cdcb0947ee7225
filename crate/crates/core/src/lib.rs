//! Fail-slow disk detection benchmark suite.
//!
//! A desk-scale reproduction of a fail-slow detection pipeline for cloud
//! storage telemetry: a PERSEUS-format data model and synthetic cluster
//! generator, 3-sigma statistical labeling, seven detector families
//! (gradient-boosted ranker, random forest, LSTM and patch-transformer
//! forecasters, autoencoder, isolation forest, SVM, and an LLM protocol
//! client with a mock transport), and a lookback x threshold
//! precision/recall benchmark with heatmap emission.

pub mod autodiff;
pub mod bench;
pub mod csv;
pub mod detectors;
pub mod error;
pub mod gen;
pub mod labeling;
pub mod llm;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
