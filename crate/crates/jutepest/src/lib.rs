//! Jute pest classification pipeline: dataset ingestion, preprocessing,
//! augmentation, transfer-learning training, evaluation and reporting.

pub mod augmentation;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod training;
pub mod weights;
pub mod workdir;

pub use error::{Error, Result};
