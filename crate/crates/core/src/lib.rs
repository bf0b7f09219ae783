//! Algorithmic core of the jute pest classification pipeline.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//! class catalogs and stratified splits, the per-image cleaning chain,
//! geometric augmentation, the frozen feature extractor with its
//! pooling/dropout/softmax head, head training, and the evaluation
//! metrics (confusion matrix, per-class and averaged scores, ROC/AUC).
//! File formats, decoding, plotting and the command line live in the
//! `jutepest` crate.
#![no_std]

extern crate alloc;

pub mod augment;
pub mod backbone;
pub mod catalog;
pub mod head;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod raster;
pub mod roc;
pub mod seed;
pub mod split;
pub mod train;

pub use catalog::ClassCatalog;
pub use raster::{RawImage, RgbImage};
pub use split::{Split, SplitRatios};
