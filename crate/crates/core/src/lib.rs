//! Pseudo-annotation synthesis and evolution for weakly-supervised video
//! actor-action segmentation.
//!
//! The crate covers the non-neural parts of the pipeline: low-level vision
//! primitives (Otsu, SLIC), superpixel mask refinement, segmentation
//! metrics and the region integrity criterion, gradient-weighted attention
//! assembly, cut-and-paste quality selection, the select-train-predict
//! evolution loop, and the file formats tying them together. Networks are
//! reached only through the [`selection::Discriminator`],
//! [`selection::Classifier`], [`evolution::Trainer`] and
//! [`evolution::Predictor`] traits.

pub mod attention;
pub mod error;
pub mod evolution;
pub mod io;
pub mod lowlevel;
pub mod metrics;
pub mod raster;
pub mod refine;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
