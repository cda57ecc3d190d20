//! Gait classification from ground reaction forces: preprocessing, parameter extraction,
//! waveform and parameter representations, discriminativity analysis, classifiers and
//! experiment pipelines, plus a synthetic data generator.

pub mod classification;
pub mod dataset;
pub mod discriminativity;
pub mod error;
pub mod experiments;
pub mod features;
pub mod linalg;
pub mod preprocess;
pub mod representations;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
