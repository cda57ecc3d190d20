use thiserror::Error;

use crate::classification::ClassifyError;
use crate::dataset::DatasetError;
use crate::discriminativity::LdaError;
use crate::experiments::ExperimentError;
use crate::features::FeatureError;
use crate::preprocess::PreprocessError;
use crate::representations::RepresentationError;
use crate::synth::SynthError;

/// Umbrella error for pipeline entry points that cross module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Representation(#[from] RepresentationError),
    #[error(transparent)]
    Lda(#[from] LdaError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Coarse error taxonomy used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dataset(_) | Error::Synth(_) => ErrorKind::Data,
            Error::Experiment(e) => match e {
                ExperimentError::Classify(c) => classify_kind(c),
                ExperimentError::Representation(r) => representation_kind(r),
                _ => ErrorKind::Data,
            },
            Error::Preprocess(e) => match e {
                PreprocessError::CutoffAboveNyquist { .. } => ErrorKind::Numerical,
                _ => ErrorKind::Data,
            },
            Error::Feature(_) => ErrorKind::Data,
            Error::Representation(e) => representation_kind(e),
            Error::Lda(_) => ErrorKind::Numerical,
            Error::Classify(e) => classify_kind(e),
        }
    }
}

fn representation_kind(e: &RepresentationError) -> ErrorKind {
    match e {
        RepresentationError::DimensionMismatch { .. } | RepresentationError::IncompleteModel(_) => ErrorKind::Data,
        _ => ErrorKind::Numerical,
    }
}

fn classify_kind(e: &ClassifyError) -> ErrorKind {
    match e {
        ClassifyError::NonConvergence { .. } | ClassifyError::DivergingLoss { .. } => ErrorKind::Numerical,
        _ => ErrorKind::Data,
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
