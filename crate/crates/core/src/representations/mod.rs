//! Feature representations: raw parameter vectors, per-signal waveform PCA and PCA of the
//! parameters, with train-split normalization.

mod pca;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureSet, Param, ParameterTable, DECIMATED_LEN};
use crate::linalg::FeatureMatrix;
use crate::preprocess::Signal;

pub use pca::{pca_fit, retained_for_target, PcaModel};

#[derive(Debug, Error)]
pub enum RepresentationError {
    #[error("data has zero total variance")]
    DegenerateData,
    #[error("need at least 2 rows and 1 column, got {rows}x{cols}")]
    TooFewSamples { rows: usize, cols: usize },
    #[error("expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("retained-variance target {0} is outside (0, 1]")]
    InvalidTarget(f64),
    #[error("normalization fit split is empty")]
    EmptyFitSplit,
    #[error("every column is constant on the fit split")]
    AllColumnsConstant,
    #[error("stored representation is incomplete: {0}")]
    IncompleteModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    None,
    ZScore,
    MinMax,
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Normalization::None),
            "zscore" | "z-score" | "z" => Ok(Normalization::ZScore),
            "minmax" | "min-max" => Ok(Normalization::MinMax),
            other => Err(format!("unknown normalization '{other}'")),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::ZScore => "zscore",
            Normalization::MinMax => "minmax",
        })
    }
}

/// Per-column affine map `(x - offset) / scale`, fit on the rows of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub method: Normalization,
    /// Identifies the rows the statistics were computed from.
    pub split_id: String,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    /// Columns with zero spread on the fit rows; they pass through unchanged.
    pub passthrough: Vec<usize>,
}

impl NormalizationStats {
    pub fn fit(
        data: &FeatureMatrix,
        fit_rows: &[usize],
        method: Normalization,
        split_id: &str,
    ) -> Result<NormalizationStats, RepresentationError> {
        if fit_rows.is_empty() {
            return Err(RepresentationError::EmptyFitSplit);
        }
        let d = data.ncols();
        let mut offset = vec![0.0; d];
        let mut scale = vec![1.0; d];
        let mut passthrough = Vec::new();
        if method != Normalization::None {
            let n = fit_rows.len() as f64;
            for j in 0..d {
                let values = fit_rows.iter().map(|&i| data.get(i, j));
                let (o, s) = match method {
                    Normalization::ZScore => {
                        let mean = values.clone().sum::<f64>() / n;
                        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        (mean, var.sqrt())
                    }
                    Normalization::MinMax => {
                        let (lo, hi) =
                            values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                        (lo, hi - lo)
                    }
                    Normalization::None => unreachable!(),
                };
                if s > 0.0 && s.is_finite() {
                    offset[j] = o;
                    scale[j] = s;
                } else {
                    log::warn!("column {j} has zero spread on the fit split; passed through unchanged");
                    passthrough.push(j);
                }
            }
        }
        Ok(NormalizationStats {
            method,
            split_id: split_id.to_string(),
            offset,
            scale,
            passthrough,
        })
    }

    pub fn apply(&self, data: &FeatureMatrix) -> Result<FeatureMatrix, RepresentationError> {
        if data.ncols() != self.offset.len() {
            return Err(RepresentationError::DimensionMismatch {
                expected: self.offset.len(),
                found: data.ncols(),
            });
        }
        let mut out = data.clone();
        for i in 0..out.nrows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.offset[j]) / self.scale[j];
            }
        }
        Ok(out)
    }
}

/// What a representation is built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepresentationKind {
    /// The 52 parameters.
    Params,
    /// Concatenated per-signal PCA scores, in canonical signal order.
    PcaSignals(Vec<Signal>),
    /// PCA of the parameters after the given column normalization.
    PcaOfParams(Normalization),
}

impl RepresentationKind {
    pub fn all_forces() -> RepresentationKind {
        RepresentationKind::PcaSignals(vec![Signal::FV, Signal::FAp, Signal::FMl])
    }

    pub fn all_five() -> RepresentationKind {
        RepresentationKind::PcaSignals(Signal::ALL.to_vec())
    }

    pub fn cop() -> RepresentationKind {
        RepresentationKind::PcaSignals(vec![Signal::CopAp, Signal::CopMl])
    }

    /// Short identifier used in file names and reports.
    pub fn name(&self) -> String {
        match self {
            RepresentationKind::Params => "PARAMS".into(),
            RepresentationKind::PcaSignals(s) if s.as_slice() == Signal::ALL => "PCA_ALL5".into(),
            RepresentationKind::PcaSignals(s) if s.as_slice() == [Signal::FV, Signal::FAp, Signal::FMl] => {
                "PCA_F_ALL".into()
            }
            RepresentationKind::PcaSignals(s) if s.as_slice() == [Signal::CopAp, Signal::CopMl] => "PCA_COP".into(),
            RepresentationKind::PcaSignals(s) => {
                let names: Vec<&str> = s.iter().map(|x| x.name()).collect();
                format!("PCA_{}", names.join("+"))
            }
            RepresentationKind::PcaOfParams(n) => {
                format!("PCA_OF_PARAMS_{}", n.to_string().to_uppercase())
            }
        }
    }

    /// Parses a command-line representation type: `params`, `pca-f`, `pca-all5`, `pca-cop`,
    /// `pca-of-params` (z-scored first), `pca-of-params-minmax`, or `pca-<signal>`.
    pub fn parse_cli(s: &str) -> Result<RepresentationKind, String> {
        Ok(match s {
            "params" => RepresentationKind::Params,
            "pca-f" => RepresentationKind::all_forces(),
            "pca-all5" => RepresentationKind::all_five(),
            "pca-cop" => RepresentationKind::cop(),
            "pca-of-params" | "pca-of-params-zscore" => RepresentationKind::PcaOfParams(Normalization::ZScore),
            "pca-of-params-minmax" => RepresentationKind::PcaOfParams(Normalization::MinMax),
            other => {
                let sig = other
                    .strip_prefix("pca-")
                    .and_then(|rest| Signal::ALL.iter().find(|s| s.name().eq_ignore_ascii_case(rest)))
                    .ok_or_else(|| format!("unknown representation type '{other}'"))?;
                RepresentationKind::PcaSignals(vec![*sig])
            }
        })
    }
}

/// A feature matrix whose rows are trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub kind: RepresentationKind,
    /// Positions in `Dataset::trials` of each row.
    pub trial_indices: Vec<usize>,
    pub matrix: FeatureMatrix,
    pub columns: Vec<String>,
    /// Column normalization applied to `matrix`, if any.
    pub normalization: Option<NormalizationStats>,
    /// Normalization applied to the parameters before PCA (PCA of parameters only).
    pub pre_normalization: Option<NormalizationStats>,
    /// Fitted PCA models, keyed by signal name or `PARAMS`.
    pub pca: Vec<(String, PcaModel)>,
    /// Input columns removed because they were constant on the fit split.
    pub dropped_columns: Vec<String>,
}

/// Serializable part of a representation: everything except the feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationModel {
    pub name: String,
    pub kind: RepresentationKind,
    pub columns: Vec<String>,
    pub normalization: Option<NormalizationStats>,
    pub pre_normalization: Option<NormalizationStats>,
    pub pca: Vec<(String, PcaModel)>,
    pub dropped_columns: Vec<String>,
}

impl Representation {
    pub fn name(&self) -> String {
        self.kind.name()
    }

    pub fn dims(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn model(&self) -> RepresentationModel {
        RepresentationModel {
            name: self.name(),
            kind: self.kind.clone(),
            columns: self.columns.clone(),
            normalization: self.normalization.clone(),
            pre_normalization: self.pre_normalization.clone(),
            pca: self.pca.clone(),
            dropped_columns: self.dropped_columns.clone(),
        }
    }

    /// Keeps only the given rows (positions into this representation).
    pub fn select_rows(&self, rows: &[usize]) -> Representation {
        Representation {
            trial_indices: rows.iter().map(|&r| self.trial_indices[r]).collect(),
            matrix: self.matrix.select_rows(rows),
            ..self.clone()
        }
    }
}

impl RepresentationModel {
    /// Re-applies the fitted maps to other data. Rows follow `table` for parameter-based
    /// kinds and `set.trials` for waveform PCA; the returned indices say which trial each
    /// row is.
    pub fn transform(
        &self,
        set: &FeatureSet,
        table: &ParameterTable,
    ) -> Result<(Vec<usize>, FeatureMatrix), RepresentationError> {
        let (indices, raw) = match &self.kind {
            RepresentationKind::Params => (table.trial_indices.clone(), params_representation(table).matrix),
            RepresentationKind::PcaSignals(_) => {
                let blocks =
                    self.pca
                        .iter()
                        .map(|(name, model)| {
                            let signal = Signal::ALL.iter().find(|s| s.name() == name).ok_or_else(|| {
                                RepresentationError::IncompleteModel(format!("unknown signal {name}"))
                            })?;
                            model.project(&signal_matrix(set, *signal))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                let refs: Vec<&FeatureMatrix> = blocks.iter().collect();
                (
                    set.trials.iter().map(|t| t.trial_index).collect(),
                    FeatureMatrix::hstack(&refs),
                )
            }
            RepresentationKind::PcaOfParams(_) => {
                let pre = self
                    .pre_normalization
                    .as_ref()
                    .ok_or_else(|| RepresentationError::IncompleteModel("missing parameter normalization".into()))?;
                let (_, model) = self
                    .pca
                    .first()
                    .ok_or_else(|| RepresentationError::IncompleteModel("missing parameter PCA".into()))?;
                let normalized = pre.apply(&params_representation(table).matrix)?;
                let kept: Vec<usize> = Param::ALL
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| !self.dropped_columns.iter().any(|d| d == p.name()))
                    .map(|(j, _)| j)
                    .collect();
                (
                    table.trial_indices.clone(),
                    model.project(&normalized.select_cols(&kept))?,
                )
            }
        };
        let matrix = match &self.normalization {
            Some(stats) => stats.apply(&raw)?,
            None => raw,
        };
        Ok((indices, matrix))
    }
}

/// Normalizes every column with statistics fit on `fit_rows` only.
pub fn normalize(
    rep: &Representation,
    method: Normalization,
    fit_rows: &[usize],
    split_id: &str,
) -> Result<Representation, RepresentationError> {
    let stats = NormalizationStats::fit(&rep.matrix, fit_rows, method, split_id)?;
    Ok(Representation {
        matrix: stats.apply(&rep.matrix)?,
        normalization: Some(stats),
        ..rep.clone()
    })
}

pub fn params_representation(table: &ParameterTable) -> Representation {
    Representation {
        kind: RepresentationKind::Params,
        trial_indices: table.trial_indices.clone(),
        matrix: FeatureMatrix::from_rows(&table.rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>()),
        columns: Param::ALL.iter().map(|p| p.name().to_string()).collect(),
        normalization: None,
        pre_normalization: None,
        pca: Vec::new(),
        dropped_columns: Vec::new(),
    }
}

/// Decimated waveforms of one signal, one row per trial of the feature set.
pub fn signal_matrix(set: &FeatureSet, signal: Signal) -> FeatureMatrix {
    let mut data = Vec::with_capacity(set.trials.len() * DECIMATED_LEN);
    for t in &set.trials {
        data.extend_from_slice(&t.waveforms[signal.index()]);
    }
    FeatureMatrix::from_vec(set.trials.len(), DECIMATED_LEN, data)
}

/// Per-signal PCA fit on `fit_rows` (positions into `set.trials`), projecting every trial.
/// Scores are concatenated in canonical signal order.
pub fn build_waveform_representation(
    set: &FeatureSet,
    signals: &[Signal],
    target_variance: f64,
    fit_rows: &[usize],
) -> Result<Representation, RepresentationError> {
    let mut signals = signals.to_vec();
    signals.sort();
    signals.dedup();
    let fitted: Vec<Result<(Signal, PcaModel, FeatureMatrix), RepresentationError>> = signals
        .par_iter()
        .map(|&s| {
            let all = signal_matrix(set, s);
            let model = pca_fit(&all.select_rows(fit_rows), target_variance)?;
            let scores = model.project(&all)?;
            Ok((s, model, scores))
        })
        .collect();
    let fitted = fitted.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut columns = Vec::new();
    for (s, model, _) in &fitted {
        columns.extend((1..=model.retained).map(|k| format!("{}_PC{k}", s.name())));
    }
    let blocks: Vec<&FeatureMatrix> = fitted.iter().map(|(_, _, m)| m).collect();
    Ok(Representation {
        kind: RepresentationKind::PcaSignals(signals),
        trial_indices: set.trials.iter().map(|t| t.trial_index).collect(),
        matrix: FeatureMatrix::hstack(&blocks),
        columns,
        normalization: None,
        pre_normalization: None,
        pca: fitted.into_iter().map(|(s, m, _)| (s.name().to_string(), m)).collect(),
        dropped_columns: Vec::new(),
    })
}

/// Normalizes the parameter columns (statistics from `fit_rows`), drops columns that are
/// constant on the fit rows, and projects onto the PCA of the fit rows.
pub fn build_param_pca_representation(
    table: &ParameterTable,
    pre_normalization: Normalization,
    target_variance: f64,
    fit_rows: &[usize],
    split_id: &str,
) -> Result<Representation, RepresentationError> {
    let base = params_representation(table);
    let stats = NormalizationStats::fit(&base.matrix, fit_rows, pre_normalization, split_id)?;
    let normalized = stats.apply(&base.matrix)?;
    let mut dropped_columns = Vec::new();
    let kept: Vec<usize> = (0..base.matrix.ncols())
        .filter(|j| {
            let constant = if stats.passthrough.contains(j) {
                true
            } else {
                let first = normalized.get(fit_rows[0], *j);
                fit_rows.iter().all(|&i| normalized.get(i, *j) == first)
            };
            if constant {
                log::warn!("parameter {} is constant on the fit split; dropped", base.columns[*j]);
                dropped_columns.push(base.columns[*j].clone());
            }
            !constant
        })
        .collect();
    if kept.is_empty() {
        return Err(RepresentationError::AllColumnsConstant);
    }
    let reduced = normalized.select_cols(&kept);
    let model = pca_fit(&reduced.select_rows(fit_rows), target_variance)?;
    let scores = model.project(&reduced)?;
    Ok(Representation {
        kind: RepresentationKind::PcaOfParams(pre_normalization),
        trial_indices: base.trial_indices,
        matrix: scores,
        columns: (1..=model.retained).map(|k| format!("PARAM_PC{k}")).collect(),
        normalization: None,
        pre_normalization: Some(stats),
        pca: vec![("PARAMS".to_string(), model)],
        dropped_columns,
    })
}

/// Row positions `0..n`, for fitting on every row.
pub fn all_rows(n: usize) -> Vec<usize> {
    (0..n).collect()
}
