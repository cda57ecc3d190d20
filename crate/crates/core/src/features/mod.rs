//! Discrete and time-distance gait parameters.

mod discrete;
mod params;
mod stats;
mod timedistance;

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, Foot};
use crate::preprocess::{normalize_trial, PreprocessConfig, PreprocessError, Signal, TrialWaveforms};

pub use discrete::{extract_discrete, split_phases, DiscreteParams, PhaseSplit};
pub use params::{Param, ParamKind, ParameterVector, PARAM_COUNT};
pub use stats::{class_statistics, write_class_statistics, ClassStatistic};
pub use timedistance::{aggregate_session, extract_timedistance, SessionTimeDistance, StepObservation};

/// Stride between kept samples when waveforms are stored for PCA.
pub const DECIMATION: usize = 3;
/// Samples per signal after decimation: indices 0, 3, ..., 999.
pub const DECIMATED_LEN: usize = 334;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("F_AP has no braking-to-propulsion sign change")]
    NoSignChange,
    #[error("landmark for {param} not found")]
    LandmarkNotFound { param: Param },
    #[error("only one stance was detected")]
    SinglePlateOnly,
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which foot is analysed for subjects without an affected side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlSide {
    Left,
    Right,
    /// The foot on the first plate.
    #[default]
    FirstContact,
}

impl FromStr for ControlSide {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "left" => Ok(ControlSide::Left),
            "right" => Ok(ControlSide::Right),
            "first-contact" => Ok(ControlSide::FirstContact),
            other => Err(format!("unknown control side '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub preprocess: PreprocessConfig,
    pub control_side: ControlSide,
}

/// Picks the foot whose waveforms describe the trial.
pub fn analysed_foot(affected: Option<Foot>, waveforms: &TrialWaveforms, side: ControlSide) -> Foot {
    affected.unwrap_or(match side {
        ControlSide::Left => Foot::Left,
        ControlSide::Right => Foot::Right,
        ControlSide::FirstContact => waveforms.plates[0].foot,
    })
}

/// Everything kept about one successfully preprocessed trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFeatures {
    /// Position of the trial in [`Dataset::trials`].
    pub trial_index: usize,
    /// Discrete parameters of the analysed foot plus the session's time-distance parameters.
    pub params: ParameterVector,
    /// Parameters that could not be located; the trial is dropped from parameter tables.
    pub flagged: Vec<Param>,
    /// The analysed foot's five signals, decimated to [`DECIMATED_LEN`] samples.
    pub waveforms: [Vec<f64>; 5],
}

impl TrialFeatures {
    pub fn has_complete_params(&self) -> bool {
        self.params.is_complete()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionStage {
    /// Trial could not be preprocessed; it is absent from every representation.
    Preprocess,
    /// Some parameter could not be computed; the trial still has waveforms.
    Landmarks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub trial_id: String,
    pub stage: ExclusionStage,
    pub reason: String,
}

/// Output of the per-trial extraction pass over a dataset.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    /// Preprocessed trials in dataset order.
    pub trials: Vec<TrialFeatures>,
    pub exclusions: Vec<Exclusion>,
    /// Sessions in which every trial led with the same foot.
    pub single_step_sessions: Vec<String>,
}

struct TrialPass {
    waveforms: [Vec<f64>; 5],
    discrete: Result<DiscreteParams, FeatureError>,
    step: StepObservation,
}

fn decimate(x: &[f64]) -> Vec<f64> {
    x.iter().step_by(DECIMATION).copied().collect()
}

fn analyse_trial(ds: &Dataset, idx: usize, cfg: &FeatureConfig) -> Result<TrialPass, FeatureError> {
    let trial = &ds.trials()[idx];
    let recording = trial.recording()?;
    let subject = ds.subject_of_trial(idx);
    let session = ds.session_of_trial(idx);
    let tw = normalize_trial(&recording, subject, session, &cfg.preprocess)?;
    let foot = analysed_foot(subject.affected_side.foot(), &tw, cfg.control_side);
    let wf = tw.foot(foot);
    let step = extract_timedistance(&tw.plates, foot)?;
    let waveforms = Signal::ALL.map(|s| decimate(wf.signal(s)));
    Ok(TrialPass {
        waveforms,
        discrete: extract_discrete(wf),
        step,
    })
}

/// Preprocesses every trial, extracts its parameters and keeps its decimated waveforms.
/// Time-distance parameters are averaged per session over the trials that preprocessed.
pub fn process_dataset(ds: &Dataset, cfg: &FeatureConfig) -> FeatureSet {
    let passes: Vec<Result<TrialPass, FeatureError>> = (0..ds.trials().len())
        .into_par_iter()
        .map(|i| analyse_trial(ds, i, cfg))
        .collect();

    let mut by_session: BTreeMap<usize, Vec<StepObservation>> = BTreeMap::new();
    for (i, pass) in passes.iter().enumerate() {
        if let Ok(p) = pass {
            by_session.entry(ds.session_index_of_trial(i)).or_default().push(p.step);
        }
    }
    let mut single_step_sessions = Vec::new();
    let session_params: BTreeMap<usize, ParameterVector> = by_session
        .into_iter()
        .map(|(s, obs)| {
            let agg = aggregate_session(&obs);
            if agg.single_step_type {
                single_step_sessions.push(ds.sessions()[s].id.clone());
            }
            (s, agg.params)
        })
        .collect();

    let mut out = FeatureSet {
        single_step_sessions,
        ..FeatureSet::default()
    };
    for (i, pass) in passes.into_iter().enumerate() {
        let trial_id = ds.trials()[i].id.clone();
        let pass = match pass {
            Ok(p) => p,
            Err(e) => {
                log::warn!("trial {trial_id} excluded: {e}");
                out.exclusions.push(Exclusion {
                    trial_id,
                    stage: ExclusionStage::Preprocess,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let mut params = ParameterVector::default();
        let mut flagged = Vec::new();
        match pass.discrete {
            Ok(d) => {
                params = d.params;
                flagged = d.flagged;
            }
            Err(e) => {
                log::warn!("trial {trial_id}: {e}");
                flagged.extend(Param::ALL.iter().copied().filter(|p| p.kind() == ParamKind::Discrete));
            }
        }
        params.merge(&session_params[&ds.session_index_of_trial(i)]);
        for p in params.missing() {
            if !flagged.contains(&p) {
                flagged.push(p);
            }
        }
        if !flagged.is_empty() {
            let names: Vec<&str> = flagged.iter().map(|p| p.name()).collect();
            out.exclusions.push(Exclusion {
                trial_id: trial_id.clone(),
                stage: ExclusionStage::Landmarks,
                reason: format!("not computable: {}", names.join(" ")),
            });
        }
        out.trials.push(TrialFeatures {
            trial_index: i,
            params,
            flagged,
            waveforms: pass.waveforms,
        });
    }
    out
}

/// One row per trial with all 52 parameters available.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterTable {
    pub trial_ids: Vec<String>,
    /// Positions in [`Dataset::trials`].
    pub trial_indices: Vec<usize>,
    pub rows: Vec<ParameterVector>,
    pub exclusions: Vec<Exclusion>,
}

impl ParameterTable {
    pub fn from_features(ds: &Dataset, set: &FeatureSet) -> ParameterTable {
        let mut table = ParameterTable {
            exclusions: set.exclusions.clone(),
            ..ParameterTable::default()
        };
        for t in set.trials.iter().filter(|t| t.has_complete_params()) {
            table.trial_ids.push(ds.trials()[t.trial_index].id.clone());
            table.trial_indices.push(t.trial_index);
            table.rows.push(t.params);
        }
        table
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with `trial_id,subject_id,class` followed by the 52 parameter columns.
    pub fn write_csv(&self, ds: &Dataset, mut w: impl Write) -> std::io::Result<()> {
        let names: Vec<&str> = Param::ALL.iter().map(|p| p.name()).collect();
        writeln!(w, "trial_id,subject_id,class,{}", names.join(","))?;
        for ((id, &idx), row) in self.trial_ids.iter().zip(&self.trial_indices).zip(&self.rows) {
            let subject = ds.subject_of_trial(idx);
            write!(w, "{id},{},{}", subject.id, subject.class.code())?;
            for v in row.as_slice() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Writes `trial_id,stage,reason` rows.
pub fn write_exclusions_csv(exclusions: &[Exclusion], w: impl Write) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["trial_id", "stage", "reason"])?;
    for e in exclusions {
        let stage = match e.stage {
            ExclusionStage::Preprocess => "preprocess",
            ExclusionStage::Landmarks => "landmarks",
        };
        wr.write_record([e.trial_id.as_str(), stage, e.reason.as_str()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Parameter table of a dataset: trials that fail preprocessing or have an uncomputable
/// parameter are left out and reported.
pub fn extract_all(ds: &Dataset, cfg: &FeatureConfig) -> ParameterTable {
    ParameterTable::from_features(ds, &process_dataset(ds, cfg))
}
