//! Bilateral step quantities from the two stances of a trial, and their session means.

use serde::{Deserialize, Serialize};

use super::params::{Param, ParameterVector};
use super::FeatureError;
use crate::dataset::Foot;
use crate::preprocess::StanceWaveforms;

/// What one trial contributes to the time-distance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepObservation {
    /// Foot whose initial contact came first.
    pub leading_foot: Foot,
    /// AP lab distance between the two initial-contact COPs (m).
    pub step_length: f64,
    /// Time between the two initial contacts (s).
    pub step_time: f64,
    /// ML lab distance between the two mean COPs (m).
    pub step_width: f64,
    /// Overlap of the two stance intervals (s).
    pub double_support: f64,
    /// Stance time of the analysed foot (s).
    pub stance_time: f64,
}

impl StepObservation {
    /// Step velocity in km/h.
    pub fn step_velocity(&self) -> f64 {
        self.step_length / self.step_time * 3.6
    }
}

/// Builds the step observation of one trial; `analysed` selects which foot's stance time is
/// reported.
pub fn extract_timedistance(plates: &[StanceWaveforms], analysed: Foot) -> Result<StepObservation, FeatureError> {
    let [a, b] = match plates {
        [a, b] => [a, b],
        _ => return Err(FeatureError::SinglePlateOnly),
    };
    let (lead, trail) = if a.initial_contact_time <= b.initial_contact_time {
        (a, b)
    } else {
        (b, a)
    };
    let overlap = lead.toe_off_time.min(trail.toe_off_time) - lead.initial_contact_time.max(trail.initial_contact_time);
    let stance_time = if a.foot == analysed {
        a.stance_time
    } else {
        b.stance_time
    };
    Ok(StepObservation {
        leading_foot: lead.foot,
        step_length: (trail.cop_contact[0] - lead.cop_contact[0]).abs(),
        step_time: trail.initial_contact_time - lead.initial_contact_time,
        step_width: (a.cop_mean[1] - b.cop_mean[1]).abs(),
        double_support: overlap.max(0.0),
        stance_time,
    })
}

/// Session means of the ten time-distance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTimeDistance {
    pub params: ParameterVector,
    /// Only one leading foot was observed, so both stride halves come from the same step.
    pub single_step_type: bool,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Averages the trials of one session. Stride length and stride time add the mean step of
/// each leading foot; if every trial led with the same foot, that step stands in for both.
pub fn aggregate_session(obs: &[StepObservation]) -> SessionTimeDistance {
    let mut p = ParameterVector::default();
    if obs.is_empty() {
        return SessionTimeDistance {
            params: p,
            single_step_type: false,
        };
    }
    p[Param::St] = mean(obs.iter().map(|o| o.stance_time));
    p[Param::Ds] = mean(obs.iter().map(|o| o.double_support));
    p[Param::StepLen] = mean(obs.iter().map(|o| o.step_length));
    p[Param::StepWd] = mean(obs.iter().map(|o| o.step_width));
    p[Param::StepV] = mean(obs.iter().map(|o| o.step_velocity()));

    let group = |foot: Foot| -> Vec<&StepObservation> { obs.iter().filter(|o| o.leading_foot == foot).collect() };
    let left = group(Foot::Left);
    let right = group(Foot::Right);
    let halves: Vec<Vec<&StepObservation>> = if left.is_empty() || right.is_empty() {
        let only = if left.is_empty() { right } else { left };
        vec![only.clone(), only]
    } else {
        vec![left, right]
    };
    let single = obs.iter().all(|o| o.leading_foot == obs[0].leading_foot);
    let half_mean = |g: &Vec<&StepObservation>, f: &dyn Fn(&StepObservation) -> f64| mean(g.iter().map(|o| f(o)));
    let stride_len: f64 = halves.iter().map(|g| half_mean(g, &|o| o.step_length)).sum();
    let stride_time: f64 = halves.iter().map(|g| half_mean(g, &|o| o.step_time)).sum();
    let gait_velocity = halves.iter().map(|g| half_mean(g, &|o| o.step_velocity())).sum::<f64>() / halves.len() as f64;
    p[Param::StrLen] = stride_len;
    p[Param::StrideT] = stride_time;
    p[Param::Gv] = gait_velocity;
    p[Param::Bf] = 1.0 / stride_time;
    p[Param::Cad] = 120.0 / stride_time;
    SessionTimeDistance {
        params: p,
        single_step_type: single,
    }
}
