//! Raw trial → five stance-normalized waveforms per foot.

mod filter;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Foot, PlateSeries, Recording, Session, Subject};

pub use filter::{butterworth_lowpass, FilterSpec};

pub const GRAVITY: f64 = 9.81;
pub const WAVEFORM_LEN: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("cut-off {cutoff} Hz is not below the Nyquist frequency {nyquist} Hz")]
    CutoffAboveNyquist { cutoff: f64, nyquist: f64 },
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("signal of {len} samples is too short to filter (need {min})")]
    SignalTooShort { len: usize, min: usize },
    #[error("no stance detected on plate {plate}")]
    NoStanceDetected { plate: usize },
    #[error("stance on plate {plate} spans only {samples} samples (need {min})")]
    DegenerateStance { plate: usize, samples: usize, min: usize },
}

/// Contact interval found by thresholding vertical force.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StanceDetection {
    pub initial_contact: usize,
    pub toe_off: usize,
    /// Number of separate supra-threshold runs; more than one is a warning condition.
    pub runs: usize,
}

/// First and last index of the longest run with `signal >= threshold`. Ties go to the
/// earliest run. A run touching either end of the signal has no crossing and does not count.
pub fn detect_stance(signal: &[f64], threshold: f64) -> Result<StanceDetection, PreprocessError> {
    let mut best: Option<(usize, usize)> = None;
    let mut runs = 0;
    let mut i = 0;
    let n = signal.len();
    while i < n {
        if signal[i] >= threshold {
            let start = i;
            while i < n && signal[i] >= threshold {
                i += 1;
            }
            let end = i - 1;
            if start > 0 && end < n - 1 {
                runs += 1;
                if best.map_or(true, |(s, e)| end - start > e - s) {
                    best = Some((start, end));
                }
            }
        } else {
            i += 1;
        }
    }
    let (ic, to) = best.ok_or(PreprocessError::NoStanceDetected { plate: 0 })?;
    if runs > 1 {
        log::warn!("{runs} supra-threshold runs found; using the longest");
    }
    Ok(StanceDetection {
        initial_contact: ic,
        toe_off: to,
        runs,
    })
}

/// Lab-frame origin of each plate's COP coordinate system, in metres (x = AP, y = ML).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateLayout {
    pub origins: [[f64; 2]; 2],
}

impl Default for PlateLayout {
    fn default() -> Self {
        PlateLayout {
            origins: [[0.0, 0.0], [0.6, 0.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub filter: FilterSpec,
    /// Newtons; vertical force threshold for step detection.
    pub step_threshold: f64,
    /// Newtons; vertical force required for a valid COP sample.
    pub cop_threshold: f64,
    pub min_stance_samples: usize,
    pub plate_layout: PlateLayout,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            filter: FilterSpec::default(),
            step_threshold: 10.0,
            cop_threshold: 30.0,
            min_stance_samples: 50,
            plate_layout: PlateLayout::default(),
        }
    }
}

/// The five normalized stance-phase signals of one foot.
///
/// Forces are in multiples of body weight; `f_ap` is positive forward (propulsive) and
/// `f_ml` positive medial. COP is in multiples of foot length, relative to the first valid
/// COP sample, with `cop_ml` positive medial. Sample `k` sits at stance fraction `k / 999`.
#[derive(Debug, Clone, PartialEq)]
pub struct StanceWaveforms {
    pub foot: Foot,
    pub f_v: Vec<f64>,
    pub f_ap: Vec<f64>,
    pub f_ml: Vec<f64>,
    pub cop_ap: Vec<f64>,
    pub cop_ml: Vec<f64>,
    /// Seconds.
    pub stance_time: f64,
    /// Seconds from the start of the recording.
    pub initial_contact_time: f64,
    pub toe_off_time: f64,
    /// Lab-frame COP (m) at the first valid COP sample.
    pub cop_contact: [f64; 2],
    /// Lab-frame mean COP (m) over the valid COP samples.
    pub cop_mean: [f64; 2],
}

impl StanceWaveforms {
    pub fn signal(&self, which: Signal) -> &[f64] {
        match which {
            Signal::FV => &self.f_v,
            Signal::FAp => &self.f_ap,
            Signal::FMl => &self.f_ml,
            Signal::CopAp => &self.cop_ap,
            Signal::CopMl => &self.cop_ml,
        }
    }
}

/// The five waveform channels, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Signal {
    FV,
    FAp,
    FMl,
    CopAp,
    CopMl,
}

impl Signal {
    pub const ALL: [Signal; 5] = [Signal::FV, Signal::FAp, Signal::FMl, Signal::CopAp, Signal::CopMl];

    pub fn name(self) -> &'static str {
        match self {
            Signal::FV => "F_V",
            Signal::FAp => "F_AP",
            Signal::FMl => "F_ML",
            Signal::CopAp => "COP_AP",
            Signal::CopMl => "COP_ML",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Both feet of one trial, in plate order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialWaveforms {
    pub plates: [StanceWaveforms; 2],
}

impl TrialWaveforms {
    pub fn foot(&self, foot: Foot) -> &StanceWaveforms {
        if self.plates[0].foot == foot {
            &self.plates[0]
        } else {
            &self.plates[1]
        }
    }
}

/// Intermediate per-plate result before the foot side is known.
struct PlateStance {
    ic: usize,
    to: usize,
    fx: Vec<f64>,
    fy: Vec<f64>,
    fz: Vec<f64>,
    cop: Option<CopSegment>,
}

struct CopSegment {
    start: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn process_plate(
    plate: &PlateSeries,
    idx: usize,
    sample_rate: f64,
    cfg: &PreprocessConfig,
) -> Result<PlateStance, PreprocessError> {
    let fx = butterworth_lowpass(&plate.fx, &cfg.filter, sample_rate)?;
    let fy = butterworth_lowpass(&plate.fy, &cfg.filter, sample_rate)?;
    let fz = butterworth_lowpass(&plate.fz, &cfg.filter, sample_rate)?;
    let det =
        detect_stance(&fz, cfg.step_threshold).map_err(|_| PreprocessError::NoStanceDetected { plate: idx + 1 })?;
    let samples = det.toe_off - det.initial_contact + 1;
    if samples < cfg.min_stance_samples {
        return Err(PreprocessError::DegenerateStance {
            plate: idx + 1,
            samples,
            min: cfg.min_stance_samples,
        });
    }
    // longest run inside the stance where the COP is defined
    let (ic, to) = (det.initial_contact, det.toe_off);
    let mut best: Option<(usize, usize)> = None;
    let mut i = ic;
    while i <= to {
        if fz[i] >= cfg.cop_threshold {
            let s = i;
            while i <= to && fz[i] >= cfg.cop_threshold {
                i += 1;
            }
            if best.map_or(true, |(bs, be)| i - 1 - s > be - bs) {
                best = Some((s, i - 1));
            }
        } else {
            i += 1;
        }
    }
    let origin = cfg.plate_layout.origins[idx];
    let cop = best.map(|(s, e)| {
        let raw_x: Vec<f64> = plate.cop_x[s..=e].iter().map(|v| v + origin[0]).collect();
        let raw_y: Vec<f64> = plate.cop_y[s..=e].iter().map(|v| v + origin[1]).collect();
        let smooth = |v: Vec<f64>| butterworth_lowpass(&v, &cfg.filter, sample_rate).unwrap_or(v);
        CopSegment {
            start: s,
            x: smooth(raw_x),
            y: smooth(raw_y),
        }
    });
    Ok(PlateStance {
        ic,
        to,
        fx,
        fy,
        fz,
        cop,
    })
}

fn lerp_at(x: &[f64], pos: f64) -> f64 {
    let i = pos.floor() as usize;
    if i + 1 >= x.len() {
        return x[x.len() - 1];
    }
    let frac = pos - i as f64;
    x[i] + (x[i + 1] - x[i]) * frac
}

/// Position `k` of the 1000-point grid spanning `[ic, to]`, in raw sample units.
fn grid_position(ic: usize, to: usize, k: usize) -> f64 {
    if k == WAVEFORM_LEN - 1 {
        return to as f64;
    }
    ic as f64 + (to - ic) as f64 * k as f64 / (WAVEFORM_LEN - 1) as f64
}

fn build_waveforms(
    st: &PlateStance,
    foot: Foot,
    sample_rate: f64,
    body_weight: f64,
    foot_length: f64,
) -> StanceWaveforms {
    let medial = match foot {
        Foot::Right => 1.0,
        Foot::Left => -1.0,
    };
    let mut wf = StanceWaveforms {
        foot,
        f_v: Vec::with_capacity(WAVEFORM_LEN),
        f_ap: Vec::with_capacity(WAVEFORM_LEN),
        f_ml: Vec::with_capacity(WAVEFORM_LEN),
        cop_ap: Vec::with_capacity(WAVEFORM_LEN),
        cop_ml: Vec::with_capacity(WAVEFORM_LEN),
        stance_time: (st.to - st.ic) as f64 / sample_rate,
        initial_contact_time: st.ic as f64 / sample_rate,
        toe_off_time: st.to as f64 / sample_rate,
        cop_contact: [0.0; 2],
        cop_mean: [0.0; 2],
    };
    for k in 0..WAVEFORM_LEN {
        let pos = grid_position(st.ic, st.to, k);
        wf.f_v.push(lerp_at(&st.fz, pos) / body_weight);
        wf.f_ap.push(lerp_at(&st.fx, pos) / body_weight);
        wf.f_ml.push(medial * lerp_at(&st.fy, pos) / body_weight);
    }
    match &st.cop {
        Some(seg) => {
            let n = seg.x.len();
            let last = (n - 1) as f64;
            let at = |v: &[f64], pos: f64| {
                let rel = (pos - seg.start as f64).clamp(0.0, last);
                lerp_at(v, rel)
            };
            let x0 = seg.x[0];
            let y0 = seg.y[0];
            for k in 0..WAVEFORM_LEN {
                let pos = grid_position(st.ic, st.to, k);
                wf.cop_ap.push((at(&seg.x, pos) - x0) / foot_length);
                wf.cop_ml.push(medial * (at(&seg.y, pos) - y0) / foot_length);
            }
            wf.cop_contact = [x0, y0];
            wf.cop_mean = [
                seg.x.iter().sum::<f64>() / n as f64,
                seg.y.iter().sum::<f64>() / n as f64,
            ];
        }
        None => {
            wf.cop_ap = vec![0.0; WAVEFORM_LEN];
            wf.cop_ml = vec![0.0; WAVEFORM_LEN];
        }
    }
    wf
}

/// Filters, detects stance on each plate, and normalizes time, body weight and foot length.
///
/// The foot on each plate is inferred from the ML position of its mean COP: the foot further
/// towards +y (the walker's left) is the left foot.
pub fn normalize_trial(
    recording: &Recording,
    subject: &Subject,
    session: &Session,
    cfg: &PreprocessConfig,
) -> Result<TrialWaveforms, PreprocessError> {
    let fs = recording.sample_rate;
    let p1 = process_plate(&recording.plates[0], 0, fs, cfg)?;
    let p2 = process_plate(&recording.plates[1], 1, fs, cfg)?;
    let mean_y = |p: &PlateStance| {
        p.cop
            .as_ref()
            .map(|c| c.y.iter().sum::<f64>() / c.y.len() as f64)
            .unwrap_or(0.0)
    };
    let plate1_foot = if mean_y(&p1) >= mean_y(&p2) {
        Foot::Left
    } else {
        Foot::Right
    };
    let bw = subject.body_mass * GRAVITY;
    let fl = session.foot_length;
    Ok(TrialWaveforms {
        plates: [
            build_waveforms(&p1, plate1_foot, fs, bw, fl),
            build_waveforms(&p2, plate1_foot.other(), fs, bw, fl),
        ],
    })
}

/// Writes one foot's waveforms as CSV: `stance_pct,f_v,f_ap,f_ml,cop_ap,cop_ml`.
pub fn write_waveforms_csv(mut w: impl Write, wf: &StanceWaveforms) -> std::io::Result<()> {
    writeln!(w, "stance_pct,f_v,f_ap,f_ml,cop_ap,cop_ml")?;
    for k in 0..WAVEFORM_LEN {
        writeln!(
            w,
            "{:.6},{:.9},{:.9},{:.9},{:.9},{:.9}",
            100.0 * k as f64 / (WAVEFORM_LEN - 1) as f64,
            wf.f_v[k],
            wf.f_ap[k],
            wf.f_ml[k],
            wf.cop_ap[k],
            wf.cop_ml[k]
        )?;
    }
    Ok(())
}

pub fn write_waveforms_file(path: &Path, wf: &StanceWaveforms) -> std::io::Result<()> {
    let f = std::fs::File::create(path)?;
    write_waveforms_csv(std::io::BufWriter::new(f), wf)
}
