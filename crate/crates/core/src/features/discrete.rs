//! Per-foot landmarks, averages, impulses and COP descriptors.

use serde::{Deserialize, Serialize};

use super::params::{Param, ParameterVector};
use super::FeatureError;
use crate::preprocess::StanceWaveforms;

/// Boundary between the braking and propulsive phases of one stance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSplit {
    /// Fractional sample position of the upward zero crossing of F_AP.
    pub crossover: f64,
    /// `crossover` as percent of stance.
    pub crossover_pct: f64,
    /// First sample of the propulsive phase; braking is `0..propulsion_start`.
    pub propulsion_start: usize,
}

/// Locates the last upward zero crossing of `f_ap` between its global minimum and its
/// global maximum.
pub fn split_phases(f_ap: &[f64]) -> Result<PhaseSplit, FeatureError> {
    if f_ap.len() < 2 {
        return Err(FeatureError::NoSignChange);
    }
    let imin = argmin(f_ap, 0, f_ap.len() - 1);
    let imax = argmax(f_ap, 0, f_ap.len() - 1);
    if !(f_ap[imin] < 0.0 && f_ap[imax] > 0.0 && imin < imax) {
        return Err(FeatureError::NoSignChange);
    }
    let k = (imin..imax)
        .rev()
        .find(|&k| f_ap[k] < 0.0)
        .expect("minimum is negative");
    let (a, b) = (f_ap[k], f_ap[k + 1]);
    let crossover = k as f64 + (-a) / (b - a);
    Ok(PhaseSplit {
        crossover,
        crossover_pct: 100.0 * crossover / (f_ap.len() - 1) as f64,
        propulsion_start: k + 1,
    })
}

/// Earliest index of the maximum on `lo..=hi`.
pub(crate) fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo + 1..=hi {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

/// Earliest index of the minimum on `lo..=hi`.
pub(crate) fn argmin(x: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo + 1..=hi {
        if x[i] < x[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Part {
    Whole,
    Positive,
    Negative,
}

/// Integral of the piecewise-linear interpolant of `x` over sample positions `[a, b]`,
/// in sample units.
pub(crate) fn integrate(x: &[f64], a: f64, b: f64, part: Part) -> f64 {
    let mut total = 0.0;
    let first = a.floor() as usize;
    let last = (b.ceil() as usize).min(x.len() - 1);
    for i in first..last {
        let l = a.max(i as f64);
        let r = b.min((i + 1) as f64);
        if r <= l {
            continue;
        }
        let at = |p: f64| x[i] + (x[i + 1] - x[i]) * (p - i as f64);
        let (vl, vr) = (at(l), at(r));
        total += match part {
            Part::Whole => 0.5 * (vl + vr) * (r - l),
            Part::Positive => positive_part(vl, vr, r - l),
            Part::Negative => -positive_part(-vl, -vr, r - l),
        };
    }
    total
}

/// Integral of `max(v, 0)` for `v` linear from `vl` to `vr` over `width`.
fn positive_part(vl: f64, vr: f64, width: f64) -> f64 {
    if vl >= 0.0 && vr >= 0.0 {
        0.5 * (vl + vr) * width
    } else if vl <= 0.0 && vr <= 0.0 {
        0.0
    } else {
        let pos = vl.max(vr);
        let frac = pos / (vl - vr).abs();
        0.5 * pos * frac * width
    }
}

/// Length (sample units) of the subset of `[a, b]` where the interpolant is strictly
/// positive (`positive = true`) or strictly negative.
pub(crate) fn measure(x: &[f64], a: f64, b: f64, positive: bool) -> f64 {
    let s = if positive { 1.0 } else { -1.0 };
    let mut total = 0.0;
    let first = a.floor() as usize;
    let last = (b.ceil() as usize).min(x.len() - 1);
    for i in first..last {
        let l = a.max(i as f64);
        let r = b.min((i + 1) as f64);
        if r <= l {
            continue;
        }
        let at = |p: f64| s * (x[i] + (x[i + 1] - x[i]) * (p - i as f64));
        let (vl, vr) = (at(l), at(r));
        total += if vl > 0.0 && vr > 0.0 {
            r - l
        } else if vl <= 0.0 && vr <= 0.0 {
            0.0
        } else {
            (r - l) * vl.max(vr) / (vl - vr).abs()
        };
    }
    total
}

/// First fractional position in `from..=to` where `x` rises to `level`, interpolated
/// between samples. `None` if `x[from]` is already at or above `level`.
fn first_rise(x: &[f64], from: usize, to: usize, level: f64) -> Option<f64> {
    if x[from] >= level {
        return None;
    }
    (from + 1..=to).find(|&k| x[k] >= level).map(|k| {
        let (a, b) = (x[k - 1], x[k]);
        (k - 1) as f64 + (level - a) / (b - a)
    })
}

/// First fractional position in `from..=to` where `x` falls to `level`.
fn first_fall(x: &[f64], from: f64, to: usize, level: f64) -> Option<f64> {
    let start = from.floor() as usize;
    if interp(x, from) <= level {
        return None;
    }
    (start + 1..=to).find(|&k| x[k] <= level && k as f64 > from).map(|k| {
        let (a, b) = (x[k - 1], x[k]);
        let p = (k - 1) as f64 + (a - level) / (a - b);
        p.max(from)
    })
}

fn interp(x: &[f64], p: f64) -> f64 {
    let i = (p.floor() as usize).min(x.len() - 1);
    if i + 1 >= x.len() {
        return x[i];
    }
    x[i] + (x[i + 1] - x[i]) * (p - i as f64)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Result of a per-foot extraction: the 42 waveform parameters, with any that could not
/// be located left as `NaN` and listed in `flagged`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteParams {
    pub params: ParameterVector,
    pub split: PhaseSplit,
    pub flagged: Vec<Param>,
}

pub fn extract_discrete(wf: &StanceWaveforms) -> Result<DiscreteParams, FeatureError> {
    let n = wf.f_v.len();
    if n < 3 || wf.f_ap.len() != n || wf.f_ml.len() != n || wf.cop_ap.len() != n || wf.cop_ml.len() != n {
        return Err(FeatureError::InvalidWaveform(format!(
            "expected five equal-length waveforms of at least 3 samples, got F_V length {n}"
        )));
    }
    let last = n - 1;
    let pct = |i: usize| 100.0 * i as f64 / last as f64;
    // seconds per sample
    let dt = wf.stance_time / last as f64;
    let split = split_phases(&wf.f_ap)?;
    let ps = split.propulsion_start;
    let brake_end = ps - 1;

    let mut p = ParameterVector::default();
    let mut flagged = Vec::new();
    let (fv, fap, fml) = (&wf.f_v, &wf.f_ap, &wf.f_ml);

    let iv1 = argmax(fv, 0, brake_end);
    let iv3 = argmax(fv, ps, last);
    let iv2 = argmin(fv, iv1, iv3);
    p[Param::Fv1] = fv[iv1];
    p[Param::Fv2] = fv[iv2];
    p[Param::Fv3] = fv[iv3];
    p[Param::Tv1] = pct(iv1);
    p[Param::Tv2] = pct(iv2);
    p[Param::Tv3] = pct(iv3);

    let iap2 = argmin(fap, 0, brake_end);
    let iap3 = argmax(fap, ps, last);
    let iap1 = argmax(fap, 0, iap2);
    p[Param::Fap1] = fap[iap1];
    p[Param::Fap2] = fap[iap2];
    p[Param::Fap3] = fap[iap3];
    p[Param::Tap1] = pct(iap1);
    p[Param::Tap2] = pct(iap2);
    p[Param::Tap3] = pct(iap3);

    let iml1 = argmin(fml, 0, brake_end);
    let iml2 = argmax(fml, 0, brake_end);
    let iml3 = argmax(fml, ps, last);
    p[Param::Fml1] = fml[iml1];
    p[Param::Fml2] = fml[iml2];
    p[Param::Fml3] = fml[iml3];
    p[Param::Tml1] = pct(iml1);
    p[Param::Tml2] = pct(iml2);
    p[Param::Tml3] = pct(iml3);

    p[Param::FvAvg] = mean(fv);
    p[Param::FapAvg] = mean(fap);
    p[Param::FmlAvg] = mean(fml);

    let end = last as f64;
    let impulse = |x: &[f64], a: f64, b: f64, part: Part| 100.0 * dt * integrate(x, a, b, part);
    p[Param::IfV] = impulse(fv, 0.0, end, Part::Whole);
    p[Param::IfAp] = impulse(fap, 0.0, end, Part::Whole);
    p[Param::IfMl] = impulse(fml, 0.0, end, Part::Whole);
    p[Param::IfV1] = impulse(fv, 0.0, iv1 as f64, Part::Whole);
    p[Param::IfV2] = impulse(fv, 0.0, iv2 as f64, Part::Whole);
    p[Param::IfV3] = impulse(fv, 0.0, iv3 as f64, Part::Whole);
    p[Param::IfApDec] = impulse(fap, 0.0, split.crossover, Part::Whole);
    p[Param::IfApAcc] = impulse(fap, split.crossover, end, Part::Whole);
    p[Param::IfLat] = impulse(fml, 0.0, end, Part::Negative);
    p[Param::IfMed] = impulse(fml, 0.0, end, Part::Positive);

    match cop_line(&wf.cop_ap, &wf.cop_ml) {
        Some((angle, dev)) => {
            p[Param::CopAng] = angle;
            p[Param::CopDev] = dev;
        }
        None => flagged.extend([Param::CopAng, Param::CopDev]),
    }
    let range = |x: &[f64]| {
        let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        hi - lo
    };
    p[Param::CopAp] = range(&wf.cop_ap);
    p[Param::CopMl] = range(&wf.cop_ml);
    // one foot length per stance time, in foot lengths per second
    p[Param::CopV] = 1.0 / wf.stance_time;

    p[Param::DecT] = dt * measure(fap, 0.0, split.crossover, false);
    p[Param::AccT] = dt * measure(fap, split.crossover, end, true);

    let at_time = |pos: f64| pos * dt;
    let f_v1 = fv[iv1];
    match (first_rise(fv, 0, iv1, 0.2 * f_v1), first_rise(fv, 0, iv1, 0.8 * f_v1)) {
        (Some(t20), Some(t80)) => {
            p[Param::Lr0080] = (0.8 * f_v1 - fv[0]) / at_time(t80);
            p[Param::Lr2080] = 0.6 * f_v1 / at_time(t80 - t20);
        }
        (None, Some(t80)) => {
            p[Param::Lr0080] = (0.8 * f_v1 - fv[0]) / at_time(t80);
            flagged.push(Param::Lr2080);
        }
        _ => flagged.extend([Param::Lr0080, Param::Lr2080]),
    }
    let f_v3 = fv[iv3];
    match first_fall(fv, iv3 as f64, last, 0.8 * f_v3) {
        Some(t80) => {
            if t80 < end {
                p[Param::Ur8000] = (fv[last] - 0.8 * f_v3) / at_time(end - t80);
            } else {
                flagged.push(Param::Ur8000);
            }
            match first_fall(fv, t80, last, 0.2 * f_v3) {
                Some(t20) if t20 > t80 => {
                    p[Param::Ur8020] = -0.6 * f_v3 / at_time(t20 - t80);
                }
                _ => flagged.push(Param::Ur8020),
            }
        }
        None => flagged.extend([Param::Ur8000, Param::Ur8020]),
    }
    for q in [Param::Lr0080, Param::Lr2080, Param::Ur8000, Param::Ur8020] {
        if !p[q].is_finite() && !flagged.contains(&q) {
            flagged.push(q);
        }
    }
    Ok(DiscreteParams {
        params: p,
        split,
        flagged,
    })
}

/// Angle (degrees) of the least-squares line of `ml` on `ap`, and the RMS vertical residual.
fn cop_line(ap: &[f64], ml: &[f64]) -> Option<(f64, f64)> {
    let mx = mean(ap);
    let my = mean(ml);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&x, &y) in ap.iter().zip(ml) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = ap
        .iter()
        .zip(ml)
        .map(|(&x, &y)| (y - intercept - slope * x).powi(2))
        .sum();
    Some((slope.atan().to_degrees(), (ss / ap.len() as f64).sqrt()))
}
