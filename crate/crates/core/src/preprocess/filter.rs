//! Zero-phase low-pass Butterworth filtering: forward-backward passes over an
//! odd-reflection padded signal, started from steady-state initial conditions.

use serde::{Deserialize, Serialize};

use super::PreprocessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// Filter order; must be even (cascade of second-order sections).
    pub order: usize,
    /// Cut-off frequency in Hz.
    pub cutoff: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { order: 2, cutoff: 20.0 }
    }
}

impl FilterSpec {
    /// Number of samples reflected onto each end before filtering: two cut-off periods,
    /// long enough for the start-up transient of a ramp to die out inside the padding.
    pub fn pad_len(&self, sample_rate: f64) -> usize {
        (3 * (self.order + 1)).max((2.0 * sample_rate / self.cutoff).ceil() as usize)
    }

    /// Squared magnitude response of a single pass, |H(f)|², for the bilinear-transformed
    /// Butterworth design. Forward-backward application has this as its amplitude gain.
    pub fn power_response(&self, freq: f64, sample_rate: f64) -> f64 {
        let warped = (std::f64::consts::PI * freq / sample_rate).tan();
        let wc = (std::f64::consts::PI * self.cutoff / sample_rate).tan();
        1.0 / (1.0 + (warped / wc).powi(2 * self.order as i32))
    }
}

/// Direct-form II transposed biquad with unity DC gain.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// State that makes a constant unit input produce a constant unit output.
    fn steady_state(&self) -> [f64; 2] {
        let z2 = self.b[2] - self.a[1];
        let z1 = self.b[1] - self.a[0] + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64], init: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let (mut z1, mut z2) = (init[0], init[1]);
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z1;
            z1 = b1 * xin - a1 * y + z2;
            z2 = b2 * xin - a2 * y;
            *v = y;
        }
    }
}

fn design(spec: &FilterSpec, sample_rate: f64) -> Result<Vec<Biquad>, PreprocessError> {
    if spec.order == 0 || spec.order % 2 != 0 {
        return Err(PreprocessError::InvalidFilter(format!(
            "order must be a positive even number, got {}",
            spec.order
        )));
    }
    if !(spec.cutoff > 0.0) {
        return Err(PreprocessError::InvalidFilter(format!(
            "cut-off must be positive, got {}",
            spec.cutoff
        )));
    }
    if spec.cutoff >= sample_rate / 2.0 {
        return Err(PreprocessError::CutoffAboveNyquist {
            cutoff: spec.cutoff,
            nyquist: sample_rate / 2.0,
        });
    }
    let k = (std::f64::consts::PI * spec.cutoff / sample_rate).tan();
    let n = spec.order as f64;
    let k2 = k * k;
    Ok((1..=spec.order / 2)
        .map(|i| {
            // analog section s² + q s + 1 for the i-th conjugate pole pair
            let q = 2.0 * (std::f64::consts::PI * (2.0 * i as f64 - 1.0) / (2.0 * n)).sin();
            let norm = 1.0 / (1.0 + q * k + k2);
            let b0 = k2 * norm;
            Biquad {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k2 - 1.0) * norm, (1.0 - q * k + k2) * norm],
            }
        })
        .collect())
}

fn run_cascade(sections: &[Biquad], x: &mut [f64]) {
    let x0 = x[0];
    for s in sections {
        let zi = s.steady_state();
        s.run(x, [zi[0] * x0, zi[1] * x0]);
    }
}

/// Applies the filter forward and backward so the result has no phase shift.
pub fn butterworth_lowpass(signal: &[f64], spec: &FilterSpec, sample_rate: f64) -> Result<Vec<f64>, PreprocessError> {
    let sections = design(spec, sample_rate)?;
    let n = signal.len();
    if n < 3 * spec.order.max(1) {
        return Err(PreprocessError::SignalTooShort {
            len: n,
            min: 3 * spec.order,
        });
    }
    let pad = spec.pad_len(sample_rate).min(n - 1);
    let first = signal[0];
    let last = signal[n - 1];
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

    run_cascade(&sections, &mut ext);
    ext.reverse();
    run_cascade(&sections, &mut ext);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}
