//! Stance-normalized waveform family and its rendering into raw plate recordings.
//!
//! Each force is a chain of half-cosine segments through control points `(s_i, v_i)`:
//! `v_i + (v_{i+1} − v_i)(1 − cos πu)/2` with `u` the position inside the segment. The
//! segments are monotone with zero slope at both ends, so the extrema are exactly the
//! control points. Optional shape modes multiply the forces by `1 + Σ c_j sin(jπs)`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Foot, PlateSeries, Recording, RecordingRecipe};
use crate::preprocess::{StanceWaveforms, WAVEFORM_LEN};

pub const MODES: usize = 4;

macro_rules! shape {
    ($($field:ident),* $(,)?) => {
        /// Parameters of one foot's stance. Forces in body weights, times as stance fractions,
        /// COP in foot lengths, temporal and spatial step parameters in seconds and metres.
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(default)]
        pub struct Shape {
            $(pub $field: f64,)*
            pub fv_modes: [f64; MODES],
            pub fap_modes: [f64; MODES],
            pub fml_modes: [f64; MODES],
            pub cop_ap_modes: [f64; MODES],
            pub cop_ml_modes: [f64; MODES],
        }

        impl Shape {
            const SCALARS: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Mutable access by field name; modes are `fv_mode1` … `cop_ml_mode4`.
            pub fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
                match name {
                    $(stringify!($field) => Some(&mut self.$field),)*
                    _ => {
                        let (group, idx) = name.rsplit_once("_mode")?;
                        let j: usize = idx.parse().ok()?;
                        if !(1..=MODES).contains(&j) {
                            return None;
                        }
                        let modes = match group {
                            "fv" => &mut self.fv_modes,
                            "fap" => &mut self.fap_modes,
                            "fml" => &mut self.fml_modes,
                            "cop_ap" => &mut self.cop_ap_modes,
                            "cop_ml" => &mut self.cop_ml_modes,
                            _ => return None,
                        };
                        Some(&mut modes[j - 1])
                    }
                }
            }
        }
    };
}

shape!(
    fv_peak1,
    fv_peak1_time,
    fv_valley,
    fv_valley_time,
    fv_peak2,
    fv_peak2_time,
    fap_heel,
    fap_heel_time,
    fap_brake,
    fap_brake_time,
    fap_push,
    fap_push_time,
    fml_lat,
    fml_lat_time,
    fml_med1,
    fml_med1_time,
    fml_mid,
    fml_mid_time,
    fml_med2,
    fml_med2_time,
    cop_ap_range,
    cop_angle_deg,
    cop_wobble,
    stance_time,
    step_time,
    step_length,
    step_width,
);

impl Default for Shape {
    fn default() -> Self {
        Shape {
            fv_peak1: 1.12,
            fv_peak1_time: 0.24,
            fv_valley: 0.72,
            fv_valley_time: 0.50,
            fv_peak2: 1.10,
            fv_peak2_time: 0.78,
            fap_heel: 0.03,
            fap_heel_time: 0.03,
            fap_brake: 0.20,
            fap_brake_time: 0.20,
            fap_push: 0.22,
            fap_push_time: 0.82,
            fml_lat: 0.03,
            fml_lat_time: 0.03,
            fml_med1: 0.07,
            fml_med1_time: 0.20,
            fml_mid: 0.04,
            fml_mid_time: 0.50,
            fml_med2: 0.06,
            fml_med2_time: 0.76,
            cop_ap_range: 0.70,
            cop_angle_deg: 6.0,
            cop_wobble: 0.004,
            stance_time: 0.66,
            step_time: 0.56,
            step_length: 0.66,
            step_width: 0.12,
            fv_modes: [0.0; MODES],
            fap_modes: [0.0; MODES],
            fml_modes: [0.0; MODES],
            cop_ap_modes: [0.0; MODES],
            cop_ml_modes: [0.0; MODES],
        }
    }
}

fn half_cosine(points: &[(f64, f64)], s: f64) -> f64 {
    if s <= points[0].0 {
        return points[0].1;
    }
    for w in points.windows(2) {
        let ((s0, v0), (s1, v1)) = (w[0], w[1]);
        if s <= s1 {
            let u = (s - s0) / (s1 - s0);
            return v0 + (v1 - v0) * 0.5 * (1.0 - (PI * u).cos());
        }
    }
    points[points.len() - 1].1
}

fn mode_sum(modes: &[f64; MODES], s: f64) -> f64 {
    modes
        .iter()
        .enumerate()
        .map(|(j, c)| c * ((j + 1) as f64 * PI * s).sin())
        .sum()
}

impl Shape {
    pub fn names() -> Vec<String> {
        let mut v: Vec<String> = Self::SCALARS.iter().map(|s| s.to_string()).collect();
        for g in ["fv", "fap", "fml", "cop_ap", "cop_ml"] {
            v.extend((1..=MODES).map(|j| format!("{g}_mode{j}")));
        }
        v
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let mut c = *self;
        c.field_mut(name).map(|v| *v)
    }

    pub fn fv_points(&self) -> [(f64, f64); 5] {
        [
            (0.0, 0.0),
            (self.fv_peak1_time, self.fv_peak1),
            (self.fv_valley_time, self.fv_valley),
            (self.fv_peak2_time, self.fv_peak2),
            (1.0, 0.0),
        ]
    }

    pub fn fap_points(&self) -> [(f64, f64); 5] {
        [
            (0.0, 0.0),
            (self.fap_heel_time, self.fap_heel),
            (self.fap_brake_time, -self.fap_brake),
            (self.fap_push_time, self.fap_push),
            (1.0, 0.0),
        ]
    }

    pub fn fml_points(&self) -> [(f64, f64); 6] {
        [
            (0.0, 0.0),
            (self.fml_lat_time, -self.fml_lat),
            (self.fml_med1_time, self.fml_med1),
            (self.fml_mid_time, self.fml_mid),
            (self.fml_med2_time, self.fml_med2),
            (1.0, 0.0),
        ]
    }

    pub fn f_v(&self, s: f64) -> f64 {
        half_cosine(&self.fv_points(), s) * (1.0 + mode_sum(&self.fv_modes, s))
    }

    pub fn f_ap(&self, s: f64) -> f64 {
        half_cosine(&self.fap_points(), s) * (1.0 + mode_sum(&self.fap_modes, s))
    }

    /// Positive medial.
    pub fn f_ml(&self, s: f64) -> f64 {
        half_cosine(&self.fml_points(), s) * (1.0 + mode_sum(&self.fml_modes, s))
    }

    /// Monotone while `Σ|cop_ap_modes| < 1`.
    pub fn cop_ap(&self, s: f64) -> f64 {
        let wobble: f64 = self
            .cop_ap_modes
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let k = (j + 1) as f64 * PI;
                c * (k * s).sin() / k
            })
            .sum();
        self.cop_ap_range * (s + wobble)
    }

    /// Positive medial.
    pub fn cop_ml(&self, s: f64) -> f64 {
        self.cop_angle_deg.to_radians().tan() * self.cop_ap(s)
            + self.cop_wobble * ((2.0 * PI * s).cos() - 1.0)
            + mode_sum(&self.cop_ml_modes, s)
    }

    /// The family sampled on the 1000-point stance grid, as an ideal preprocessor would
    /// return it.
    pub fn stance_waveforms(&self, foot: Foot) -> StanceWaveforms {
        let grid = (0..WAVEFORM_LEN).map(|k| k as f64 / (WAVEFORM_LEN - 1) as f64);
        StanceWaveforms {
            foot,
            f_v: grid.clone().map(|s| self.f_v(s)).collect(),
            f_ap: grid.clone().map(|s| self.f_ap(s)).collect(),
            f_ml: grid.clone().map(|s| self.f_ml(s)).collect(),
            cop_ap: grid.clone().map(|s| self.cop_ap(s)).collect(),
            cop_ml: grid.map(|s| self.cop_ml(s)).collect(),
            stance_time: self.stance_time,
            initial_contact_time: 0.0,
            toe_off_time: self.stance_time,
            cop_contact: [0.0; 2],
            cop_mean: [0.0; 2],
        }
    }

    /// Problems that make the family ill-formed, as readable messages.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ordered = |name: &str, t: &[f64], out: &mut Vec<String>| {
            let ok = t.windows(2).all(|w| w[0] < w[1]) && t[0] > 0.0 && t[t.len() - 1] < 1.0;
            if !ok {
                out.push(format!("{name} times must increase strictly inside (0, 1): {t:?}"));
            }
        };
        ordered(
            "F_V",
            &[self.fv_peak1_time, self.fv_valley_time, self.fv_peak2_time],
            &mut out,
        );
        ordered(
            "F_AP",
            &[self.fap_heel_time, self.fap_brake_time, self.fap_push_time],
            &mut out,
        );
        ordered(
            "F_ML",
            &[
                self.fml_lat_time,
                self.fml_med1_time,
                self.fml_mid_time,
                self.fml_med2_time,
            ],
            &mut out,
        );
        for (name, v) in [
            ("fv_peak1", self.fv_peak1),
            ("fv_valley", self.fv_valley),
            ("fv_peak2", self.fv_peak2),
            ("fap_heel", self.fap_heel),
            ("fap_brake", self.fap_brake),
            ("fap_push", self.fap_push),
            ("fml_lat", self.fml_lat),
            ("fml_med1", self.fml_med1),
            ("fml_mid", self.fml_mid),
            ("fml_med2", self.fml_med2),
            ("cop_ap_range", self.cop_ap_range),
            ("cop_wobble", self.cop_wobble),
            ("step_width", self.step_width),
        ] {
            if !(v >= 0.0) {
                out.push(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.fv_valley < self.fv_peak1.min(self.fv_peak2)) {
            out.push("fv_valley must lie below both vertical peaks".into());
        }
        if !(self.fap_brake > 0.0 && self.fap_push > 0.0) {
            out.push("fap_brake and fap_push must be positive".into());
        }
        if !(self.stance_time > 0.0 && self.step_time > 0.0 && self.step_time < self.stance_time) {
            out.push("need 0 < step_time < stance_time".into());
        }
        if !(self.step_length > 0.0) {
            out.push("step_length must be positive".into());
        }
        if !(self.cop_angle_deg.abs() < 80.0) {
            out.push("cop_angle_deg must lie in (−80, 80)".into());
        }
        let ap_modes: f64 = self.cop_ap_modes.iter().map(|c| c.abs()).sum();
        if !(ap_modes < 1.0) {
            out.push("sum of |cop_ap_modes| must stay below 1".into());
        }
        for (name, m) in [
            ("fv", &self.fv_modes),
            ("fap", &self.fap_modes),
            ("fml", &self.fml_modes),
        ] {
            if !(m.iter().map(|c| c.abs()).sum::<f64>() < 1.0) {
                out.push(format!("sum of |{name}_modes| must stay below 1"));
            }
        }
        out
    }

    /// Pulls a randomly perturbed shape back into the valid region: orders times with a
    /// minimum gap, clips amplitudes and mode sums.
    pub fn sanitized(mut self) -> Shape {
        fn order(t: &mut [&mut f64]) {
            let gap = 0.02;
            let n = t.len();
            for (i, v) in t.iter_mut().enumerate() {
                let lo = gap * (i + 1) as f64;
                let hi = 1.0 - gap * (n - i) as f64;
                **v = v.clamp(lo, hi);
            }
            for i in 1..n {
                if *t[i] < *t[i - 1] + gap {
                    *t[i] = *t[i - 1] + gap;
                }
            }
        }
        order(&mut [
            &mut self.fv_peak1_time,
            &mut self.fv_valley_time,
            &mut self.fv_peak2_time,
        ]);
        order(&mut [
            &mut self.fap_heel_time,
            &mut self.fap_brake_time,
            &mut self.fap_push_time,
        ]);
        order(&mut [
            &mut self.fml_lat_time,
            &mut self.fml_med1_time,
            &mut self.fml_mid_time,
            &mut self.fml_med2_time,
        ]);
        for v in [
            &mut self.fv_peak1,
            &mut self.fv_peak2,
            &mut self.fap_heel,
            &mut self.fml_lat,
            &mut self.fml_med1,
            &mut self.fml_mid,
            &mut self.fml_med2,
            &mut self.cop_wobble,
        ] {
            *v = v.max(0.0);
        }
        self.fv_peak1 = self.fv_peak1.max(0.2);
        self.fv_peak2 = self.fv_peak2.max(0.2);
        self.fv_valley = self.fv_valley.clamp(0.05, 0.98 * self.fv_peak1.min(self.fv_peak2));
        self.fap_brake = self.fap_brake.max(0.01);
        self.fap_push = self.fap_push.max(0.01);
        self.cop_ap_range = self.cop_ap_range.max(0.05);
        self.cop_angle_deg = self.cop_angle_deg.clamp(-60.0, 60.0);
        self.stance_time = self.stance_time.max(0.25);
        self.step_time = self.step_time.clamp(0.3 * self.stance_time, 0.95 * self.stance_time);
        self.step_length = self.step_length.max(0.2);
        self.step_width = self.step_width.max(0.02);
        for (m, cap) in [
            (&mut self.fv_modes, 0.6),
            (&mut self.fap_modes, 0.6),
            (&mut self.fml_modes, 0.6),
            (&mut self.cop_ap_modes, 0.6),
        ] {
            let total: f64 = m.iter().map(|c| c.abs()).sum();
            if total > cap {
                m.iter_mut().for_each(|c| *c *= cap / total);
            }
        }
        self
    }
}

/// One foot's contact within a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootPlan {
    pub foot: Foot,
    pub shape: Shape,
    /// Seconds from the start of the recording.
    pub contact_time: f64,
    /// Plate-local heel position (m).
    pub heel: [f64; 2],
}

/// Everything needed to render one trial. Rendering is a pure function of these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecipe {
    /// Plate order: the first entry strikes plate 1.
    pub feet: [FootPlan; 2],
    /// Newtons.
    pub body_weight: f64,
    /// Metres.
    pub foot_length: f64,
    pub sample_rate: f64,
    pub duration: f64,
    /// Standard deviation (N) of white noise added to every force channel.
    pub sensor_noise: f64,
    pub noise_seed: u64,
}

impl TrialRecipe {
    fn render_plate(&self, plan: &FootPlan, n: usize, rng: &mut ChaCha8Rng) -> PlateSeries {
        let mut p = PlateSeries::with_len(n);
        let medial = match plan.foot {
            Foot::Right => 1.0,
            Foot::Left => -1.0,
        };
        let (bw, fl) = (self.body_weight, self.foot_length);
        let t_stance = plan.shape.stance_time;
        for i in 0..n {
            let t = i as f64 / self.sample_rate;
            let s = (t - plan.contact_time) / t_stance;
            if s > 0.0 && s < 1.0 {
                let sh = &plan.shape;
                p.fz[i] = bw * sh.f_v(s);
                p.fx[i] = bw * sh.f_ap(s);
                p.fy[i] = medial * bw * sh.f_ml(s);
                p.cop_x[i] = plan.heel[0] + fl * sh.cop_ap(s);
                p.cop_y[i] = plan.heel[1] + medial * fl * sh.cop_ml(s);
            }
        }
        if self.sensor_noise > 0.0 {
            for ch in [&mut p.fx, &mut p.fy, &mut p.fz] {
                for v in ch.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += self.sensor_noise * z;
                }
            }
        }
        p
    }
}

impl RecordingRecipe for TrialRecipe {
    fn render(&self) -> Recording {
        let n = (self.duration * self.sample_rate).ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        let first = self.render_plate(&self.feet[0], n, &mut rng);
        let second = self.render_plate(&self.feet[1], n, &mut rng);
        Recording {
            sample_rate: self.sample_rate,
            plates: [first, second],
        }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
