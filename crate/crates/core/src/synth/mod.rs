//! Class-conditional synthetic gait datasets with controllable separability.
//!
//! Every subject draws a random effect per shape parameter, every session and trial adds
//! smaller ones, and the affected foot of a disorder subject carries the class offsets scaled
//! by `separation` (the other foot carries `contralateral_fraction` of them). Recordings are
//! rendered lazily from per-trial recipes.

mod family;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    write_dataset, AffectedSide, Dataset, DatasetError, Foot, GaitClass, RecordingSource, Session, Sex, Subject, Trial,
    DEFAULT_SAMPLE_RATE,
};
use crate::preprocess::PlateLayout;

pub use family::{FootPlan, Shape, TrialRecipe, MODES};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    ConfigInvalid(String),
    #[error("cannot parse generator config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Preset configurations shipped with the library.
pub mod presets {
    /// Cardinalities of the clinical cohort: 440 subjects, 1,187 sessions, 9,496 trials.
    pub const PAPER_SHAPE: &str = include_str!("../../presets/paper-shape.toml");
    /// A few subjects per class, for smoke tests.
    pub const SMALL: &str = include_str!("../../presets/small.toml");
    /// About one eighth of the cohort at moderate separability.
    pub const CALIBRATED: &str = include_str!("../../presets/calibrated.toml");

    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "paper-shape" => Some(PAPER_SHAPE),
            "small" => Some(SMALL),
            "calibrated" => Some(CALIBRATED),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub subjects: usize,
    pub sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub subject_scale: f64,
    pub session_scale: f64,
    pub trial_scale: f64,
    /// White noise (N) on the raw force channels.
    pub sensor_newtons: f64,
    /// Per-parameter standard deviations, overriding the built-in ones.
    pub sd: BTreeMap<String, f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            subject_scale: 1.0,
            session_scale: 0.4,
            trial_scale: 0.6,
            sensor_newtons: 0.0,
            sd: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnthropometryConfig {
    pub body_mass_mean: f64,
    pub body_mass_sd: f64,
    pub foot_length_mean: f64,
    pub foot_length_sd: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub male_fraction: f64,
}

impl Default for AnthropometryConfig {
    fn default() -> Self {
        AnthropometryConfig {
            body_mass_mean: 78.0,
            body_mass_sd: 12.0,
            foot_length_mean: 0.26,
            foot_length_sd: 0.015,
            age_min: 20.0,
            age_max: 70.0,
            male_fraction: 0.65,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub sample_rate: f64,
    pub trials_per_session: usize,
    /// Keyed by class code (`N`, `C`, `A`, `K`, `H`).
    pub classes: BTreeMap<String, ClassCounts>,
    pub base: Shape,
    /// Per class: parameter name → mean shift at separation 1.
    pub offsets: BTreeMap<String, BTreeMap<String, f64>>,
    pub separation: f64,
    pub contralateral_fraction: f64,
    pub noise: NoiseConfig,
    pub anthropometry: AnthropometryConfig,
    pub plate_layout: PlateLayout,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let counts = |subjects, sessions| ClassCounts { subjects, sessions };
        GeneratorConfig {
            seed: 0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            trials_per_session: 8,
            classes: [
                ("N", counts(8, 8)),
                ("C", counts(4, 8)),
                ("A", counts(4, 8)),
                ("K", counts(4, 8)),
                ("H", counts(4, 8)),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            base: Shape::default(),
            offsets: BTreeMap::new(),
            separation: 1.0,
            contralateral_fraction: 0.3,
            noise: NoiseConfig::default(),
            anthropometry: AnthropometryConfig::default(),
            plate_layout: PlateLayout::default(),
        }
    }
}

/// Built-in standard deviation of each shape parameter's random effects.
pub fn default_sd(name: &str) -> f64 {
    match name {
        "fv_peak1" | "fv_valley" | "fv_peak2" => 0.04,
        "fv_peak1_time" | "fv_peak2_time" => 0.015,
        "fv_valley_time" => 0.02,
        "fap_heel" => 0.008,
        "fap_heel_time" => 0.005,
        "fap_brake" | "fap_push" => 0.03,
        "fap_brake_time" | "fap_push_time" => 0.02,
        "fml_lat" => 0.008,
        "fml_lat_time" => 0.005,
        "fml_med1" | "fml_med2" => 0.012,
        "fml_mid" => 0.01,
        "fml_med1_time" | "fml_med2_time" => 0.02,
        "fml_mid_time" => 0.03,
        "cop_ap_range" => 0.05,
        "cop_angle_deg" => 2.0,
        "cop_wobble" => 0.002,
        "stance_time" => 0.04,
        "step_time" => 0.03,
        "step_length" => 0.05,
        "step_width" => 0.02,
        n if n.starts_with("cop_ml_mode") => 0.01,
        n if n.contains("_mode") => 0.03,
        _ => 0.0,
    }
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<GeneratorConfig, SynthError> {
        let cfg: GeneratorConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<GeneratorConfig, SynthError> {
        let text =
            presets::by_name(name).ok_or_else(|| SynthError::ConfigInvalid(format!("unknown preset '{name}'")))?;
        GeneratorConfig::from_toml(text)
    }

    fn class_list(&self) -> Result<Vec<(GaitClass, ClassCounts)>, SynthError> {
        let mut out = Vec::new();
        for (code, counts) in &self.classes {
            let class =
                GaitClass::parse(code).ok_or_else(|| SynthError::ConfigInvalid(format!("unknown class '{code}'")))?;
            out.push((class, *counts));
        }
        out.sort_by_key(|(c, _)| *c);
        Ok(out)
    }

    /// Mean shape of the affected foot of `class`.
    pub fn class_shape(&self, class: GaitClass, fraction: f64) -> Shape {
        let mut shape = self.base;
        if let Some(off) = self.offsets.get(class.code()) {
            for (name, delta) in off {
                if let Some(v) = shape.field_mut(name) {
                    *v += self.separation * fraction * delta;
                }
            }
        }
        shape
    }

    fn sd(&self, name: &str) -> f64 {
        self.noise.sd.get(name).copied().unwrap_or_else(|| default_sd(name))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::ConfigInvalid(m));
        if !(self.sample_rate > 0.0) {
            return bad("sample_rate must be positive".into());
        }
        if self.trials_per_session == 0 {
            return bad("trials_per_session must be at least 1".into());
        }
        let classes = self.class_list()?;
        if classes.is_empty() {
            return bad("no classes configured".into());
        }
        for (class, counts) in &classes {
            if counts.sessions < counts.subjects {
                return bad(format!("class {class}: fewer sessions than subjects"));
            }
            if counts.subjects == 0 && counts.sessions > 0 {
                return bad(format!("class {class}: sessions without subjects"));
            }
        }
        let names = Shape::names();
        for (code, off) in &self.offsets {
            if GaitClass::parse(code).is_none() {
                return bad(format!("offsets for unknown class '{code}'"));
            }
            for name in off.keys() {
                if !names.contains(name) {
                    return bad(format!("unknown shape parameter '{name}' in offsets.{code}"));
                }
            }
        }
        for name in self.noise.sd.keys() {
            if !names.contains(name) {
                return bad(format!("unknown shape parameter '{name}' in noise.sd"));
            }
        }
        for (name, v) in self.noise.sd.iter() {
            if !(*v >= 0.0) {
                return bad(format!("noise.sd.{name} must be non-negative"));
            }
        }
        let n = &self.noise;
        for (name, v) in [
            ("subject_scale", n.subject_scale),
            ("session_scale", n.session_scale),
            ("trial_scale", n.trial_scale),
            ("sensor_newtons", n.sensor_newtons),
            ("separation", self.separation),
            ("contralateral_fraction", self.contralateral_fraction),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        let a = &self.anthropometry;
        if !(a.body_mass_mean > 0.0 && a.body_mass_sd >= 0.0 && a.foot_length_mean > 0.0 && a.foot_length_sd >= 0.0) {
            return bad("anthropometry means must be positive and spreads non-negative".into());
        }
        if !(a.age_min > 0.0 && a.age_max >= a.age_min && (0.0..=1.0).contains(&a.male_fraction)) {
            return bad("need 0 < age_min ≤ age_max and male_fraction in [0, 1]".into());
        }
        let mut shapes = vec![("base".to_string(), self.base)];
        for (class, _) in &classes {
            shapes.push((class.code().to_string(), self.class_shape(*class, 1.0)));
        }
        for (label, shape) in shapes {
            let problems = shape.problems();
            if !problems.is_empty() {
                return bad(format!("{label} shape: {}", problems.join("; ")));
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer; decorrelates seeds derived from consecutive indices.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_effects(rng: &mut ChaCha8Rng, names: &[String], sds: &[f64], scale: f64) -> Vec<f64> {
    names
        .iter()
        .zip(sds)
        .map(|(_, sd)| {
            let z: f64 = StandardNormal.sample(rng);
            sd * scale * z
        })
        .collect()
}

fn apply(shape: &Shape, names: &[String], effects: &[&[f64]]) -> Shape {
    let mut s = *shape;
    for (i, name) in names.iter().enumerate() {
        let v = s.field_mut(name).expect("known name");
        for e in effects {
            *v += e[i];
        }
    }
    s
}

struct SubjectPlan {
    subject: Subject,
    sessions: Vec<Session>,
    trials: Vec<Trial>,
}

fn plan_subject(
    cfg: &GeneratorConfig,
    class: GaitClass,
    index_in_class: usize,
    global_index: usize,
    n_sessions: usize,
    names: &[String],
    sds: &[f64],
) -> SubjectPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, global_index as u64));
    let a = &cfg.anthropometry;
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let body_mass = (a.body_mass_mean + a.body_mass_sd * normal(&mut rng)).max(35.0);
    let age = if a.age_max > a.age_min {
        rng.random_range(a.age_min..a.age_max)
    } else {
        a.age_min
    };
    let sex = if rng.random::<f64>() < a.male_fraction {
        Sex::Male
    } else {
        Sex::Female
    };
    let affected_side = if class.is_disorder() {
        if rng.random::<bool>() {
            AffectedSide::Left
        } else {
            AffectedSide::Right
        }
    } else {
        AffectedSide::Unspecified
    };
    let foot_length = (a.foot_length_mean + a.foot_length_sd * normal(&mut rng)).max(0.15);
    let id = format!("{}{:04}", class.code(), index_in_class + 1);
    let subject = Subject {
        id: id.clone(),
        class,
        age: (age * 10.0).round() / 10.0,
        body_mass: (body_mass * 10.0).round() / 10.0,
        sex,
        affected_side,
    };
    let affected = affected_side.foot();
    let subject_fx = draw_effects(&mut rng, names, sds, cfg.noise.subject_scale);
    let mean_affected = cfg.class_shape(class, 1.0);
    let mean_other = cfg.class_shape(class, cfg.contralateral_fraction);
    let body_weight = subject.body_mass * crate::preprocess::GRAVITY;

    let mut sessions = Vec::with_capacity(n_sessions);
    let mut trials = Vec::new();
    for si in 0..n_sessions {
        let session_id = format!("{id}-S{}", si + 1);
        let session_fx = draw_effects(&mut rng, names, sds, cfg.noise.session_scale);
        let session_foot_length = (foot_length + 0.002 * normal(&mut rng)).max(0.15);
        let mut trial_ids = Vec::with_capacity(cfg.trials_per_session);
        for ti in 0..cfg.trials_per_session {
            let trial_id = format!("{session_id}-T{}", ti + 1);
            let lead = if rng.random::<bool>() { Foot::Left } else { Foot::Right };
            let mut plans = Vec::with_capacity(2);
            for foot in [lead, lead.other()] {
                let trial_fx = draw_effects(&mut rng, names, sds, cfg.noise.trial_scale);
                let mean = if Some(foot) == affected {
                    &mean_affected
                } else {
                    &mean_other
                };
                plans.push((
                    foot,
                    apply(mean, names, &[&subject_fx, &session_fx, &trial_fx]).sanitized(),
                ));
            }
            let lead_shape = plans[0].1;
            let contact = 0.15;
            let second_contact = contact + lead_shape.step_time;
            let side_y = |f: Foot, width: f64| match f {
                Foot::Left => 0.5 * width,
                Foot::Right => -0.5 * width,
            };
            let width = lead_shape.step_width;
            let origin = cfg.plate_layout.origins;
            let heel_x_lab = 0.12;
            let (second_foot, second_shape) = plans[1];
            let feet = [
                FootPlan {
                    foot: lead,
                    shape: lead_shape,
                    contact_time: contact,
                    heel: [heel_x_lab - origin[0][0], side_y(lead, width) - origin[0][1]],
                },
                FootPlan {
                    foot: second_foot,
                    shape: second_shape,
                    contact_time: second_contact,
                    heel: [
                        heel_x_lab + lead_shape.step_length - origin[1][0],
                        side_y(second_foot, width) - origin[1][1],
                    ],
                },
            ];
            let duration = second_contact + second_shape.stance_time + 0.15;
            let recipe = TrialRecipe {
                feet,
                body_weight,
                foot_length: session_foot_length,
                sample_rate: cfg.sample_rate,
                duration: duration.max(contact + lead_shape.stance_time + 0.15),
                sensor_noise: cfg.noise.sensor_newtons,
                noise_seed: rng.random(),
            };
            trials.push(Trial {
                id: trial_id.clone(),
                session_id: session_id.clone(),
                sample_rate: cfg.sample_rate,
                source: RecordingSource::Recipe(Arc::new(recipe)),
            });
            trial_ids.push(trial_id);
        }
        sessions.push(Session {
            id: session_id,
            subject_id: id.clone(),
            foot_length: session_foot_length,
            trial_ids,
        });
    }
    SubjectPlan {
        subject,
        sessions,
        trials,
    }
}

/// Builds the dataset in memory; recordings render on first access. Deterministic in the
/// config (including its seed).
pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let names = Shape::names();
    let sds: Vec<f64> = names.iter().map(|n| cfg.sd(n)).collect();
    let mut jobs = Vec::new();
    let mut global = 0;
    for (class, counts) in cfg.class_list()? {
        let base = counts.sessions / counts.subjects.max(1);
        let extra = counts.sessions % counts.subjects.max(1);
        for i in 0..counts.subjects {
            jobs.push((class, i, global, base + usize::from(i < extra)));
            global += 1;
        }
    }
    let plans: Vec<SubjectPlan> = jobs
        .par_iter()
        .map(|&(class, i, g, n)| plan_subject(cfg, class, i, g, n, &names, &sds))
        .collect();
    let mut subjects = Vec::with_capacity(plans.len());
    let mut sessions = Vec::new();
    let mut trials = Vec::new();
    for p in plans {
        subjects.push(p.subject);
        sessions.extend(p.sessions);
        trials.extend(p.trials);
    }
    Ok(Dataset::new(subjects, sessions, trials)?)
}

/// Generates and writes `meta.csv` plus recordings under `out_dir`.
pub fn generate_to_disk(cfg: &GeneratorConfig, out_dir: &Path) -> Result<(Dataset, PathBuf), SynthError> {
    let ds = generate(cfg)?;
    let meta = write_dataset(&ds, out_dir)?;
    Ok((ds, meta))
}

/// The recipe behind a generated trial, if it came from this generator.
pub fn trial_recipe(trial: &Trial) -> Option<TrialRecipe> {
    match &trial.source {
        RecordingSource::Recipe(r) => r.as_any().downcast_ref::<TrialRecipe>().cloned(),
        _ => None,
    }
}
