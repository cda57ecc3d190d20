//! Patient / session / trial hierarchy and its on-disk CSV representation.
//!
//! Metadata is one CSV row per trial:
//! `subject_id,class,age,body_mass_kg,sex,affected_side,session_id,foot_length_m,trial_id,recording_file`.
//! Each recording is a CSV with one row per sample and plate:
//! `plate,Fx_N,Fy_N,Fz_N,COPx_m,COPy_m`. Forces are ground reaction forces acting on
//! the foot in lab axes (x forward, y to the walker's left, z up); COP is plate-local.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SAMPLE_RATE: f64 = 2000.0;

pub const METADATA_COLUMNS: [&str; 10] = [
    "subject_id",
    "class",
    "age",
    "body_mass_kg",
    "sex",
    "affected_side",
    "session_id",
    "foot_length_m",
    "trial_id",
    "recording_file",
];

pub const RECORDING_COLUMNS: [&str; 6] = ["plate", "Fx_N", "Fy_N", "Fz_N", "COPx_m", "COPy_m"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("recording file {path} referenced by trial {trial} does not exist")]
    MissingRecording { trial: String, path: PathBuf },
    #[error("{file}:{line}: malformed row: {reason}")]
    MalformedRow { file: PathBuf, line: u64, reason: String },
    #[error("{file}:{line}: unit violation: {reason}")]
    UnitViolation { file: PathBuf, line: u64, reason: String },
    #[error("referential integrity: {0}")]
    Integrity(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Diagnostic class of a subject. `GD` (gait disorder) is the union of C, A, K and H.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GaitClass {
    /// Healthy control.
    N,
    /// Calcaneus.
    C,
    /// Ankle.
    A,
    /// Knee.
    K,
    /// Hip.
    H,
}

impl GaitClass {
    pub const ALL: [GaitClass; 5] = [GaitClass::N, GaitClass::C, GaitClass::A, GaitClass::K, GaitClass::H];

    pub fn code(self) -> &'static str {
        match self {
            GaitClass::N => "N",
            GaitClass::C => "C",
            GaitClass::A => "A",
            GaitClass::K => "K",
            GaitClass::H => "H",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "N" | "n" => Some(GaitClass::N),
            "C" | "c" => Some(GaitClass::C),
            "A" | "a" => Some(GaitClass::A),
            "K" | "k" => Some(GaitClass::K),
            "H" | "h" => Some(GaitClass::H),
            _ => None,
        }
    }

    pub fn is_disorder(self) -> bool {
        self != GaitClass::N
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for GaitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Some(Sex::Male),
            "female" | "f" => Some(Sex::Female),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foot {
    Left,
    Right,
}

impl Foot {
    pub fn as_str(self) -> &'static str {
        match self {
            Foot::Left => "left",
            Foot::Right => "right",
        }
    }

    pub fn other(self) -> Foot {
        match self {
            Foot::Left => Foot::Right,
            Foot::Right => Foot::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffectedSide {
    Left,
    Right,
    Unspecified,
}

impl AffectedSide {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Some(AffectedSide::Left),
            "right" | "r" => Some(AffectedSide::Right),
            "unspecified" | "none" | "" | "-" => Some(AffectedSide::Unspecified),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AffectedSide::Left => "left",
            AffectedSide::Right => "right",
            AffectedSide::Unspecified => "unspecified",
        }
    }

    pub fn foot(self) -> Option<Foot> {
        match self {
            AffectedSide::Left => Some(Foot::Left),
            AffectedSide::Right => Some(Foot::Right),
            AffectedSide::Unspecified => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub class: GaitClass,
    /// Years.
    pub age: f64,
    /// Kilograms.
    pub body_mass: f64,
    pub sex: Sex,
    pub affected_side: AffectedSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub subject_id: String,
    /// Metres.
    pub foot_length: f64,
    pub trial_ids: Vec<String>,
}

/// Samples of one force plate. All channels have equal length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlateSeries {
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    pub fz: Vec<f64>,
    pub cop_x: Vec<f64>,
    pub cop_y: Vec<f64>,
}

impl PlateSeries {
    pub fn with_len(n: usize) -> Self {
        PlateSeries {
            fx: vec![0.0; n],
            fy: vec![0.0; n],
            fz: vec![0.0; n],
            cop_x: vec![0.0; n],
            cop_y: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.fz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fz.is_empty()
    }
}

/// Raw bilateral recording: plate 1 is struck first.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub sample_rate: f64,
    pub plates: [PlateSeries; 2],
}

/// Something that can produce a recording on demand (e.g. the synthetic generator).
pub trait RecordingRecipe: Send + Sync + fmt::Debug {
    fn render(&self) -> Recording;
    fn as_any(&self) -> &dyn std::any::Any;
}

#[derive(Debug, Clone)]
pub enum RecordingSource {
    File(PathBuf),
    Memory(Arc<Recording>),
    Recipe(Arc<dyn RecordingRecipe>),
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub id: String,
    pub session_id: String,
    pub sample_rate: f64,
    pub source: RecordingSource,
}

impl Trial {
    pub fn recording(&self) -> Result<Recording, DatasetError> {
        match &self.source {
            RecordingSource::File(path) => read_recording(path, self.sample_rate),
            RecordingSource::Memory(rec) => Ok(rec.as_ref().clone()),
            RecordingSource::Recipe(recipe) => Ok(recipe.render()),
        }
    }
}

/// Level of the hierarchy at which to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Subject,
    Session,
    Trial,
}

/// Immutable, fully indexed dataset.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    subjects: Vec<Subject>,
    sessions: Vec<Session>,
    trials: Vec<Trial>,
    subject_index: HashMap<String, usize>,
    session_index: HashMap<String, usize>,
    trial_index: HashMap<String, usize>,
    session_subject: Vec<usize>,
    trial_session: Vec<usize>,
}

impl Dataset {
    /// Builds and validates the index. Every trial must belong to exactly one session and
    /// every session to exactly one subject.
    pub fn new(subjects: Vec<Subject>, sessions: Vec<Session>, trials: Vec<Trial>) -> Result<Self, DatasetError> {
        let mut subject_index = HashMap::with_capacity(subjects.len());
        for (i, s) in subjects.iter().enumerate() {
            if subject_index.insert(s.id.clone(), i).is_some() {
                return Err(DatasetError::Integrity(format!("duplicate subject id {}", s.id)));
            }
            if !(s.body_mass > 0.0) || !(s.age > 0.0) {
                return Err(DatasetError::Integrity(format!(
                    "subject {} has non-positive age or body mass",
                    s.id
                )));
            }
        }
        let mut session_index = HashMap::with_capacity(sessions.len());
        let mut session_subject = Vec::with_capacity(sessions.len());
        for (i, s) in sessions.iter().enumerate() {
            if session_index.insert(s.id.clone(), i).is_some() {
                return Err(DatasetError::Integrity(format!("duplicate session id {}", s.id)));
            }
            let subj = *subject_index.get(&s.subject_id).ok_or_else(|| {
                DatasetError::Integrity(format!("session {} references unknown subject {}", s.id, s.subject_id))
            })?;
            if !(s.foot_length > 0.0) {
                return Err(DatasetError::Integrity(format!(
                    "session {} has non-positive foot length",
                    s.id
                )));
            }
            session_subject.push(subj);
        }
        let mut trial_index = HashMap::with_capacity(trials.len());
        let mut trial_session = Vec::with_capacity(trials.len());
        for (i, t) in trials.iter().enumerate() {
            if trial_index.insert(t.id.clone(), i).is_some() {
                return Err(DatasetError::Integrity(format!("duplicate trial id {}", t.id)));
            }
            let sess = *session_index.get(&t.session_id).ok_or_else(|| {
                DatasetError::Integrity(format!("trial {} references unknown session {}", t.id, t.session_id))
            })?;
            if !(t.sample_rate > 0.0) {
                return Err(DatasetError::Integrity(format!(
                    "trial {} has non-positive sample rate",
                    t.id
                )));
            }
            trial_session.push(sess);
        }
        // sessions must list exactly the trials pointing at them
        for (si, s) in sessions.iter().enumerate() {
            for tid in &s.trial_ids {
                match trial_index.get(tid) {
                    Some(&ti) if trial_session[ti] == si => {}
                    _ => {
                        return Err(DatasetError::Integrity(format!(
                            "session {} lists trial {} which does not belong to it",
                            s.id, tid
                        )))
                    }
                }
            }
        }
        let listed: usize = sessions.iter().map(|s| s.trial_ids.len()).sum();
        if listed != trials.len() {
            return Err(DatasetError::Integrity(format!(
                "sessions list {listed} trials but dataset holds {}",
                trials.len()
            )));
        }
        Ok(Dataset {
            subjects,
            sessions,
            trials,
            subject_index,
            session_index,
            trial_index,
            session_subject,
            trial_session,
        })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.subjects.len(), self.sessions.len(), self.trials.len())
    }

    pub fn subject(&self, id: &str) -> Option<&Subject> {
        self.subject_index.get(id).map(|&i| &self.subjects[i])
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.session_index.get(id).map(|&i| &self.sessions[i])
    }

    pub fn trial_position(&self, id: &str) -> Option<usize> {
        self.trial_index.get(id).copied()
    }

    pub fn session_of_trial(&self, trial_idx: usize) -> &Session {
        &self.sessions[self.trial_session[trial_idx]]
    }

    pub fn session_index_of_trial(&self, trial_idx: usize) -> usize {
        self.trial_session[trial_idx]
    }

    pub fn subject_of_session(&self, session_idx: usize) -> &Subject {
        &self.subjects[self.session_subject[session_idx]]
    }

    pub fn subject_index_of_trial(&self, trial_idx: usize) -> usize {
        self.session_subject[self.trial_session[trial_idx]]
    }

    pub fn subject_of_trial(&self, trial_idx: usize) -> &Subject {
        &self.subjects[self.subject_index_of_trial(trial_idx)]
    }

    pub fn class_of_trial(&self, trial_idx: usize) -> GaitClass {
        self.subject_of_trial(trial_idx).class
    }

    /// Session indices belonging to a subject, in dataset order.
    pub fn sessions_of_subject(&self, subject_idx: usize) -> Vec<usize> {
        (0..self.sessions.len())
            .filter(|&s| self.session_subject[s] == subject_idx)
            .collect()
    }

    /// Per-class counts at the requested level; every class is present in the map.
    pub fn class_counts(&self, level: Level) -> BTreeMap<GaitClass, usize> {
        let mut counts: BTreeMap<GaitClass, usize> = GaitClass::ALL.iter().map(|&c| (c, 0)).collect();
        match level {
            Level::Subject => {
                for s in &self.subjects {
                    *counts.get_mut(&s.class).unwrap() += 1;
                }
            }
            Level::Session => {
                for si in 0..self.sessions.len() {
                    *counts.get_mut(&self.subject_of_session(si).class).unwrap() += 1;
                }
            }
            Level::Trial => {
                for ti in 0..self.trials.len() {
                    *counts.get_mut(&self.class_of_trial(ti)).unwrap() += 1;
                }
            }
        }
        counts
    }

    /// Keeps the selected sessions (and their trials); subjects left without sessions are dropped.
    pub fn retain_sessions(&self, mut keep: impl FnMut(usize, &Session) -> bool) -> Dataset {
        let keep_session: Vec<bool> = self.sessions.iter().enumerate().map(|(i, s)| keep(i, s)).collect();
        let mut subject_used = vec![false; self.subjects.len()];
        for (si, &k) in keep_session.iter().enumerate() {
            if k {
                subject_used[self.session_subject[si]] = true;
            }
        }
        let subjects = self
            .subjects
            .iter()
            .zip(&subject_used)
            .filter(|(_, &u)| u)
            .map(|(s, _)| s.clone())
            .collect();
        let sessions = self
            .sessions
            .iter()
            .zip(&keep_session)
            .filter(|(_, &k)| k)
            .map(|(s, _)| s.clone())
            .collect();
        let trials = self
            .trials
            .iter()
            .enumerate()
            .filter(|(ti, _)| keep_session[self.trial_session[*ti]])
            .map(|(_, t)| t.clone())
            .collect();
        Dataset::new(subjects, sessions, trials).expect("subset of a valid dataset is valid")
    }

    /// Keeps all sessions of the selected subjects.
    pub fn retain_subjects(&self, mut keep: impl FnMut(&Subject) -> bool) -> Dataset {
        let keep_subject: Vec<bool> = self.subjects.iter().map(&mut keep).collect();
        let session_subject = self.session_subject.clone();
        self.retain_sessions(|si, _| keep_subject[session_subject[si]])
    }
}

fn malformed(file: &Path, line: u64, reason: impl Into<String>) -> DatasetError {
    DatasetError::MalformedRow {
        file: file.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn unit_violation(file: &Path, line: u64, reason: impl Into<String>) -> DatasetError {
    DatasetError::UnitViolation {
        file: file.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_f64(file: &Path, line: u64, field: &str, raw: &str) -> Result<f64, DatasetError> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| malformed(file, line, format!("field {field}: cannot parse {raw:?} as a number")))
}

/// Loads metadata and checks that every referenced recording exists. Recordings themselves
/// are read lazily when a trial is processed.
pub fn load_dataset(metadata_path: &Path, recordings_dir: &Path, sample_rate: f64) -> Result<Dataset, DatasetError> {
    let file = fs::File::open(metadata_path).map_err(|source| DatasetError::Io {
        path: metadata_path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|source| DatasetError::Csv {
            path: metadata_path.to_path_buf(),
            source,
        })?
        .clone();
    let mut col = [0usize; 10];
    for (k, name) in METADATA_COLUMNS.iter().enumerate() {
        col[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| malformed(metadata_path, 1, format!("missing column {name}")))?;
    }

    let mut subjects: Vec<Subject> = Vec::new();
    let mut subject_pos: HashMap<String, usize> = HashMap::new();
    let mut sessions: Vec<Session> = Vec::new();
    let mut session_pos: HashMap<String, usize> = HashMap::new();
    let mut trials: Vec<Trial> = Vec::new();

    for (row_no, record) in reader.records().enumerate() {
        // header is line 1
        let line = row_no as u64 + 2;
        let record = record.map_err(|e| malformed(metadata_path, line, e.to_string()))?;
        if record.len() < headers.len() {
            return Err(malformed(metadata_path, line, "too few fields"));
        }
        let get = |k: usize| record.get(col[k]).unwrap_or("");
        let subject_id = get(0).to_string();
        let class = GaitClass::parse(get(1))
            .ok_or_else(|| malformed(metadata_path, line, format!("unknown class {:?}", get(1))))?;
        let age = parse_f64(metadata_path, line, "age", get(2))?;
        let body_mass = parse_f64(metadata_path, line, "body_mass_kg", get(3))?;
        let sex =
            Sex::parse(get(4)).ok_or_else(|| malformed(metadata_path, line, format!("unknown sex {:?}", get(4))))?;
        let affected_side = AffectedSide::parse(get(5))
            .ok_or_else(|| malformed(metadata_path, line, format!("unknown affected_side {:?}", get(5))))?;
        let session_id = get(6).to_string();
        let foot_length = parse_f64(metadata_path, line, "foot_length_m", get(7))?;
        let trial_id = get(8).to_string();
        let recording_file = get(9).to_string();

        if subject_id.is_empty() || session_id.is_empty() || trial_id.is_empty() {
            return Err(malformed(metadata_path, line, "empty identifier"));
        }
        if !(body_mass > 0.0) {
            return Err(unit_violation(
                metadata_path,
                line,
                format!("body_mass_kg must be > 0, got {body_mass}"),
            ));
        }
        if !(age > 0.0) {
            return Err(unit_violation(
                metadata_path,
                line,
                format!("age must be > 0, got {age}"),
            ));
        }
        if !(foot_length > 0.0) {
            return Err(unit_violation(
                metadata_path,
                line,
                format!("foot_length_m must be > 0, got {foot_length}"),
            ));
        }

        let subject = Subject {
            id: subject_id.clone(),
            class,
            age,
            body_mass,
            sex,
            affected_side,
        };
        match subject_pos.get(&subject_id) {
            Some(&i) => {
                if subjects[i] != subject {
                    return Err(malformed(
                        metadata_path,
                        line,
                        format!("subject {subject_id} attributes differ from an earlier row"),
                    ));
                }
            }
            None => {
                subject_pos.insert(subject_id.clone(), subjects.len());
                subjects.push(subject);
            }
        }
        let si = match session_pos.get(&session_id) {
            Some(&i) => {
                let s = &sessions[i];
                if s.subject_id != subject_id || s.foot_length != foot_length {
                    return Err(malformed(
                        metadata_path,
                        line,
                        format!("session {session_id} attributes differ from an earlier row"),
                    ));
                }
                i
            }
            None => {
                session_pos.insert(session_id.clone(), sessions.len());
                sessions.push(Session {
                    id: session_id.clone(),
                    subject_id: subject_id.clone(),
                    foot_length,
                    trial_ids: Vec::new(),
                });
                sessions.len() - 1
            }
        };
        let path = recordings_dir.join(&recording_file);
        if !path.is_file() {
            return Err(DatasetError::MissingRecording { trial: trial_id, path });
        }
        sessions[si].trial_ids.push(trial_id.clone());
        trials.push(Trial {
            id: trial_id,
            session_id,
            sample_rate,
            source: RecordingSource::File(path),
        });
    }
    Dataset::new(subjects, sessions, trials)
}

/// Reads one recording CSV; both plates must carry the same number of samples.
pub fn read_recording(path: &Path, sample_rate: f64) -> Result<Recording, DatasetError> {
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|source| DatasetError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let mut col = [0usize; 6];
    for (k, name) in RECORDING_COLUMNS.iter().enumerate() {
        col[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| malformed(path, 1, format!("missing column {name}")))?;
    }
    let mut plates = [PlateSeries::default(), PlateSeries::default()];
    let mut record = csv::StringRecord::new();
    let mut line = 1u64;
    loop {
        let more = reader
            .read_record(&mut record)
            .map_err(|e| malformed(path, line + 1, e.to_string()))?;
        if !more {
            break;
        }
        line += 1;
        let field = |k: usize| record.get(col[k]).unwrap_or("");
        let plate = match field(0) {
            "1" => 0,
            "2" => 1,
            other => return Err(malformed(path, line, format!("plate must be 1 or 2, got {other:?}"))),
        };
        let p = &mut plates[plate];
        p.fx.push(parse_f64(path, line, "Fx_N", field(1))?);
        p.fy.push(parse_f64(path, line, "Fy_N", field(2))?);
        p.fz.push(parse_f64(path, line, "Fz_N", field(3))?);
        p.cop_x.push(parse_f64(path, line, "COPx_m", field(4))?);
        p.cop_y.push(parse_f64(path, line, "COPy_m", field(5))?);
    }
    if plates[0].len() != plates[1].len() {
        return Err(malformed(
            path,
            line,
            format!(
                "plates have unequal sample counts ({} vs {})",
                plates[0].len(),
                plates[1].len()
            ),
        ));
    }
    Ok(Recording { sample_rate, plates })
}

pub fn write_recording(path: &Path, rec: &Recording) -> Result<(), DatasetError> {
    use std::io::Write;
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{}", RECORDING_COLUMNS.join(",")).map_err(io_err)?;
    for (p, plate) in rec.plates.iter().enumerate() {
        for i in 0..plate.len() {
            writeln!(
                w,
                "{},{:.4},{:.4},{:.4},{:.6},{:.6}",
                p + 1,
                plate.fx[i],
                plate.fy[i],
                plate.fz[i],
                plate.cop_x[i],
                plate.cop_y[i]
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Writes `meta.csv` plus one recording per trial under `out_dir/recordings/`.
/// Returns the metadata path.
pub fn write_dataset(ds: &Dataset, out_dir: &Path) -> Result<PathBuf, DatasetError> {
    let rec_dir = out_dir.join("recordings");
    fs::create_dir_all(&rec_dir).map_err(|source| DatasetError::Io {
        path: rec_dir.clone(),
        source,
    })?;
    let meta_path = out_dir.join("meta.csv");
    let mut w = csv::Writer::from_path(&meta_path).map_err(|source| DatasetError::Csv {
        path: meta_path.clone(),
        source,
    })?;
    let csv_err = |source| DatasetError::Csv {
        path: meta_path.clone(),
        source,
    };
    w.write_record(METADATA_COLUMNS).map_err(csv_err)?;
    for (ti, trial) in ds.trials().iter().enumerate() {
        let session = ds.session_of_trial(ti);
        let subject = ds.subject_of_trial(ti);
        let file_name = format!("{}.csv", trial.id);
        let rec = trial.recording()?;
        write_recording(&rec_dir.join(&file_name), &rec)?;
        w.write_record([
            subject.id.as_str(),
            subject.class.code(),
            &format!("{}", subject.age),
            &format!("{}", subject.body_mass),
            subject.sex.as_str(),
            subject.affected_side.as_str(),
            session.id.as_str(),
            &format!("{}", session.foot_length),
            trial.id.as_str(),
            &file_name,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: meta_path.clone(),
        source,
    })?;
    Ok(meta_path)
}
