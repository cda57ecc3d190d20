//! Scripted experiment matrices: parameterization comparison, balancing studies and the
//! merged thigh/shank task, each cell a split → represent → train → evaluate pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classification::{
    evaluate, split_patient_disjoint, train, ClassifierKind, ClassifyError, EvaluationReport, GridSpec, Split,
    TrainConfig, TrainedModel,
};
use crate::dataset::{Dataset, GaitClass, Sex};
use crate::discriminativity::ClassPartition;
use crate::features::{process_dataset, FeatureConfig, FeatureSet, ParameterTable};
use crate::linalg::FeatureMatrix;
use crate::representations::{
    build_param_pca_representation, build_waveform_representation, normalize, params_representation, Normalization,
    RepresentationError, RepresentationKind, RepresentationModel,
};
use crate::synth::mix_seed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("class {class}: quota of {requested} persons exceeds the {available} available")]
    QuotaInfeasible {
        class: String,
        requested: usize,
        available: usize,
    },
    #[error("no trials of task {0} survive preprocessing")]
    EmptyTask(String),
    #[error("no test trials for task {0}")]
    EmptyTestSet(String),
    #[error("reference annotations: {0}")]
    Annotations(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Representation(#[from] RepresentationError),
}

/// Classification task: which classes are told apart and how they are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Five classes: N, C, A, K, H.
    Ncakh,
    /// Healthy against the four disorder classes pooled.
    Nvgd,
    /// Healthy, thigh (hip and knee) and shank (ankle and calcaneus).
    ThighShank,
}

impl Task {
    pub fn partition(self) -> ClassPartition {
        match self {
            Task::Ncakh => ClassPartition::five_class(),
            Task::Nvgd => ClassPartition::n_vs_gd(),
            Task::ThighShank => ClassPartition::thigh_shank(),
        }
    }

    /// Display name, as used in reports (`N/C/A/K/H`, `N/GD`, `N/THIGH/SHANK`).
    pub fn name(self) -> String {
        self.partition().name
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Task::Ncakh => "ncakh",
            Task::Nvgd => "nvgd",
            Task::ThighShank => "thigh-shank",
        }
    }

    pub fn from_name(s: &str) -> Option<Task> {
        [Task::Ncakh, Task::Nvgd, Task::ThighShank]
            .into_iter()
            .find(|t| t.cli_name() == s || t.name() == s)
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Task::from_name(s).ok_or_else(|| format!("unknown task '{s}' (expected ncakh, nvgd or thigh-shank)"))
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    #[default]
    None,
    OneSessionPerPerson,
    EqualPersonsPerClass,
    Both,
    MaleOnly,
}

impl BalanceMode {
    pub const ALL: [BalanceMode; 5] = [
        BalanceMode::None,
        BalanceMode::OneSessionPerPerson,
        BalanceMode::EqualPersonsPerClass,
        BalanceMode::Both,
        BalanceMode::MaleOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BalanceMode::None => "none",
            BalanceMode::OneSessionPerPerson => "one_session_per_person",
            BalanceMode::EqualPersonsPerClass => "equal_persons_per_class",
            BalanceMode::Both => "both",
            BalanceMode::MaleOnly => "male_only",
        }
    }

    /// Mixed into the experiment seed so each mode samples independently while `None`
    /// keeps the seed unchanged.
    pub fn tag(self) -> u64 {
        match self {
            BalanceMode::None => 0,
            BalanceMode::OneSessionPerPerson => 0x5e55_1001,
            BalanceMode::EqualPersonsPerClass => 0x9e45_0002,
            BalanceMode::Both => 0xb074_0003,
            BalanceMode::MaleOnly => 0x3a1e_0004,
        }
    }

    fn uses_quota(self) -> bool {
        matches!(self, BalanceMode::EqualPersonsPerClass | BalanceMode::Both)
    }
}

impl FromStr for BalanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        BalanceMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown balance mode '{s}'"))
    }
}

impl fmt::Display for BalanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceSpec {
    pub mode: BalanceMode,
    /// Persons kept per class for the quota modes; classes without an entry keep everyone.
    pub quotas: BTreeMap<GaitClass, usize>,
    pub seed: u64,
}

impl BalanceSpec {
    /// Spec for `task` with the default quotas and the seed derived from `experiment_seed`.
    pub fn for_task(ds: &Dataset, task: Task, mode: BalanceMode, experiment_seed: u64) -> BalanceSpec {
        BalanceSpec {
            mode,
            quotas: if mode.uses_quota() {
                default_quotas(ds, task)
            } else {
                BTreeMap::new()
            },
            seed: experiment_seed ^ mode.tag(),
        }
    }
}

/// Quotas that give every label group of `task` the same number of persons, split evenly
/// among the group's classes.
///
/// The common group size is the largest multiple of the lcm of the group sizes that every
/// group can supply; a group of `m` classes can supply `m` times its smallest class.
pub fn default_quotas(ds: &Dataset, task: Task) -> BTreeMap<GaitClass, usize> {
    let persons = ds.class_counts(crate::dataset::Level::Subject);
    let partition = task.partition();
    let lcm = partition
        .groups
        .iter()
        .map(|(_, members)| members.len())
        .fold(1, |acc, m| acc / gcd(acc, m) * m);
    let per_group = partition
        .groups
        .iter()
        .map(|(_, members)| members.len() * members.iter().map(|c| persons[c]).min().unwrap_or(0))
        .min()
        .unwrap_or(0);
    let per_group = per_group / lcm * lcm;
    let mut quotas = BTreeMap::new();
    for (_, members) in &partition.groups {
        for &c in members {
            quotas.insert(c, per_group / members.len());
        }
    }
    quotas
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn id_seed(seed: u64, id: &str) -> u64 {
    id.bytes()
        .fold(mix_seed(seed, id.len() as u64), |h, b| mix_seed(h, b as u64))
}

/// Deterministic subset of `ds` according to `spec`.
pub fn apply_balance(ds: &Dataset, spec: &BalanceSpec) -> Result<Dataset, ExperimentError> {
    Ok(match spec.mode {
        BalanceMode::None => ds.clone(),
        BalanceMode::OneSessionPerPerson => one_session_per_person(ds, spec.seed),
        BalanceMode::EqualPersonsPerClass => equal_persons(ds, &spec.quotas, spec.seed)?,
        BalanceMode::Both => one_session_per_person(&equal_persons(ds, &spec.quotas, spec.seed)?, spec.seed),
        BalanceMode::MaleOnly => ds.retain_subjects(|s| s.sex == Sex::Male),
    })
}

/// The chosen session depends only on the seed, the subject id and its session ids, so a
/// second application keeps the same sessions.
fn one_session_per_person(ds: &Dataset, seed: u64) -> Dataset {
    let mut keep = BTreeSet::new();
    for (si, subject) in ds.subjects().iter().enumerate() {
        let sessions = ds.sessions_of_subject(si);
        if sessions.is_empty() {
            continue;
        }
        let mut ids: Vec<&str> = sessions.iter().map(|&i| ds.sessions()[i].id.as_str()).collect();
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(id_seed(seed, &subject.id));
        // A single-session subject keeps it without consuming randomness.
        let chosen = if ids.len() == 1 {
            ids[0]
        } else {
            ids.choose(&mut rng).copied().unwrap_or(ids[0])
        };
        keep.insert(chosen.to_string());
    }
    ds.retain_sessions(|_, s| keep.contains(&s.id))
}

fn equal_persons(ds: &Dataset, quotas: &BTreeMap<GaitClass, usize>, seed: u64) -> Result<Dataset, ExperimentError> {
    let mut by_class: BTreeMap<GaitClass, Vec<&str>> = BTreeMap::new();
    for s in ds.subjects() {
        by_class.entry(s.class).or_default().push(&s.id);
    }
    let mut keep: BTreeSet<String> = BTreeSet::new();
    for (class, mut ids) in by_class {
        ids.sort_unstable();
        match quotas.get(&class) {
            Some(&q) => {
                if q > ids.len() {
                    return Err(ExperimentError::QuotaInfeasible {
                        class: class.code().to_string(),
                        requested: q,
                        available: ids.len(),
                    });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, class.index() as u64));
                ids.shuffle(&mut rng);
                keep.extend(ids[..q].iter().map(|s| s.to_string()));
            }
            None => keep.extend(ids.iter().map(|s| s.to_string())),
        }
    }
    for (class, &q) in quotas {
        if q > 0 && !ds.subjects().iter().any(|s| s.class == *class) {
            return Err(ExperimentError::QuotaInfeasible {
                class: class.code().to_string(),
                requested: q,
                available: 0,
            });
        }
    }
    Ok(ds.retain_subjects(|s| keep.contains(&s.id)))
}

/// A dataset with its per-trial features and parameter table computed once.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub dataset: Dataset,
    pub features: FeatureSet,
    pub table: ParameterTable,
}

impl PreparedDataset {
    pub fn new(dataset: Dataset, cfg: &FeatureConfig) -> PreparedDataset {
        let features = process_dataset(&dataset, cfg);
        let table = ParameterTable::from_features(&dataset, &features);
        PreparedDataset {
            dataset,
            features,
            table,
        }
    }

    /// Reuses the features of this dataset for `subset`, whose sessions must be whole
    /// sessions of this dataset (as produced by [`apply_balance`]).
    pub fn restrict(&self, subset: Dataset) -> PreparedDataset {
        let mut trials = Vec::new();
        for tf in &self.features.trials {
            let id = &self.dataset.trials()[tf.trial_index].id;
            if let Some(pos) = subset.trial_position(id) {
                let mut tf = tf.clone();
                tf.trial_index = pos;
                trials.push(tf);
            }
        }
        trials.sort_by_key(|t| t.trial_index);
        let features = FeatureSet {
            trials,
            exclusions: self
                .features
                .exclusions
                .iter()
                .filter(|e| subset.trial_position(&e.trial_id).is_some())
                .cloned()
                .collect(),
            single_step_sessions: self
                .features
                .single_step_sessions
                .iter()
                .filter(|s| subset.session(s).is_some())
                .cloned()
                .collect(),
        };
        let table = ParameterTable::from_features(&subset, &features);
        PreparedDataset {
            dataset: subset,
            features,
            table,
        }
    }
}

/// The six representation/normalization combinations compared across classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    ParamsZscore,
    ParamsMinmax,
    PcaForces,
    PcaAll5,
    PcaOfParamsZscore,
    PcaOfParamsMinmax,
}

impl Parameterization {
    pub const ALL: [Parameterization; 6] = [
        Parameterization::ParamsZscore,
        Parameterization::ParamsMinmax,
        Parameterization::PcaForces,
        Parameterization::PcaAll5,
        Parameterization::PcaOfParamsZscore,
        Parameterization::PcaOfParamsMinmax,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Parameterization::ParamsZscore => "params-zscore",
            Parameterization::ParamsMinmax => "params-minmax",
            Parameterization::PcaForces => "pca-forces",
            Parameterization::PcaAll5 => "pca-all5",
            Parameterization::PcaOfParamsZscore => "pca-of-params-zscore",
            Parameterization::PcaOfParamsMinmax => "pca-of-params-minmax",
        }
    }

    /// Human-readable row label.
    pub fn label(self) -> &'static str {
        match self {
            Parameterization::ParamsZscore | Parameterization::ParamsMinmax => {
                "GRF parameters (discrete and time-distance)"
            }
            Parameterization::PcaForces => "PCA on F_V, F_AP, F_ML",
            Parameterization::PcaAll5 => "PCA on F_V, F_AP, F_ML, COP_AP, COP_ML",
            Parameterization::PcaOfParamsZscore => "PCA on z-standardized GRF parameters",
            Parameterization::PcaOfParamsMinmax => "PCA on min-max normalized GRF parameters",
        }
    }

    pub fn kind(self) -> RepresentationKind {
        match self {
            Parameterization::ParamsZscore | Parameterization::ParamsMinmax => RepresentationKind::Params,
            Parameterization::PcaForces => RepresentationKind::all_forces(),
            Parameterization::PcaAll5 => RepresentationKind::all_five(),
            Parameterization::PcaOfParamsZscore => RepresentationKind::PcaOfParams(Normalization::ZScore),
            Parameterization::PcaOfParamsMinmax => RepresentationKind::PcaOfParams(Normalization::MinMax),
        }
    }

    /// Normalization applied to the final feature columns before classification.
    pub fn normalization(self) -> Normalization {
        match self {
            Parameterization::ParamsMinmax => Normalization::MinMax,
            _ => Normalization::ZScore,
        }
    }
}

/// Everything that distinguishes one experiment cell from another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSpec {
    /// Table the cell belongs to (`table3`, `table4`, `merge` or `custom`).
    pub table: String,
    /// Row key within the table.
    pub row: String,
    pub task: Task,
    pub representation: RepresentationKind,
    pub normalization: Normalization,
    pub classifier: ClassifierKind,
    pub balance: BalanceMode,
}

impl CellSpec {
    pub fn new(task: Task, parameterization: Parameterization, classifier: ClassifierKind) -> CellSpec {
        CellSpec {
            table: "custom".into(),
            row: parameterization.key().into(),
            task,
            representation: parameterization.kind(),
            normalization: parameterization.normalization(),
            classifier,
            balance: BalanceMode::None,
        }
    }

    /// File-name stem unique within a table.
    pub fn file_stem(&self) -> String {
        format!(
            "{}_{}_{}_{}",
            self.table,
            self.row,
            self.task.cli_name(),
            self.classifier
        )
    }
}

/// Settings shared by every cell of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub train_fraction: f64,
    pub variance_target: f64,
    pub grid: GridSpec,
    pub folds: usize,
    /// Per-class loss weights for the SVM; `None` weighs every class equally.
    pub class_weights: Option<Vec<f64>>,
    pub features: FeatureConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            train_fraction: 0.65,
            variance_target: 0.98,
            grid: GridSpec::full(),
            folds: 5,
            class_weights: None,
            features: FeatureConfig::default(),
        }
    }
}

/// A fitted cell: enough to score new data with the same representation and classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub cell: CellSpec,
    pub config: PipelineConfig,
    pub split: Split,
    pub class_names: Vec<String>,
    /// Number of training rows the model was fit on.
    pub n_train: usize,
    pub representation: RepresentationModel,
    pub model: TrainedModel,
}

/// Rows of one cell's feature matrix that belong to the task, with labels and subjects.
struct TaskRows {
    rows: Vec<usize>,
    labels: Vec<usize>,
    subjects: Vec<usize>,
}

impl TaskRows {
    fn pick(&self, keep: impl Fn(usize) -> bool) -> TaskRows {
        let mut out = TaskRows {
            rows: Vec::new(),
            labels: Vec::new(),
            subjects: Vec::new(),
        };
        for i in 0..self.rows.len() {
            if keep(self.subjects[i]) {
                out.rows.push(self.rows[i]);
                out.labels.push(self.labels[i]);
                out.subjects.push(self.subjects[i]);
            }
        }
        out
    }
}

fn task_rows(ds: &Dataset, partition: &ClassPartition, trial_indices: &[usize]) -> TaskRows {
    let sel = partition.select(ds, trial_indices);
    TaskRows {
        rows: sel.rows,
        labels: sel.labels,
        subjects: sel.subjects,
    }
}

fn universe(prep: &PreparedDataset, kind: &RepresentationKind) -> Vec<usize> {
    match kind {
        RepresentationKind::PcaSignals(_) => prep.features.trials.iter().map(|t| t.trial_index).collect(),
        _ => prep.table.trial_indices.clone(),
    }
}

fn variance_target_of(kind: &RepresentationKind, target: f64) -> Option<f64> {
    (!matches!(kind, RepresentationKind::Params)).then_some(target)
}

/// Runs one cell on an already balanced dataset: patient-disjoint split, representation fit
/// on the training subjects, normalization fit on the training rows, grid search, and
/// evaluation on the held-out subjects.
pub fn run_cell(
    prep: &PreparedDataset,
    cell: &CellSpec,
    cfg: &PipelineConfig,
) -> Result<(EvaluationReport, TrainedPipeline), ExperimentError> {
    let ds = &prep.dataset;
    let partition = cell.task.partition();
    let split = split_patient_disjoint(ds, cfg.train_fraction, cfg.seed)?;
    let is_train: Vec<bool> = ds.subjects().iter().map(|s| split.is_train(&s.id)).collect();

    let all = task_rows(ds, &partition, &universe(prep, &cell.representation));
    if all.rows.is_empty() {
        return Err(ExperimentError::EmptyTask(partition.name.clone()));
    }
    let train_rows = all.pick(|s| is_train[s]);
    let test_rows = all.pick(|s| !is_train[s]);
    if test_rows.rows.is_empty() {
        return Err(ExperimentError::EmptyTestSet(partition.name.clone()));
    }
    if train_rows.rows.is_empty() {
        return Err(ExperimentError::Classify(ClassifyError::EmptyInput));
    }

    let raw = match &cell.representation {
        RepresentationKind::Params => params_representation(&prep.table),
        RepresentationKind::PcaSignals(signals) => {
            build_waveform_representation(&prep.features, signals, cfg.variance_target, &train_rows.rows)?
        }
        RepresentationKind::PcaOfParams(pre) => {
            build_param_pca_representation(&prep.table, *pre, cfg.variance_target, &train_rows.rows, &split.id)?
        }
    };
    let rep = normalize(&raw, cell.normalization, &train_rows.rows, &split.id)?;

    let mut train_cfg = TrainConfig::new(cell.classifier, cfg.grid.clone(), cfg.seed);
    train_cfg.folds = cfg.folds;
    train_cfg.class_weights = cfg.class_weights.clone();
    let n_classes = partition.n_classes();
    let model = train(
        &rep.matrix,
        &train_rows.rows,
        &train_rows.labels,
        &train_rows.subjects,
        n_classes,
        &train_cfg,
    )?;
    let class_names = partition.class_names();
    let mut report = evaluate(
        &model,
        &rep.matrix,
        &test_rows.rows,
        &test_rows.labels,
        Some(&test_rows.subjects),
        &class_names,
    );
    report.task = partition.name.clone();
    report.representation = rep.name();
    report.normalization = cell.normalization.to_string();
    report.n_train = train_rows.rows.len();
    report.provenance.seed = cfg.seed;
    report.provenance.split_id = split.id.clone();
    report.provenance.grid = cfg.grid.clone();
    report.provenance.folds = cfg.folds;
    report.provenance.variance_target = variance_target_of(&cell.representation, cfg.variance_target);
    report.provenance.train_fraction = cfg.train_fraction;
    report.provenance.balance = cell.balance.name().to_string();

    let pipeline = TrainedPipeline {
        cell: cell.clone(),
        config: cfg.clone(),
        split,
        class_names,
        n_train: train_rows.rows.len(),
        representation: rep.model(),
        model,
    };
    Ok((report, pipeline))
}

impl TrainedPipeline {
    /// Scores the trials of `prep` that belong to the task; with `held_out_only`, only
    /// subjects on the test side of the stored split.
    pub fn evaluate_on(
        &self,
        prep: &PreparedDataset,
        held_out_only: bool,
    ) -> Result<EvaluationReport, ExperimentError> {
        let partition = self.cell.task.partition();
        let (indices, matrix): (Vec<usize>, FeatureMatrix) =
            self.representation.transform(&prep.features, &prep.table)?;
        let ds = &prep.dataset;
        let keep: Vec<bool> = ds
            .subjects()
            .iter()
            .map(|s| !held_out_only || !self.split.is_train(&s.id))
            .collect();
        let rows = task_rows(ds, &partition, &indices).pick(|s| keep[s]);
        if rows.rows.is_empty() {
            return Err(ExperimentError::EmptyTestSet(partition.name.clone()));
        }
        let mut report = evaluate(
            &self.model,
            &matrix,
            &rows.rows,
            &rows.labels,
            Some(&rows.subjects),
            &self.class_names,
        );
        report.task = partition.name;
        report.representation = self.representation.name.clone();
        report.normalization = self.cell.normalization.to_string();
        report.n_train = self.n_train;
        report.provenance.seed = self.config.seed;
        report.provenance.split_id = self.split.id.clone();
        report.provenance.grid = self.config.grid.clone();
        report.provenance.folds = self.config.folds;
        report.provenance.variance_target = variance_target_of(&self.cell.representation, self.config.variance_target);
        report.provenance.train_fraction = self.config.train_fraction;
        report.provenance.balance = self.cell.balance.name().to_string();
        Ok(report)
    }
}

/// Outcome of one cell; failed cells keep their error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub spec: CellSpec,
    pub label: String,
    pub report: Option<EvaluationReport>,
    pub error: Option<String>,
    /// Published reference value for the same cell, when annotations are requested.
    pub reference: Option<ReferenceValue>,
}

impl CellResult {
    pub fn divergence(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.divergence)
    }
}

fn outcome(spec: CellSpec, label: String, result: Result<EvaluationReport, ExperimentError>) -> CellResult {
    match result {
        Ok(report) => CellResult {
            spec,
            label,
            report: Some(report),
            error: None,
            reference: None,
        },
        Err(e) => {
            log::warn!("cell {} failed: {e}", spec.file_stem());
            CellResult {
                spec,
                label,
                report: None,
                error: Some(e.to_string()),
                reference: None,
            }
        }
    }
}

/// The 24 cells of the parameterization comparison: 6 rows × 2 tasks × 2 SVM kernels.
pub fn table3_cells() -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for p in Parameterization::ALL {
        for task in [Task::Ncakh, Task::Nvgd] {
            for classifier in [ClassifierKind::SvmLinear, ClassifierKind::SvmRbf] {
                cells.push(CellSpec {
                    table: "table3".into(),
                    ..CellSpec::new(task, p, classifier)
                });
            }
        }
    }
    cells
}

/// Balancing cell: waveform PCA of all five signals with a linear SVM.
pub fn balance_cell(task: Task, mode: BalanceMode) -> CellSpec {
    CellSpec {
        table: "table4".into(),
        row: mode.name().into(),
        balance: mode,
        ..CellSpec::new(task, Parameterization::PcaAll5, ClassifierKind::SvmLinear)
    }
}

/// The merged thigh/shank task under the balancing-study configuration.
pub fn merge_cell() -> CellSpec {
    CellSpec {
        table: "merge".into(),
        ..CellSpec::new(Task::ThighShank, Parameterization::PcaAll5, ClassifierKind::SvmLinear)
    }
}

/// The balance modes of the balancing study, in reporting order.
pub const TABLE4_MODES: [BalanceMode; 4] = [
    BalanceMode::OneSessionPerPerson,
    BalanceMode::EqualPersonsPerClass,
    BalanceMode::Both,
    BalanceMode::MaleOnly,
];

pub fn table4_cells() -> Vec<CellSpec> {
    TABLE4_MODES
        .iter()
        .flat_map(|&m| [Task::Ncakh, Task::Nvgd].map(|t| balance_cell(t, m)))
        .collect()
}

fn label_of(spec: &CellSpec) -> String {
    Parameterization::ALL
        .iter()
        .find(|p| p.key() == spec.row)
        .map(|p| p.label().to_string())
        .unwrap_or_else(|| spec.row.clone())
}

/// Runs arbitrary cells, balancing each one's dataset per its mode and task first.
pub fn run_cells(prep: &PreparedDataset, cells: &[CellSpec], cfg: &PipelineConfig) -> Vec<CellResult> {
    cells
        .par_iter()
        .map(|spec| {
            let result =
                balanced(prep, spec.task, spec.balance, cfg.seed).and_then(|p| run_cell(&p, spec, cfg).map(|(r, _)| r));
            outcome(spec.clone(), label_of(spec), result)
        })
        .collect()
}

/// `prep` restricted by the balance mode for `task` (a plain clone for `None`).
pub fn balanced(
    prep: &PreparedDataset,
    task: Task,
    mode: BalanceMode,
    seed: u64,
) -> Result<PreparedDataset, ExperimentError> {
    if mode == BalanceMode::None {
        return Ok(prep.clone());
    }
    let spec = BalanceSpec::for_task(&prep.dataset, task, mode, seed);
    Ok(prep.restrict(apply_balance(&prep.dataset, &spec)?))
}

pub fn run_table3(prep: &PreparedDataset, cfg: &PipelineConfig) -> Vec<CellResult> {
    run_cells(prep, &table3_cells(), cfg)
}

pub fn run_table4(prep: &PreparedDataset, cfg: &PipelineConfig) -> Vec<CellResult> {
    run_cells(prep, &table4_cells(), cfg)
}

/// Published value of one cell, divergence and accuracy in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub table: String,
    pub row: String,
    pub task: String,
    pub classifier: String,
    pub divergence: f64,
    pub accuracy: f64,
}

const BUILTIN_REFERENCE: &str = include_str!("../../presets/reference.csv");

/// Parses an annotations CSV with header `table,row,task,classifier,divergence,accuracy`.
pub fn parse_reference(text: &str) -> Result<Vec<ReferenceValue>, ExperimentError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|r| r.map_err(|e| ExperimentError::Annotations(e.to_string())))
        .collect()
}

pub fn builtin_reference() -> Vec<ReferenceValue> {
    parse_reference(BUILTIN_REFERENCE).expect("bundled annotations parse")
}

/// Attaches the matching reference value (if any) to each result.
pub fn annotate(results: &mut [CellResult], reference: &[ReferenceValue]) {
    for r in results {
        let task = r.spec.task.name();
        let classifier = r.spec.classifier.to_string();
        r.reference = reference
            .iter()
            .find(|v| v.table == r.spec.table && v.row == r.spec.row && v.task == task && v.classifier == classifier)
            .cloned();
    }
}

/// One line per cell; reference columns are empty unless the result was annotated.
pub fn write_results_csv(results: &[CellResult], w: impl Write) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "table",
        "row",
        "label",
        "task",
        "classifier",
        "balance",
        "dims",
        "n_train",
        "n_test",
        "baseline",
        "accuracy",
        "divergence",
        "patient_majority_accuracy",
        "reference_divergence",
        "reference_accuracy",
        "error",
    ])?;
    let num = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in results {
        let rep = r.report.as_ref();
        out.write_record([
            r.spec.table.clone(),
            r.spec.row.clone(),
            r.label.clone(),
            r.spec.task.name(),
            r.spec.classifier.to_string(),
            r.spec.balance.name().to_string(),
            rep.map(|x| x.dims.to_string()).unwrap_or_default(),
            rep.map(|x| x.n_train.to_string()).unwrap_or_default(),
            rep.map(|x| x.n_test.to_string()).unwrap_or_default(),
            num(rep.map(|x| x.baseline)),
            num(rep.map(|x| x.accuracy)),
            num(rep.map(|x| x.divergence)),
            num(rep.and_then(|x| x.patient_majority_accuracy)),
            num(r.reference.as_ref().map(|v| v.divergence)),
            num(r.reference.as_ref().map(|v| v.accuracy)),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Recovers the cell and settings a report was produced with, for an exact re-run.
pub fn replay_config(report: &EvaluationReport, features: FeatureConfig) -> PipelineConfig {
    PipelineConfig {
        seed: report.provenance.seed,
        train_fraction: report.provenance.train_fraction,
        variance_target: report.provenance.variance_target.unwrap_or(0.98),
        grid: report.provenance.grid.clone(),
        folds: report.provenance.folds,
        class_weights: None,
        features,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_counts() {
        assert_eq!(table3_cells().len(), 24);
        assert_eq!(table4_cells().len(), 8);
        let stems: BTreeSet<String> = table3_cells().iter().map(|c| c.file_stem()).collect();
        assert_eq!(stems.len(), 24);
    }

    #[test]
    fn bundled_reference_covers_every_cell() {
        let mut results: Vec<CellResult> = table3_cells()
            .into_iter()
            .chain(table4_cells())
            .chain([merge_cell()])
            .map(|spec| CellResult {
                label: label_of(&spec),
                spec,
                report: None,
                error: None,
                reference: None,
            })
            .collect();
        annotate(&mut results, &builtin_reference());
        assert!(results.iter().all(|r| r.reference.is_some()));
        let both = results
            .iter()
            .find(|r| r.spec.row == "both" && r.spec.task == Task::Ncakh)
            .and_then(|r| r.reference.clone())
            .unwrap();
        assert_eq!((both.divergence, both.accuracy), (39.2, 59.2));
    }

    #[test]
    fn task_names_round_trip() {
        for t in [Task::Ncakh, Task::Nvgd, Task::ThighShank] {
            assert_eq!(t.cli_name().parse::<Task>().unwrap(), t);
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
        }
        for m in BalanceMode::ALL {
            assert_eq!(m.name().parse::<BalanceMode>().unwrap(), m);
        }
    }
}
