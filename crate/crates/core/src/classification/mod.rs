//! Classifiers with patient-disjoint grid-search cross-validation: SVM (linear, RBF), k-NN
//! and MLP, plus test-set evaluation.

mod knn;
mod mlp;
mod split;
mod svm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discriminativity::zero_rule_baseline;
use crate::linalg::FeatureMatrix;

pub use knn::KnnModel;
pub use mlp::{Layer, MlpConfig, MlpModel};
pub use split::{fold_rows, is_patient_disjoint, patient_folds, split_patient_disjoint, Split};
pub use svm::{train_binary, train_ovo, BinarySvm, DualSolution, Kernel, OvoSvm, SmoConfig};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("class {class} has {subjects} subject(s); at least 2 are needed for a split")]
    ClassTooSmall { class: String, subjects: usize },
    #[error("SMO did not converge within {iterations} iterations (KKT violation {violation:.3e})")]
    NonConvergence { iterations: usize, violation: f64 },
    #[error("MLP loss became non-finite in epoch {epoch}")]
    DivergingLoss { epoch: usize },
    #[error("invalid classifier configuration: {0}")]
    InvalidConfig(String),
    #[error("no training rows")]
    EmptyInput,
    #[error("every grid point failed; first failure: {0}")]
    AllGridPointsFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    SvmLinear,
    SvmRbf,
    Knn,
    Mlp,
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "svm-linear" => Ok(ClassifierKind::SvmLinear),
            "svm-rbf" => Ok(ClassifierKind::SvmRbf),
            "knn" => Ok(ClassifierKind::Knn),
            "mlp" => Ok(ClassifierKind::Mlp),
            other => Err(format!("unknown classifier '{other}'")),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::SvmLinear => "svm-linear",
            ClassifierKind::SvmRbf => "svm-rbf",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Mlp => "mlp",
        })
    }
}

/// Hyperparameter grids. SVM values are base-2 exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub linear_c_exponents: Vec<i32>,
    pub rbf_c_exponents: Vec<i32>,
    pub rbf_gamma_exponents: Vec<i32>,
    pub knn_k: Vec<usize>,
    pub mlp_layouts: Vec<Vec<usize>>,
}

fn stepped(lo: i32, hi: i32) -> Vec<i32> {
    (lo..=hi).step_by(2).collect()
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::full()
    }
}

impl GridSpec {
    /// C ∈ 2^{−5..15} (linear), C ∈ 2^{−1..15} and γ ∈ 2^{−15..5} (RBF), exponent step 2;
    /// odd k from 1 to 31; layouts (16), (32), (32, 16).
    pub fn full() -> GridSpec {
        GridSpec {
            linear_c_exponents: stepped(-5, 15),
            rbf_c_exponents: stepped(-1, 15),
            rbf_gamma_exponents: stepped(-15, 5),
            knn_k: (1..=31).step_by(2).collect(),
            mlp_layouts: vec![vec![16], vec![32], vec![32, 16]],
        }
    }

    /// A few central grid points, for runs that must finish in seconds.
    pub fn quick() -> GridSpec {
        GridSpec {
            linear_c_exponents: vec![-5, -3],
            rbf_c_exponents: vec![1, 3],
            rbf_gamma_exponents: vec![-7, -5],
            knn_k: vec![1, 5, 11, 21],
            mlp_layouts: vec![vec![16], vec![32]],
        }
    }

    pub fn validate(&self, kind: ClassifierKind) -> Result<(), ClassifyError> {
        let empty = match kind {
            ClassifierKind::SvmLinear => self.linear_c_exponents.is_empty(),
            ClassifierKind::SvmRbf => self.rbf_c_exponents.is_empty() || self.rbf_gamma_exponents.is_empty(),
            ClassifierKind::Knn => self.knn_k.is_empty() || self.knn_k.contains(&0),
            ClassifierKind::Mlp => self.mlp_layouts.is_empty(),
        };
        if empty {
            return Err(ClassifyError::InvalidConfig(format!(
                "empty or invalid grid for {kind}"
            )));
        }
        Ok(())
    }

    /// Grid points in tie-break order: ascending C, then ascending γ (or k, or layout order).
    pub fn points(&self, kind: ClassifierKind) -> Vec<Hyperparameters> {
        match kind {
            ClassifierKind::SvmLinear => {
                let mut c = self.linear_c_exponents.clone();
                c.sort();
                c.into_iter()
                    .map(|e| Hyperparameters {
                        c: Some(2f64.powi(e)),
                        ..Hyperparameters::default()
                    })
                    .collect()
            }
            ClassifierKind::SvmRbf => {
                let mut c = self.rbf_c_exponents.clone();
                c.sort();
                let mut g = self.rbf_gamma_exponents.clone();
                g.sort();
                c.iter()
                    .flat_map(|&ce| {
                        g.iter().map(move |&ge| Hyperparameters {
                            c: Some(2f64.powi(ce)),
                            gamma: Some(2f64.powi(ge)),
                            ..Hyperparameters::default()
                        })
                    })
                    .collect()
            }
            ClassifierKind::Knn => {
                let mut k = self.knn_k.clone();
                k.sort();
                k.into_iter()
                    .map(|k| Hyperparameters {
                        k: Some(k),
                        ..Hyperparameters::default()
                    })
                    .collect()
            }
            ClassifierKind::Mlp => self
                .mlp_layouts
                .iter()
                .map(|h| Hyperparameters {
                    hidden: Some(h.clone()),
                    ..Hyperparameters::default()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ClassifierKind,
    pub grid: GridSpec,
    pub folds: usize,
    /// Per-class multipliers of C (SVM only); `None` is uniform.
    pub class_weights: Option<Vec<f64>>,
    pub smo: SmoConfig,
    /// Schedule for the MLP; its `hidden` field is replaced by each grid layout.
    pub mlp: MlpConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(kind: ClassifierKind, grid: GridSpec, seed: u64) -> TrainConfig {
        TrainConfig {
            kind,
            grid,
            folds: 5,
            class_weights: None,
            smo: SmoConfig::default(),
            mlp: MlpConfig::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierState {
    Svm(OvoSvm),
    Knn(KnnModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub hyperparameters: Hyperparameters,
    pub cv_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ClassifierKind,
    pub n_classes: usize,
    pub state: ClassifierState,
    pub hyperparameters: Hyperparameters,
    /// Mean fold accuracy (%) of the selected point; `None` when the grid has one point.
    pub cv_accuracy: Option<f64>,
    pub grid: Vec<GridPointResult>,
    /// Largest box and equality constraint violations over the pairwise SVM duals.
    pub dual_violation: Option<(f64, f64)>,
}

impl TrainedModel {
    pub fn predict_row(&self, x: &[f64]) -> usize {
        match &self.state {
            ClassifierState::Svm(m) => m.predict_row(x),
            ClassifierState::Knn(m) => m.predict_row(x),
            ClassifierState::Mlp(m) => m.predict_row(x),
        }
    }

    pub fn predict(&self, x: &FeatureMatrix, rows: &[usize]) -> Vec<usize> {
        rows.par_iter().map(|&r| self.predict_row(x.row(r))).collect()
    }
}

fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Fitted {
    state: ClassifierState,
    dual_violation: Option<(f64, f64)>,
}

fn fit_point(
    x: &FeatureMatrix,
    rows: &[usize],
    labels: &[usize],
    n_classes: usize,
    hp: &Hyperparameters,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Fitted, ClassifyError> {
    let uniform = vec![1.0; n_classes];
    let weights = cfg.class_weights.as_deref().unwrap_or(&uniform);
    if weights.len() < n_classes {
        return Err(ClassifyError::InvalidConfig(format!(
            "{} class weights given for {n_classes} classes",
            weights.len()
        )));
    }
    match cfg.kind {
        ClassifierKind::SvmLinear | ClassifierKind::SvmRbf => {
            let kernel = match hp.gamma {
                Some(gamma) => Kernel::Rbf { gamma },
                None => Kernel::Linear,
            };
            let c = hp.c.expect("SVM grid point has C");
            let (model, duals) = train_ovo(x, rows, labels, n_classes, c, kernel, weights, &cfg.smo)?;
            let violation = duals.iter().fold((0.0f64, 0.0f64), |acc, d| {
                let (b, e) = d.constraint_violation();
                (acc.0.max(b), acc.1.max(e))
            });
            Ok(Fitted {
                state: ClassifierState::Svm(model),
                dual_violation: Some(violation),
            })
        }
        ClassifierKind::Knn => Ok(Fitted {
            state: ClassifierState::Knn(KnnModel::fit(x, rows, labels, n_classes, hp.k.expect("k"))),
            dual_violation: None,
        }),
        ClassifierKind::Mlp => {
            let mlp_cfg = MlpConfig {
                hidden: hp.hidden.clone().expect("layout"),
                ..cfg.mlp.clone()
            };
            Ok(Fitted {
                state: ClassifierState::Mlp(MlpModel::train(x, rows, labels, n_classes, &mlp_cfg, seed)?),
                dual_violation: None,
            })
        }
    }
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    100.0 * hits as f64 / truth.len().max(1) as f64
}

/// Grid search with patient-disjoint cross-validation, then a refit of the best point on all
/// of `rows`. `labels` and `subjects` are aligned with `rows`.
pub fn train(
    x: &FeatureMatrix,
    rows: &[usize],
    labels: &[usize],
    subjects: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<TrainedModel, ClassifyError> {
    if rows.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    cfg.grid.validate(cfg.kind)?;
    if cfg.folds < 2 {
        return Err(ClassifyError::InvalidConfig("need at least 2 folds".into()));
    }
    let points = cfg.grid.points(cfg.kind);
    let mut results: Vec<GridPointResult> = Vec::new();
    let best_index = if points.len() == 1 {
        results.push(GridPointResult {
            hyperparameters: points[0].clone(),
            cv_accuracy: None,
            error: None,
        });
        0
    } else {
        let folds = patient_folds(subjects, labels, cfg.folds, cfg.seed);
        let fold_sets: Vec<(Vec<usize>, Vec<usize>)> = (0..cfg.folds).map(|f| fold_rows(&folds, f)).collect();
        let cv: Vec<Result<f64, ClassifyError>> = if cfg.kind == ClassifierKind::Knn {
            knn_cv(x, rows, labels, n_classes, &points, &fold_sets)
        } else {
            points
                .par_iter()
                .enumerate()
                .map(|(pi, hp)| {
                    let mut accs = Vec::new();
                    for (tr, va) in &fold_sets {
                        if tr.is_empty() || va.is_empty() {
                            continue;
                        }
                        let tr_rows: Vec<usize> = tr.iter().map(|&i| rows[i]).collect();
                        let tr_labels: Vec<usize> = tr.iter().map(|&i| labels[i]).collect();
                        let fitted = fit_point(x, &tr_rows, &tr_labels, n_classes, hp, cfg, point_seed(cfg.seed, pi))?;
                        let model = TrainedModel {
                            kind: cfg.kind,
                            n_classes,
                            state: fitted.state,
                            hyperparameters: hp.clone(),
                            cv_accuracy: None,
                            grid: vec![],
                            dual_violation: None,
                        };
                        let va_rows: Vec<usize> = va.iter().map(|&i| rows[i]).collect();
                        let va_labels: Vec<usize> = va.iter().map(|&i| labels[i]).collect();
                        accs.push(accuracy(&model.predict(x, &va_rows), &va_labels));
                    }
                    Ok(accs.iter().sum::<f64>() / accs.len().max(1) as f64)
                })
                .collect()
        };
        let mut best: Option<(usize, f64)> = None;
        for (pi, (hp, r)) in points.iter().zip(cv).enumerate() {
            match r {
                Ok(acc) => {
                    if best.map_or(true, |(_, b)| acc > b) {
                        best = Some((pi, acc));
                    }
                    results.push(GridPointResult {
                        hyperparameters: hp.clone(),
                        cv_accuracy: Some(acc),
                        error: None,
                    });
                }
                Err(e) => {
                    log::warn!("grid point {hp:?} skipped: {e}");
                    results.push(GridPointResult {
                        hyperparameters: hp.clone(),
                        cv_accuracy: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        match best {
            Some((pi, _)) => pi,
            None => {
                let first = results.iter().find_map(|r| r.error.clone()).unwrap_or_default();
                return Err(ClassifyError::AllGridPointsFailed(first));
            }
        }
    };
    let hp = points[best_index].clone();
    let fitted = fit_point(x, rows, labels, n_classes, &hp, cfg, point_seed(cfg.seed, best_index))?;
    Ok(TrainedModel {
        kind: cfg.kind,
        n_classes,
        state: fitted.state,
        cv_accuracy: results[best_index].cv_accuracy,
        hyperparameters: hp,
        grid: results,
        dual_violation: fitted.dual_violation,
    })
}

/// k-NN cross-validation sorts neighbours once per validation row for all k.
fn knn_cv(
    x: &FeatureMatrix,
    rows: &[usize],
    labels: &[usize],
    n_classes: usize,
    points: &[Hyperparameters],
    fold_sets: &[(Vec<usize>, Vec<usize>)],
) -> Vec<Result<f64, ClassifyError>> {
    let ks: Vec<usize> = points.iter().map(|p| p.k.expect("k")).collect();
    let mut sums = vec![0.0; ks.len()];
    let mut used = 0;
    for (tr, va) in fold_sets {
        if tr.is_empty() || va.is_empty() {
            continue;
        }
        let tr_rows: Vec<usize> = tr.iter().map(|&i| rows[i]).collect();
        let tr_labels: Vec<usize> = tr.iter().map(|&i| labels[i]).collect();
        let model = KnnModel::fit(x, &tr_rows, &tr_labels, n_classes, 1);
        let va_rows: Vec<usize> = va.iter().map(|&i| rows[i]).collect();
        let va_labels: Vec<usize> = va.iter().map(|&i| labels[i]).collect();
        let preds = model.predict_many_k(x, &va_rows, &ks);
        for (s, p) in sums.iter_mut().zip(&preds) {
            *s += accuracy(p, &va_labels);
        }
        used += 1;
    }
    sums.into_iter().map(|s| Ok(s / used.max(1) as f64)).collect()
}

/// Test-set results of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: String,
    pub representation: String,
    pub normalization: String,
    pub classifier: ClassifierKind,
    pub dims: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Trial-level accuracy, percent.
    pub accuracy: f64,
    /// Zero-rule accuracy on the test labels, percent.
    pub baseline: f64,
    /// `accuracy − baseline`, percentage points.
    pub divergence: f64,
    pub class_names: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class_recall: Vec<Option<f64>>,
    /// Accuracy after a majority vote over each test subject's trials, percent.
    pub patient_majority_accuracy: Option<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub split_id: String,
    pub grid: GridSpec,
    pub folds: usize,
    pub selected: Hyperparameters,
    pub cv_accuracy: Option<f64>,
    pub failed_grid_points: usize,
    /// PCA variance target; `None` for representations without PCA.
    pub variance_target: Option<f64>,
    /// Fraction of subjects per class sent to training.
    pub train_fraction: f64,
    /// Balancing applied to the dataset before splitting.
    pub balance: String,
}

/// Scores `model` on `rows`; `subjects` (aligned with `rows`) enables the per-patient vote.
/// Descriptive fields (task, names, provenance) are left for the caller to fill.
pub fn evaluate(
    model: &TrainedModel,
    x: &FeatureMatrix,
    rows: &[usize],
    labels: &[usize],
    subjects: Option<&[usize]>,
    class_names: &[String],
) -> EvaluationReport {
    let pred = model.predict(x, rows);
    let k = model.n_classes;
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(labels) {
        confusion[t][p] += 1;
    }
    let per_class_recall = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| 100.0 * row[c] as f64 / total as f64)
        })
        .collect();
    let acc = accuracy(&pred, labels);
    let baseline = zero_rule_baseline(labels);
    let patient_majority_accuracy = subjects.map(|subs| {
        let mut per: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
        for ((&s, &p), &t) in subs.iter().zip(&pred).zip(labels) {
            let e = per.entry(s).or_insert((t, vec![0; k]));
            e.1[p] += 1;
        }
        let hits = per
            .values()
            .filter(|(t, votes)| {
                let best = votes.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)));
                best.map(|(c, _)| c) == Some(*t)
            })
            .count();
        100.0 * hits as f64 / per.len().max(1) as f64
    });
    EvaluationReport {
        task: String::new(),
        representation: String::new(),
        normalization: String::new(),
        classifier: model.kind,
        dims: x.ncols(),
        n_train: 0,
        n_test: rows.len(),
        accuracy: acc,
        baseline,
        divergence: acc - baseline,
        class_names: class_names.to_vec(),
        confusion,
        per_class_recall,
        patient_majority_accuracy,
        provenance: Provenance {
            seed: 0,
            split_id: String::new(),
            grid: GridSpec::quick(),
            folds: 0,
            selected: model.hyperparameters.clone(),
            cv_accuracy: model.cv_accuracy,
            failed_grid_points: model.grid.iter().filter(|g| g.error.is_some()).count(),
            variance_target: None,
            train_fraction: 0.0,
            balance: String::new(),
        },
    }
}

/// Writes the confusion matrix as CSV with a `true\predicted` header.
pub fn write_confusion_csv(report: &EvaluationReport, mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "true\\predicted,{}", report.class_names.join(","))?;
    for (name, row) in report.class_names.iter().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{name},{}", cells.join(","))?;
    }
    Ok(())
}
