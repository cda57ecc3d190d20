//! Fisher LDA accuracy of each feature set on each class partition, as divergence from the
//! zero-rule baseline.

mod lda;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classification::{fold_rows, patient_folds};
use crate::dataset::{Dataset, GaitClass};
use crate::features::{FeatureSet, Param, ParameterTable};
use crate::linalg::FeatureMatrix;
use crate::preprocess::Signal;
use crate::representations::{build_waveform_representation, params_representation, RepresentationError};

pub use lda::{lda_fit, LdaModel};

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("within-class scatter is singular even after regularization")]
    SingularScatter,
    #[error("LDA needs more samples ({samples}) than classes ({classes})")]
    TooFewSamples { samples: usize, classes: usize },
    #[error("LDA needs at least two classes with samples")]
    SingleClass,
    #[error("feature matrix has no columns")]
    NoFeatures,
    #[error(transparent)]
    Representation(#[from] RepresentationError),
}

/// Percentage of `labels` equal to the most frequent label; 0 for no labels.
pub fn zero_rule_baseline<T: Ord>(labels: &[T]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    100.0 * top as f64 / labels.len() as f64
}

/// Maps diagnostic classes onto the effective classes of a task. Classes outside every group
/// are excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub name: String,
    /// Effective classes in label order, each with its member classes.
    pub groups: Vec<(String, Vec<GaitClass>)>,
}

impl ClassPartition {
    fn from_groups(groups: &[(&str, &[GaitClass])]) -> ClassPartition {
        let groups: Vec<(String, Vec<GaitClass>)> = groups.iter().map(|(n, c)| (n.to_string(), c.to_vec())).collect();
        let name = groups.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join("/");
        ClassPartition { name, groups }
    }

    /// Every class on its own.
    pub fn one_vs_each(classes: &[GaitClass]) -> ClassPartition {
        let groups: Vec<(String, Vec<GaitClass>)> = classes.iter().map(|c| (c.code().to_string(), vec![*c])).collect();
        let name = groups.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join("/");
        ClassPartition { name, groups }
    }

    pub fn five_class() -> ClassPartition {
        ClassPartition::one_vs_each(&GaitClass::ALL)
    }

    /// Healthy controls against the union of all disorder classes.
    pub fn n_vs_gd() -> ClassPartition {
        use GaitClass::*;
        ClassPartition::from_groups(&[("N", &[N]), ("GD", &[C, A, K, H])])
    }

    /// Controls, hip and knee merged ("thigh"), ankle and calcaneus merged ("shank").
    pub fn thigh_shank() -> ClassPartition {
        use GaitClass::*;
        ClassPartition::from_groups(&[("N", &[N]), ("THIGH", &[H, K]), ("SHANK", &[A, C])])
    }

    /// The twelve grid rows: N against each disorder, all five, N/GD, then the six disorder pairs.
    pub fn standard_rows() -> Vec<ClassPartition> {
        use GaitClass::*;
        let mut rows: Vec<ClassPartition> = [A, C, H, K]
            .iter()
            .map(|&c| ClassPartition::one_vs_each(&[N, c]))
            .collect();
        rows.push(ClassPartition::five_class());
        rows.push(ClassPartition::n_vs_gd());
        let gd = [A, C, H, K];
        for i in 0..gd.len() {
            for j in i + 1..gd.len() {
                rows.push(ClassPartition::one_vs_each(&[gd[i], gd[j]]));
            }
        }
        rows
    }

    pub fn n_classes(&self) -> usize {
        self.groups.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.groups.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn label_of(&self, class: GaitClass) -> Option<usize> {
        self.groups.iter().position(|(_, members)| members.contains(&class))
    }

    /// Positions in `trial_indices` whose class belongs to the partition, with their labels
    /// and subject indices.
    pub fn select(&self, ds: &Dataset, trial_indices: &[usize]) -> PartitionRows {
        let mut out = PartitionRows::default();
        for (pos, &t) in trial_indices.iter().enumerate() {
            if let Some(l) = self.label_of(ds.class_of_trial(t)) {
                out.rows.push(pos);
                out.labels.push(l);
                out.subjects.push(ds.subject_index_of_trial(t));
            }
        }
        out
    }
}

impl fmt::Display for ClassPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartitionRows {
    pub rows: Vec<usize>,
    pub labels: Vec<usize>,
    pub subjects: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LdaEval {
    /// Patient-disjoint k-fold cross-validation.
    #[default]
    Cv,
    /// Fit and score on the same rows.
    Resub,
}

impl FromStr for LdaEval {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cv" => Ok(LdaEval::Cv),
            "resub" => Ok(LdaEval::Resub),
            other => Err(format!("unknown LDA evaluation '{other}' (expected cv or resub)")),
        }
    }
}

impl fmt::Display for LdaEval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LdaEval::Cv => "cv",
            LdaEval::Resub => "resub",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LdaProtocol {
    pub eval: LdaEval,
    pub folds: usize,
    pub seed: u64,
}

impl Default for LdaProtocol {
    fn default() -> Self {
        LdaProtocol {
            eval: LdaEval::Cv,
            folds: 5,
            seed: 0,
        }
    }
}

/// LDA accuracy (%) on `rows` of `x`. Under cross-validation the fold accuracies are pooled
/// over all validation predictions.
pub fn lda_accuracy(
    x: &FeatureMatrix,
    rows: &[usize],
    labels: &[usize],
    subjects: &[usize],
    n_classes: usize,
    protocol: &LdaProtocol,
) -> Result<f64, LdaError> {
    if rows.is_empty() {
        return Err(LdaError::TooFewSamples {
            samples: 0,
            classes: n_classes,
        });
    }
    let correct = match protocol.eval {
        LdaEval::Resub => {
            let model = lda_fit(x, rows, labels, n_classes)?;
            rows.iter()
                .zip(labels)
                .filter(|(&r, &l)| model.predict_row(x.row(r)) == l)
                .count()
        }
        LdaEval::Cv => {
            let folds = patient_folds(subjects, labels, protocol.folds.max(2), protocol.seed);
            let mut correct = 0;
            for f in 0..protocol.folds.max(2) {
                let (tr, va) = fold_rows(&folds, f);
                if va.is_empty() {
                    continue;
                }
                let tr_rows: Vec<usize> = tr.iter().map(|&i| rows[i]).collect();
                let tr_labels: Vec<usize> = tr.iter().map(|&i| labels[i]).collect();
                let model = lda_fit(x, &tr_rows, &tr_labels, n_classes)?;
                correct += va
                    .iter()
                    .filter(|&&i| model.predict_row(x.row(rows[i])) == labels[i])
                    .count();
            }
            correct
        }
    };
    Ok(100.0 * correct as f64 / rows.len() as f64)
}

/// Named feature matrices sharing one row order (`trial_indices`).
#[derive(Debug, Clone)]
pub struct GridColumns {
    pub trial_indices: Vec<usize>,
    pub columns: Vec<(String, FeatureMatrix)>,
}

/// The 61 grid columns over trials with a complete parameter vector: each parameter, all
/// parameters, PCA of each signal, PCA of the three forces, PCA of both COP signals, and
/// PCA of all five. Waveform PCA is fit on all of these trials (it uses no labels).
pub fn grid_columns(set: &FeatureSet, table: &ParameterTable, variance_target: f64) -> Result<GridColumns, LdaError> {
    let params = params_representation(table);
    let mut columns: Vec<(String, FeatureMatrix)> = Param::ALL
        .iter()
        .map(|p| (p.name().to_string(), params.matrix.select_cols(&[p.index()])))
        .collect();
    columns.push(("ALL_PARAMS".to_string(), params.matrix.clone()));

    let position: BTreeMap<usize, usize> = set.trials.iter().enumerate().map(|(i, t)| (t.trial_index, i)).collect();
    let fit_rows: Vec<usize> = table.trial_indices.iter().map(|t| position[t]).collect();
    let per_signal = build_waveform_representation(set, &Signal::ALL, variance_target, &fit_rows)?;
    let aligned = per_signal.matrix.select_rows(&fit_rows);
    let mut offset = 0;
    let mut blocks: Vec<(Signal, Vec<usize>)> = Vec::new();
    for (s, (_, model)) in Signal::ALL.iter().zip(&per_signal.pca) {
        let cols: Vec<usize> = (offset..offset + model.retained).collect();
        offset += model.retained;
        columns.push((format!("PCA_{}", s.name()), aligned.select_cols(&cols)));
        blocks.push((*s, cols));
    }
    let combined = |signals: &[Signal]| -> FeatureMatrix {
        let cols: Vec<usize> = blocks
            .iter()
            .filter(|(s, _)| signals.contains(s))
            .flat_map(|(_, c)| c.iter().copied())
            .collect();
        aligned.select_cols(&cols)
    };
    columns.push((
        "PCA_F_ALL".to_string(),
        combined(&[Signal::FV, Signal::FAp, Signal::FMl]),
    ));
    columns.push(("PCA_COP".to_string(), combined(&[Signal::CopAp, Signal::CopMl])));
    columns.push(("PCA_ALL".to_string(), combined(&Signal::ALL)));
    Ok(GridColumns {
        trial_indices: table.trial_indices.clone(),
        columns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub row: String,
    pub column: String,
    pub reason: String,
}

/// Divergence of LDA accuracy from each row's zero-rule baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminativityGrid {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub baselines: Vec<f64>,
    pub row_trials: Vec<usize>,
    /// `cells[row][column]`, percentage points; `None` where the fit failed.
    pub cells: Vec<Vec<Option<f64>>>,
    pub protocol: LdaProtocol,
    pub failures: Vec<CellFailure>,
}

pub fn discriminativity_grid(
    ds: &Dataset,
    columns: &GridColumns,
    partitions: &[ClassPartition],
    protocol: &LdaProtocol,
) -> DiscriminativityGrid {
    let selections: Vec<PartitionRows> = partitions
        .iter()
        .map(|p| p.select(ds, &columns.trial_indices))
        .collect();
    let baselines: Vec<f64> = selections.iter().map(|s| zero_rule_baseline(&s.labels)).collect();
    let jobs: Vec<(usize, usize)> = (0..partitions.len())
        .flat_map(|r| (0..columns.columns.len()).map(move |c| (r, c)))
        .collect();
    let results: Vec<Result<f64, LdaError>> = jobs
        .par_iter()
        .map(|&(r, c)| {
            let sel = &selections[r];
            let acc = lda_accuracy(
                &columns.columns[c].1,
                &sel.rows,
                &sel.labels,
                &sel.subjects,
                partitions[r].n_classes(),
                protocol,
            )?;
            Ok(acc - baselines[r])
        })
        .collect();
    let mut cells = vec![vec![None; columns.columns.len()]; partitions.len()];
    let mut failures = Vec::new();
    for (&(r, c), res) in jobs.iter().zip(results) {
        match res {
            Ok(v) => cells[r][c] = Some(v),
            Err(e) => failures.push(CellFailure {
                row: partitions[r].name.clone(),
                column: columns.columns[c].0.clone(),
                reason: e.to_string(),
            }),
        }
    }
    DiscriminativityGrid {
        rows: partitions.iter().map(|p| p.name.clone()).collect(),
        columns: columns.columns.iter().map(|(n, _)| n.clone()).collect(),
        baselines,
        row_trials: selections.iter().map(|s| s.rows.len()).collect(),
        cells,
        protocol: *protocol,
        failures,
    }
}

impl DiscriminativityGrid {
    pub fn cell(&self, row: &str, column: &str) -> Option<f64> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.columns.iter().position(|x| x == column)?;
        self.cells[r][c]
    }

    /// Wide CSV: one line per partition, empty fields for failed cells.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "partition,{}", self.columns.join(","))?;
        for (name, row) in self.rows.iter().zip(&self.cells) {
            let vals: Vec<String> = row
                .iter()
                .map(|v| v.map(|x| format!("{x:.4}")).unwrap_or_default())
                .collect();
            writeln!(w, "{name},{}", vals.join(","))?;
        }
        Ok(())
    }

    /// Long format: `row,column,value`.
    pub fn write_long_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "row,column,value")?;
        for (name, row) in self.rows.iter().zip(&self.cells) {
            for (col, v) in self.columns.iter().zip(row) {
                writeln!(w, "{name},{col},{}", v.map(|x| format!("{x:.4}")).unwrap_or_default())?;
            }
        }
        Ok(())
    }

    /// Per-row baselines and trial counts plus the protocol and failures.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "rows": self.rows,
            "baselines": self.baselines,
            "row_trials": self.row_trials,
            "protocol": self.protocol,
            "failures": self.failures,
        })
    }
}
