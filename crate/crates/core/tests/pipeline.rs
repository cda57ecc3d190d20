//! End-to-end properties of generation, extraction, representation and the experiment runner.

use std::sync::OnceLock;

use gaitforge::classification::{ClassifierKind, GridSpec};
use gaitforge::dataset::Foot;
use gaitforge::discriminativity::{lda_accuracy, zero_rule_baseline, ClassPartition, LdaProtocol};
use gaitforge::experiments::{
    balance_cell, replay_config, run_cell, run_table3, BalanceMode, CellSpec, Parameterization, PipelineConfig,
    PreparedDataset, Task,
};
use gaitforge::features::{extract_discrete, FeatureConfig, Param};
use gaitforge::preprocess::{Signal, WAVEFORM_LEN};
use gaitforge::representations::{
    all_rows, build_waveform_representation, normalize, params_representation, Normalization,
};
use gaitforge::synth::{generate, GeneratorConfig, Shape};

fn small() -> &'static PreparedDataset {
    static PREP: OnceLock<PreparedDataset> = OnceLock::new();
    PREP.get_or_init(|| prepare("small", 0))
}

fn prepare(preset: &str, seed_offset: u64) -> PreparedDataset {
    let mut cfg = GeneratorConfig::preset(preset).expect("preset");
    cfg.seed = cfg.seed.wrapping_add(seed_offset);
    PreparedDataset::new(generate(&cfg).expect("generates"), &FeatureConfig::default())
}

fn quick() -> PipelineConfig {
    PipelineConfig {
        grid: GridSpec::quick(),
        ..PipelineConfig::default()
    }
}

#[test]
fn raw_vertical_force_crosses_threshold_twice_per_stance() {
    let ds = &small().dataset;
    for trial in ds.trials() {
        let rec = trial.recording().expect("synthetic recording");
        for (p, plate) in rec.plates.iter().enumerate() {
            let above: Vec<bool> = plate.fz.iter().map(|&f| f >= 10.0).collect();
            let crossings = above.windows(2).filter(|w| w[0] != w[1]).count();
            assert_eq!(crossings, 2, "trial {} plate {p}", trial.id);
        }
    }
}

#[test]
fn extracted_trials_respect_landmark_order_and_impulse_additivity() {
    let table = &small().table;
    assert!(!table.rows.is_empty());
    for row in &table.rows {
        assert!(row[Param::Tv1] <= row[Param::Tv2] && row[Param::Tv2] <= row[Param::Tv3]);
        let parts = row[Param::IfApDec] + row[Param::IfApAcc];
        assert!(
            (parts - row[Param::IfAp]).abs() <= 1e-9,
            "{parts} vs {}",
            row[Param::IfAp]
        );
    }
}

#[test]
fn time_reversal_swaps_the_vertical_peaks() {
    let last = (WAVEFORM_LEN - 1) as f64;
    let mut sh = Shape::default();
    for t in [
        &mut sh.fv_peak1_time,
        &mut sh.fv_valley_time,
        &mut sh.fv_peak2_time,
        &mut sh.fap_brake_time,
        &mut sh.fap_push_time,
    ] {
        *t = (*t * last).round() / last;
    }
    sh.fv_peak2 = 1.05;
    let forward = sh.stance_waveforms(Foot::Left);
    let mut backward = forward.clone();
    let reversed = |x: &[f64]| x.iter().rev().copied().collect::<Vec<f64>>();
    backward.f_v = reversed(&forward.f_v);
    // mirror AP so braking and propulsion trade places
    backward.f_ap = reversed(&forward.f_ap).into_iter().map(|v| -v).collect();
    backward.f_ml = reversed(&forward.f_ml);
    backward.cop_ap = reversed(&forward.cop_ap);
    backward.cop_ml = reversed(&forward.cop_ml);
    let a = extract_discrete(&forward).expect("forward").params;
    let b = extract_discrete(&backward).expect("backward").params;
    assert!((b[Param::Fv1] - a[Param::Fv3]).abs() < 1e-12);
    assert!((b[Param::Fv3] - a[Param::Fv1]).abs() < 1e-12);
    assert!((b[Param::Tv1] - (100.0 - a[Param::Tv3])).abs() < 1e-9);
    assert!((b[Param::Tv3] - (100.0 - a[Param::Tv1])).abs() < 1e-9);
}

#[test]
fn concatenated_waveform_scores_stack_per_signal_blocks() {
    let set = &small().features;
    let fit = all_rows(set.trials.len());
    let joint = build_waveform_representation(set, &Signal::ALL, 0.98, &fit).expect("joint");
    let mut offset = 0;
    for s in Signal::ALL {
        let alone = build_waveform_representation(set, &[s], 0.98, &fit).expect("single");
        let width = alone.matrix.ncols();
        let cols: Vec<usize> = (offset..offset + width).collect();
        assert_eq!(joint.matrix.select_cols(&cols), alone.matrix, "{} block", s.name());
        assert_eq!(joint.columns[offset..offset + width], alone.columns[..]);
        offset += width;
    }
    assert_eq!(offset, joint.matrix.ncols());
}

#[test]
fn cell_reports_keep_their_bookkeeping() {
    let results = run_table3(small(), &quick());
    for r in &results {
        let report = r
            .report
            .as_ref()
            .unwrap_or_else(|| panic!("{}: {:?}", r.label, r.error));
        assert!((0.0..=100.0).contains(&report.accuracy));
        assert!((report.divergence - (report.accuracy - report.baseline)).abs() <= 1e-9);
        let row_sums: Vec<usize> = report.confusion.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(row_sums.iter().sum::<usize>(), report.n_test);
        let hits: usize = (0..report.confusion.len()).map(|i| report.confusion[i][i]).sum();
        assert!((report.accuracy - 100.0 * hits as f64 / report.n_test as f64).abs() <= 1e-9);
        let majority = *row_sums.iter().max().expect("classes");
        assert!((report.baseline - 100.0 * majority as f64 / report.n_test as f64).abs() <= 1e-9);
    }
}

#[test]
fn provenance_replays_to_an_identical_report() {
    let prep = small();
    let cfg = PipelineConfig { seed: 19, ..quick() };
    for cell in [
        CellSpec::new(Task::Ncakh, Parameterization::PcaAll5, ClassifierKind::SvmRbf),
        CellSpec::new(
            Task::Nvgd,
            Parameterization::PcaOfParamsMinmax,
            ClassifierKind::SvmLinear,
        ),
    ] {
        let (report, _) = run_cell(prep, &cell, &cfg).expect("first run");
        let replay = replay_config(&report, cfg.features.clone());
        let (again, _) = run_cell(prep, &cell, &replay).expect("replay");
        assert_eq!(report, again, "{}", cell.file_stem());
    }
}

#[test]
fn unbalanced_best_cell_equals_its_first_table_counterpart() {
    let prep = small();
    let cfg = quick();
    for task in [Task::Ncakh, Task::Nvgd] {
        let (a, _) = run_cell(prep, &balance_cell(task, BalanceMode::None), &cfg).expect("balance run");
        let (b, _) = run_cell(
            prep,
            &CellSpec::new(task, Parameterization::PcaAll5, ClassifierKind::SvmLinear),
            &cfg,
        )
        .expect("table run");
        assert_eq!(a, b, "{task}");
    }
}

#[test]
fn explicit_unit_weights_match_uniform_weights() {
    let prep = small();
    for kind in [ClassifierKind::SvmLinear, ClassifierKind::SvmRbf] {
        let cell = CellSpec::new(Task::Ncakh, Parameterization::ParamsZscore, kind);
        let (_, uniform) = run_cell(prep, &cell, &quick()).expect("uniform");
        let weighted = PipelineConfig {
            class_weights: Some(vec![1.0; 5]),
            ..quick()
        };
        let (_, ones) = run_cell(prep, &cell, &weighted).expect("weighted");
        assert_eq!(uniform.model, ones.model, "{kind}");
    }
}

#[test]
fn wider_class_separation_raises_lda_divergence() {
    let partition = ClassPartition::five_class();
    let protocol = LdaProtocol::default();
    let levels = [0.0, 1.0, 3.0];
    let mut means = Vec::new();
    for separation in levels {
        let mut total = 0.0;
        for seed in 0..5 {
            let mut cfg = GeneratorConfig::preset("small").expect("preset");
            cfg.seed = cfg.seed.wrapping_add(seed);
            cfg.separation = separation;
            let prep = PreparedDataset::new(generate(&cfg).expect("generates"), &FeatureConfig::default());
            let params = params_representation(&prep.table);
            let x = normalize(&params, Normalization::ZScore, &all_rows(params.matrix.nrows()), "all")
                .expect("normalize")
                .matrix;
            let sel = partition.select(&prep.dataset, &prep.table.trial_indices);
            let acc = lda_accuracy(
                &x,
                &sel.rows,
                &sel.labels,
                &sel.subjects,
                partition.n_classes(),
                &protocol,
            )
            .expect("lda");
            total += acc - zero_rule_baseline(&sel.labels);
        }
        means.push(total / 5.0);
    }
    assert!(
        means.windows(2).all(|w| w[0] < w[1]),
        "divergence by separation {levels:?}: {means:?}"
    );
}
