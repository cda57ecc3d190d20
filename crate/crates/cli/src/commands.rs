use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gaitforge::classification::{write_confusion_csv, ClassifierKind, EvaluationReport, GridSpec};
use gaitforge::dataset::{load_dataset, Dataset, GaitClass, Level};
use gaitforge::discriminativity::{discriminativity_grid, grid_columns, ClassPartition, LdaEval, LdaProtocol};
use gaitforge::experiments::{
    annotate, balanced, builtin_reference, merge_cell, parse_reference, run_cell, run_cells, table3_cells,
    table4_cells, write_results_csv, BalanceMode, CellSpec, PipelineConfig, PreparedDataset, Task, TrainedPipeline,
};
use gaitforge::features::{analysed_foot, class_statistics, write_class_statistics, write_exclusions_csv, ControlSide};
use gaitforge::preprocess::{normalize_trial, write_waveforms_file};
use gaitforge::representations::{
    all_rows, build_param_pca_representation, build_waveform_representation, normalize, params_representation,
    Normalization, Representation, RepresentationKind,
};
use gaitforge::synth::{generate, generate_to_disk, GeneratorConfig};
use serde::{Deserialize, Serialize};

use crate::manifest::{now, sha256_file, InputFile, RunManifest};
use crate::{
    BenchArgs, BenchTable, CellArgs, Cli, CliError, Command, DataArgs, DiscriminateArgs, EvaluateArgs, ExportArgs,
    GridChoice, LoadArgs, OutArgs, RepresentArgs, SynthArgs, TrainArgs,
};

const VARIANCE_TARGETS: [f64; 3] = [0.90, 0.95, 0.98];

/// Contents of a `--config` TOML file. Every section is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub pipeline: PipelineConfig,
    pub lda: LdaSection,
    /// Generator settings used by `synth` when neither `--preset` nor `--generator` is given.
    pub generator: Option<GeneratorConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSection {
    pub eval: LdaEval,
    pub folds: usize,
}

impl Default for LdaSection {
    fn default() -> Self {
        LdaSection {
            eval: LdaEval::Cv,
            folds: 5,
        }
    }
}

/// Per-invocation state shared by every command.
struct Ctx {
    command: String,
    argv: Vec<String>,
    seed: u64,
    file: FileConfig,
    inputs: Vec<InputFile>,
    started: String,
}

impl Ctx {
    fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    fn finish(&self, out: &Path, config: serde_json::Value) -> Result<(), CliError> {
        RunManifest {
            command: self.command.clone(),
            argv: self.argv.clone(),
            config,
            seed: self.seed,
            inputs: self.inputs.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started.clone(),
            finished: now(),
        }
        .write(out)
    }

    fn pipeline(&self, variance: Option<f64>, grid: Option<GridChoice>) -> Result<PipelineConfig, CliError> {
        let mut cfg = self.file.pipeline.clone();
        cfg.seed = self.seed;
        if let Some(v) = variance {
            cfg.variance_target = check_variance(v)?;
        }
        match grid {
            Some(GridChoice::Full) => cfg.grid = GridSpec::full(),
            Some(GridChoice::Quick) => cfg.grid = GridSpec::quick(),
            None => {}
        }
        Ok(cfg)
    }
}

fn check_variance(v: f64) -> Result<f64, CliError> {
    VARIANCE_TARGETS
        .iter()
        .copied()
        .find(|t| (t - v).abs() < 1e-9)
        .ok_or_else(|| CliError::Usage(format!("--variance must be one of 0.90, 0.95, 0.98 (got {v})")))
}

fn usage<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

fn json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("serializable value")
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

pub fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            usage(toml::from_str::<FileConfig>(&text))?
        }
        None => FileConfig::default(),
    };
    if let Some(jobs) = cli.jobs.or(file.jobs) {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let mut ctx = Ctx {
        command: command_name(&cli.command).to_string(),
        argv,
        seed: cli.seed.or(file.seed).unwrap_or(0),
        file,
        inputs: Vec::new(),
        started: now(),
    };
    if let Some(path) = &cli.config {
        ctx.record_input(path)?;
    }
    match cli.command {
        Command::Synth(a) => synth(&mut ctx, a, cli.seed),
        Command::Load(a) => load(&mut ctx, a),
        Command::Extract(a) => extract(&mut ctx, a),
        Command::Stats(a) => stats(&mut ctx, a),
        Command::Represent(a) => represent(&mut ctx, a),
        Command::Discriminate(a) => discriminate(&mut ctx, a),
        Command::Train(a) => train(&mut ctx, a),
        Command::Evaluate(a) => evaluate(&mut ctx, a),
        Command::Bench(a) => bench(&mut ctx, a),
        Command::ExportWaveforms(a) => export_waveforms(&mut ctx, a),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Load(_) => "load",
        Command::Extract(_) => "extract",
        Command::Stats(_) => "stats",
        Command::Represent(_) => "represent",
        Command::Discriminate(_) => "discriminate",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Bench(_) => "bench",
        Command::ExportWaveforms(_) => "export-waveforms",
    }
}

fn load_data(ctx: &mut Ctx, data: &DataArgs) -> Result<Dataset, CliError> {
    match (&data.metadata, &data.preset) {
        (Some(meta), _) => {
            let recordings = match &data.recordings {
                Some(r) => r.clone(),
                None => meta.parent().unwrap_or(Path::new(".")).join("recordings"),
            };
            ctx.record_input(meta)?;
            load_dataset(meta, &recordings, data.sample_rate).map_err(CliError::core)
        }
        (None, Some(name)) => {
            let cfg = GeneratorConfig::preset(name).map_err(CliError::core)?;
            generate(&cfg).map_err(CliError::core)
        }
        (None, None) => Err(CliError::Usage("either --metadata or --preset is required".into())),
    }
}

fn feature_config(ctx: &Ctx, data: &DataArgs) -> Result<gaitforge::features::FeatureConfig, CliError> {
    let mut cfg = ctx.file.pipeline.features.clone();
    if let Some(side) = &data.control_side {
        cfg.control_side = usage(side.parse::<ControlSide>())?;
    }
    Ok(cfg)
}

fn prepare(ctx: &mut Ctx, data: &DataArgs) -> Result<PreparedDataset, CliError> {
    let ds = load_data(ctx, data)?;
    let cfg = feature_config(ctx, data)?;
    Ok(PreparedDataset::new(ds, &cfg))
}

fn counts_json(ds: &Dataset) -> serde_json::Value {
    let by_level = |level| ds.class_counts(level);
    let (subjects, sessions, trials) = (
        by_level(Level::Subject),
        by_level(Level::Session),
        by_level(Level::Trial),
    );
    let classes: BTreeMap<&str, serde_json::Value> = GaitClass::ALL
        .iter()
        .map(|c| {
            (
                c.code(),
                serde_json::json!({ "subjects": subjects[c], "sessions": sessions[c], "trials": trials[c] }),
            )
        })
        .collect();
    let (s, se, t) = ds.counts();
    serde_json::json!({ "subjects": s, "sessions": se, "trials": t, "classes": classes })
}

fn synth(ctx: &mut Ctx, a: SynthArgs, seed_flag: Option<u64>) -> Result<(), CliError> {
    let mut cfg = match (&a.generator, &ctx.file.generator) {
        (Some(path), _) => {
            ctx.record_input(path)?;
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            GeneratorConfig::from_toml(&text).map_err(CliError::core)?
        }
        (None, Some(cfg)) => cfg.clone(),
        (None, None) => GeneratorConfig::preset(&a.preset).map_err(CliError::core)?,
    };
    if let Some(seed) = seed_flag.or(ctx.file.seed) {
        cfg.seed = seed;
    }
    ctx.seed = cfg.seed;
    create_dir(&a.out)?;
    let (ds, meta) = generate_to_disk(&cfg, &a.out).map_err(CliError::core)?;
    ctx.finish(&a.out, json(&cfg))?;
    let mut summary = counts_json(&ds);
    summary["metadata"] = json(&meta);
    print_json(summary);
    Ok(())
}

fn load(ctx: &mut Ctx, a: LoadArgs) -> Result<(), CliError> {
    let ds = load_data(ctx, &a.data)?;
    let summary = counts_json(&ds);
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join("summary.json"), &summary)?;
        ctx.finish(out, serde_json::json!({ "sample_rate": a.data.sample_rate }))?;
    }
    print_json(summary);
    Ok(())
}

fn extract(ctx: &mut Ctx, a: OutArgs) -> Result<(), CliError> {
    let prep = prepare(ctx, &a.data)?;
    create_dir(&a.out)?;
    let params_path = a.out.join("parameters.csv");
    let mut w = create_file(&params_path)?;
    prep.table
        .write_csv(&prep.dataset, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&params_path, e))?;
    let excl_path = a.out.join("exclusions.csv");
    write_exclusions_csv(&prep.features.exclusions, create_file(&excl_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", excl_path.display())))?;
    ctx.finish(&a.out, json(&feature_config(ctx, &a.data)?))?;
    print_json(serde_json::json!({
        "rows": prep.table.len(),
        "columns": gaitforge::features::PARAM_COUNT,
        "exclusions": prep.features.exclusions.len(),
        "single_step_sessions": prep.features.single_step_sessions.len(),
    }));
    Ok(())
}

fn stats(ctx: &mut Ctx, a: OutArgs) -> Result<(), CliError> {
    let prep = prepare(ctx, &a.data)?;
    create_dir(&a.out)?;
    let stats = class_statistics(&prep.dataset, &prep.table);
    let path = a.out.join("class_stats.csv");
    let mut w = create_file(&path)?;
    write_class_statistics(&stats, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&path, e))?;
    ctx.finish(&a.out, json(&feature_config(ctx, &a.data)?))?;
    print_json(serde_json::json!({ "rows": stats.len() }));
    Ok(())
}

fn write_matrix_csv(path: &Path, ds: &Dataset, rep: &Representation) -> Result<(), CliError> {
    let mut w = create_file(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "trial_id,subject_id,class,{}", rep.columns.join(",")).map_err(io)?;
    for (r, &t) in rep.trial_indices.iter().enumerate() {
        let subject = ds.subject_of_trial(t);
        write!(w, "{},{},{}", ds.trials()[t].id, subject.id, subject.class.code()).map_err(io)?;
        for v in rep.matrix.row(r) {
            write!(w, ",{v:.9}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn represent(ctx: &mut Ctx, a: RepresentArgs) -> Result<(), CliError> {
    let kind = usage(RepresentationKind::parse_cli(&a.kind))?;
    let norm = usage(a.norm.parse::<Normalization>())?;
    let variance = check_variance(a.variance.unwrap_or(ctx.file.pipeline.variance_target))?;
    let prep = prepare(ctx, &a.data)?;
    let rep = match &kind {
        RepresentationKind::Params => params_representation(&prep.table),
        RepresentationKind::PcaSignals(signals) => {
            build_waveform_representation(&prep.features, signals, variance, &all_rows(prep.features.trials.len()))
                .map_err(CliError::core)?
        }
        RepresentationKind::PcaOfParams(pre) => {
            build_param_pca_representation(&prep.table, *pre, variance, &all_rows(prep.table.len()), "all")
                .map_err(CliError::core)?
        }
    };
    let rep = normalize(&rep, norm, &all_rows(rep.matrix.nrows()), "all").map_err(CliError::core)?;
    create_dir(&a.out)?;
    write_matrix_csv(&a.out.join("features.csv"), &prep.dataset, &rep)?;
    write_json(&a.out.join("model.json"), &rep.model())?;
    ctx.finish(
        &a.out,
        serde_json::json!({ "type": a.kind, "variance": variance, "norm": norm.to_string(), "fit": "all" }),
    )?;
    print_json(serde_json::json!({ "rows": rep.matrix.nrows(), "dims": rep.dims(), "name": rep.name() }));
    Ok(())
}

fn discriminate(ctx: &mut Ctx, a: DiscriminateArgs) -> Result<(), CliError> {
    let eval = match &a.lda_eval {
        Some(text) => usage(text.parse::<LdaEval>())?,
        None => ctx.file.lda.eval,
    };
    let variance = check_variance(a.variance.unwrap_or(ctx.file.pipeline.variance_target))?;
    let protocol = LdaProtocol {
        eval,
        folds: ctx.file.lda.folds,
        seed: ctx.seed,
    };
    let prep = prepare(ctx, &a.data)?;
    let columns = grid_columns(&prep.features, &prep.table, variance).map_err(CliError::core)?;
    let grid = discriminativity_grid(&prep.dataset, &columns, &ClassPartition::standard_rows(), &protocol);
    create_dir(&a.out)?;
    let grid_path = a.out.join("grid.csv");
    let mut w = create_file(&grid_path)?;
    grid.write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&grid_path, e))?;
    write_json(&a.out.join("grid.json"), &grid.sidecar())?;
    if a.heatmap_data {
        let path = a.out.join("heatmap.csv");
        let mut w = create_file(&path)?;
        grid.write_long_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&path, e))?;
    }
    ctx.finish(
        &a.out,
        serde_json::json!({ "protocol": protocol, "variance": variance }),
    )?;
    print_json(serde_json::json!({
        "rows": grid.rows.len(),
        "columns": grid.columns.len(),
        "failures": grid.failures.len(),
    }));
    Ok(())
}

fn cell_spec(a: &CellArgs) -> Result<(CellSpec, Option<Vec<f64>>), CliError> {
    let task = usage(a.task.parse::<Task>())?;
    let representation = usage(RepresentationKind::parse_cli(&a.rep))?;
    let normalization = usage(a.norm.parse::<Normalization>())?;
    let classifier = usage(a.classifier.parse::<ClassifierKind>())?;
    let balance = usage(a.balance.parse::<BalanceMode>())?;
    let weights = match &a.class_weights {
        Some(text) => {
            let w = text
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Usage(format!("--class-weights: {e}")))?;
            let n = task.partition().n_classes();
            if w.len() != n || w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(CliError::Usage(format!(
                    "--class-weights needs {n} positive values for task {}",
                    task.name()
                )));
            }
            Some(w)
        }
        None => None,
    };
    Ok((
        CellSpec {
            table: "custom".into(),
            row: a.rep.clone(),
            task,
            representation,
            normalization,
            classifier,
            balance,
        },
        weights,
    ))
}

fn write_report(out: &Path, report: &EvaluationReport) -> Result<(), CliError> {
    write_json(&out.join("report.json"), report)?;
    let path = out.join("confusion.csv");
    let mut w = create_file(&path)?;
    write_confusion_csv(report, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&path, e))
}

fn report_summary(report: &EvaluationReport) -> serde_json::Value {
    serde_json::json!({
        "task": report.task,
        "representation": report.representation,
        "classifier": report.classifier,
        "dims": report.dims,
        "n_train": report.n_train,
        "n_test": report.n_test,
        "accuracy": report.accuracy,
        "baseline": report.baseline,
        "divergence": report.divergence,
    })
}

fn train_cell(
    ctx: &mut Ctx,
    data: &DataArgs,
    cell: &CellArgs,
) -> Result<(EvaluationReport, TrainedPipeline, PipelineConfig), CliError> {
    let (spec, weights) = cell_spec(cell)?;
    let mut cfg = ctx.pipeline(cell.variance, cell.grid)?;
    cfg.features = feature_config(ctx, data)?;
    if weights.is_some() {
        cfg.class_weights = weights;
    }
    let prep = prepare(ctx, data)?;
    let prep = balanced(&prep, spec.task, spec.balance, cfg.seed).map_err(CliError::core)?;
    let (report, pipeline) = run_cell(&prep, &spec, &cfg).map_err(CliError::core)?;
    Ok((report, pipeline, cfg))
}

fn train(ctx: &mut Ctx, a: TrainArgs) -> Result<(), CliError> {
    let (report, pipeline, cfg) = train_cell(ctx, &a.data, &a.cell)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("model.json"), &pipeline)?;
    write_report(&a.out, &report)?;
    ctx.finish(&a.out, serde_json::json!({ "cell": pipeline.cell, "pipeline": cfg }))?;
    print_json(report_summary(&report));
    Ok(())
}

fn evaluate(ctx: &mut Ctx, a: EvaluateArgs) -> Result<(), CliError> {
    let (report, config) = match &a.model {
        Some(path) => {
            ctx.record_input(path)?;
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let pipeline: TrainedPipeline =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let ds = load_data(ctx, &a.data)?;
            let prep = PreparedDataset::new(ds, &pipeline.config.features);
            let report = pipeline.evaluate_on(&prep, !a.all_subjects).map_err(CliError::core)?;
            let config = serde_json::json!({ "cell": pipeline.cell, "pipeline": pipeline.config, "all_subjects": a.all_subjects });
            (report, config)
        }
        None => {
            let (report, pipeline, cfg) = train_cell(ctx, &a.data, &a.cell)?;
            (report, serde_json::json!({ "cell": pipeline.cell, "pipeline": cfg }))
        }
    };
    create_dir(&a.out)?;
    write_report(&a.out, &report)?;
    ctx.finish(&a.out, config)?;
    print_json(report_summary(&report));
    Ok(())
}

fn bench(ctx: &mut Ctx, a: BenchArgs) -> Result<(), CliError> {
    let cfg = {
        let mut cfg = ctx.pipeline(a.variance, a.grid)?;
        cfg.features = feature_config(ctx, &a.data)?;
        cfg
    };
    let reference = match &a.annotations {
        Some(path) => {
            ctx.record_input(path)?;
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            parse_reference(&text).map_err(CliError::core)?
        }
        None => builtin_reference(),
    };
    let cells: Vec<CellSpec> = match a.table {
        BenchTable::Table3 => table3_cells(),
        BenchTable::Table4 => table4_cells(),
        BenchTable::Merge => vec![merge_cell()],
        BenchTable::All => table3_cells()
            .into_iter()
            .chain(table4_cells())
            .chain([merge_cell()])
            .collect(),
    };
    let prep = prepare(ctx, &a.data)?;
    let mut results = run_cells(&prep, &cells, &cfg);
    if a.annotate_paper {
        annotate(&mut results, &reference);
    }
    create_dir(&a.out)?;
    for r in &results {
        write_json(&a.out.join(format!("{}.json", r.spec.file_stem())), r)?;
    }
    let csv_path = a.out.join("results.csv");
    write_results_csv(&results, create_file(&csv_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", csv_path.display())))?;
    ctx.finish(
        &a.out,
        serde_json::json!({ "table": format!("{:?}", a.table).to_lowercase(), "pipeline": cfg, "annotate": a.annotate_paper }),
    )?;
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    print_json(serde_json::json!({ "cells": results.len(), "failed": failed, "csv": csv_path }));
    Ok(())
}

fn export_waveforms(ctx: &mut Ctx, a: ExportArgs) -> Result<(), CliError> {
    let ds = load_data(ctx, &a.data)?;
    let cfg = feature_config(ctx, &a.data)?;
    let indices: Vec<usize> = if a.trials.is_empty() {
        (0..ds.trials().len()).collect()
    } else {
        a.trials
            .iter()
            .map(|id| {
                ds.trial_position(id)
                    .ok_or_else(|| CliError::Data(format!("unknown trial id '{id}'")))
            })
            .collect::<Result<_, _>>()?
    };
    let dir: PathBuf = a.out.join("waveforms");
    create_dir(&dir)?;
    let mut written = 0usize;
    let mut skipped = Vec::new();
    for idx in indices {
        let trial = &ds.trials()[idx];
        let rec = trial.recording().map_err(CliError::core)?;
        let subject = ds.subject_of_trial(idx);
        match normalize_trial(&rec, subject, ds.session_of_trial(idx), &cfg.preprocess) {
            Ok(tw) => {
                let foot = analysed_foot(subject.affected_side.foot(), &tw, cfg.control_side);
                let path = dir.join(format!("{}.csv", trial.id));
                write_waveforms_file(&path, tw.foot(foot)).map_err(|e| CliError::io(&path, e))?;
                written += 1;
            }
            Err(e) => skipped.push(serde_json::json!({ "trial_id": trial.id, "reason": e.to_string() })),
        }
    }
    ctx.finish(&a.out, json(&cfg))?;
    print_json(serde_json::json!({ "written": written, "skipped": skipped }));
    Ok(())
}
