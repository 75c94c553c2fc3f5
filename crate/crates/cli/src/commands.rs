use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use evcast::data::{
    aggregate_to_hourly, format_timestamp, ingest_sessions, prepare_dataset, prepare_dataset_with,
    synthetic_series, FitScope, HourlySeries, Normalizer, SyntheticSpec, WindowedDataset,
    SESSIONS_HEADER,
};
use evcast::eval::{
    aggregate_all, aggregate_runs, count_wins, evaluate_model_in, evaluate_persistence,
    render_report_text, write_reports, RunResult,
};
use evcast::models::{build_embedding_input, Batch, Model, TimeScale};
use evcast::train::{
    fit, grid_search, load_checkpoint, run_seeds, save_checkpoint, train_and_validate,
    CheckpointMeta,
};
use rayon::prelude::*;

use crate::config::{Overrides, RunConfig};
use crate::UsageError;

pub fn resolve(config: &Option<PathBuf>, overrides: Overrides) -> anyhow::Result<RunConfig> {
    Ok(RunConfig::load(config.as_deref())?.apply(overrides))
}

/// Read an hourly CSV, or aggregate a sessions CSV recognised by its header.
fn load_series(path: &Path) -> anyhow::Result<HourlySeries> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').map(str::trim).collect();
    if header == SESSIONS_HEADER {
        let report = ingest_sessions(text.as_bytes())?;
        if report.records.is_empty() {
            bail!("{} contains no valid sessions", path.display());
        }
        return Ok(aggregate_to_hourly(&report.records)?);
    }
    HourlySeries::read_csv(text.as_bytes()).with_context(|| format!("loading {}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn thread_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")
}

pub fn ingest(data: &Path, out: &Path) -> anyhow::Result<()> {
    let file = fs::File::open(data).with_context(|| format!("opening {}", data.display()))?;
    let report = ingest_sessions(file)?;
    if report.records.is_empty() {
        bail!("{} contains no valid sessions", data.display());
    }
    let series = aggregate_to_hourly(&report.records)?;
    let mut csv = Vec::new();
    series.write_csv(&mut csv)?;
    write_file(&out.join("hourly.csv"), &csv)?;
    if !report.rejected.is_empty() {
        let mut text = String::from("line,reason\n");
        for r in &report.rejected {
            text.push_str(&format!("{},\"{}\"\n", r.line, r.reason.replace('"', "'")));
        }
        write_file(&out.join("rejected.csv"), text.as_bytes())?;
    }
    println!(
        "ingested {} sessions ({} rejected) into {} hours from {} to {}",
        report.records.len(),
        report.rejected.len(),
        series.len(),
        format_timestamp(series.start()),
        format_timestamp(series.end())
    );
    Ok(())
}

fn prepare(cfg: &RunConfig, raw: &HourlySeries, horizon: usize, seed: u64) -> anyhow::Result<WindowedDataset> {
    prepare_dataset(raw, cfg.hyperparams.lookback, horizon, cfg.fit_scope, seed)
        .with_context(|| format!("preparing windows for horizon {horizon}"))
}

fn run_stem(cfg: &RunConfig, horizon: usize, run: usize) -> String {
    format!("{}_h{horizon}_run{run}", cfg.model.name())
}

struct RunOutcome {
    result: RunResult,
    epochs: usize,
    checkpoint: PathBuf,
}

fn train_one(cfg: &RunConfig, raw: &HourlySeries, horizon: usize, run: usize, seed: u64) -> anyhow::Result<RunOutcome> {
    let started = Instant::now();
    let hp = cfg.hyperparams_for(horizon, seed);
    let tc = cfg.train_config(&hp);
    let ds = prepare(cfg, raw, horizon, seed)?;
    let time_scale = TimeScale::for_dataset(&ds)?;
    let mut model = Model::new(cfg.model, hp)?;
    let report = fit(&mut model, &ds, &tc)?;
    let test: Vec<usize> = ds.split().test.clone().collect();
    let metrics = evaluate_model_in(&model, &ds, &test, cfg.scale, &time_scale)?;

    let meta = CheckpointMeta {
        epochs_completed: report.train.train_losses.len(),
        pretrain_losses: report.pretrain.map(|p| p.epoch_losses).unwrap_or_default(),
        train_losses: report.train.train_losses,
        validation_losses: report.train.validation_losses,
        normalizer: ds.normalizer().copied(),
        time_scale: Some(time_scale),
        optimizer: tc.optimizer,
        clip_norm: tc.clip_norm,
        ..CheckpointMeta::for_model(&model)
    };
    let stem = run_stem(cfg, horizon, run);
    let checkpoint = cfg.out.join("checkpoints").join(format!("{stem}.bdtc"));
    save_checkpoint(&model, &meta, &checkpoint)?;
    let result = RunResult::new(cfg.model, horizon, seed, metrics, started.elapsed().as_secs_f64())?;
    write_file(
        &cfg.out.join("runs").join(format!("{stem}.json")),
        serde_json::to_string_pretty(&result)?.as_bytes(),
    )?;
    Ok(RunOutcome {
        result,
        epochs: meta.epochs_completed,
        checkpoint,
    })
}

pub fn train(cfg: RunConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    let raw = load_series(cfg.data_path()?)?;
    for &h in &cfg.horizons {
        prepare(&cfg, &raw, h, cfg.seed)?;
    }
    cfg.echo("train.toml")?;

    let seeds = run_seeds(cfg.seed, cfg.runs);
    let units: Vec<(usize, usize)> = cfg
        .horizons
        .iter()
        .flat_map(|&h| (0..cfg.runs).map(move |k| (h, k)))
        .collect();
    let outcomes: Vec<anyhow::Result<RunOutcome>> = thread_pool(cfg.jobs)?.install(|| {
        units
            .par_iter()
            .map(|&(h, k)| train_one(&cfg, &raw, h, k, seeds[k]).with_context(|| format!("run {k} at horizon {h}")))
            .collect()
    });

    let mut results = Vec::new();
    for outcome in outcomes {
        let o = outcome?;
        let r = &o.result;
        println!(
            "{} h{} seed {}: test rmse {:.4} mae {:.4} after {} epochs in {:.1}s -> {}",
            r.kind,
            r.horizon,
            r.seed,
            r.rmse,
            r.mae,
            o.epochs,
            r.seconds,
            o.checkpoint.display()
        );
        results.push(o.result);
    }
    for &h in &cfg.horizons {
        let runs: Vec<RunResult> = results.iter().filter(|r| r.horizon == h).cloned().collect();
        let agg = aggregate_runs(&runs)?;
        let mut line = format!(
            "{} h{h}: mae {:.4} ± {:.4}, rmse {:.4} ± {:.4} over {} runs",
            cfg.model, agg.mae_mean, agg.mae_std, agg.rmse_mean, agg.rmse_std, agg.runs
        );
        if cfg.hyperparams.lookback >= 24 {
            let ds = prepare(&cfg, &raw, h, cfg.seed)?;
            let test: Vec<usize> = ds.split().test.clone().collect();
            let p = evaluate_persistence(&ds, &test, cfg.scale)?;
            line.push_str(&format!(" (persistence mae {:.4})", p.mae));
        }
        println!("{line}");
    }
    Ok(())
}

pub fn grid(cfg: RunConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    let points = cfg.grid.points();
    if points.is_empty() {
        return Err(UsageError("the hyperparameter grid is empty".into()).into());
    }
    for &h in &cfg.horizons {
        for point in &points {
            point
                .apply(&cfg.hyperparams_for(h, cfg.seed))
                .validate(cfg.model)
                .map_err(|e| UsageError(format!("grid point {point:?}: {e}")))?;
        }
    }
    let raw = load_series(cfg.data_path()?)?;
    let datasets = cfg
        .horizons
        .iter()
        .map(|&h| prepare(&cfg, &raw, h, cfg.seed))
        .collect::<anyhow::Result<Vec<_>>>()?;
    cfg.echo("grid.toml")?;

    for (&h, ds) in cfg.horizons.iter().zip(&datasets) {
        let base = cfg.hyperparams_for(h, cfg.seed);
        let tc = cfg.train_config(&base);
        let outcome = grid_search(&cfg.grid, &base, cfg.jobs, |hp| train_and_validate(cfg.model, hp, ds, &tc))?;
        for r in &outcome.results {
            let p = r.point;
            println!(
                "{} h{h} layers {} epochs {} heads {} dim {}: val mae {:.4} rmse {:.4}",
                cfg.model, p.num_layers, p.num_epochs, p.num_heads, p.model_dim, r.score.val_mae, r.score.val_rmse
            );
        }
        let best = outcome.best.point;
        println!(
            "{} h{h} best: layers {} epochs {} heads {} dim {} (val mae {:.4})",
            cfg.model, best.num_layers, best.num_epochs, best.num_heads, best.model_dim, outcome.best.score.val_mae
        );
        write_file(
            &cfg.out.join("grid").join(format!("{}_h{h}.json", cfg.model.name())),
            serde_json::to_string_pretty(&outcome)?.as_bytes(),
        )?;
    }
    Ok(())
}

/// Dataset windows scaled the way the checkpointed model was trained.
fn checkpoint_dataset(raw: &HourlySeries, model: &Model, meta: &CheckpointMeta, horizon: usize) -> anyhow::Result<WindowedDataset> {
    let lookback = model.hyperparams().lookback;
    let ds = match meta.normalizer {
        Some(n) => prepare_dataset_with(raw, lookback, horizon, n, meta.seed)?,
        None => prepare_dataset(raw, lookback, horizon, FitScope::AllData, meta.seed)?,
    };
    Ok(ds)
}

pub fn eval(checkpoint: &Path, cfg: RunConfig, horizon: Option<usize>) -> anyhow::Result<()> {
    let data = cfg.data_path()?.to_path_buf();
    let (model, meta) = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let raw = load_series(&data)?;
    let horizon = horizon.unwrap_or(model.horizon());
    let ds = checkpoint_dataset(&raw, &model, &meta, horizon)?;
    let time_scale = match meta.time_scale {
        Some(s) => s,
        None => TimeScale::for_dataset(&ds)?,
    };
    let test: Vec<usize> = ds.split().test.clone().collect();
    let metrics = evaluate_model_in(&model, &ds, &test, cfg.scale, &time_scale)
        .with_context(|| format!("evaluating {}", checkpoint.display()))?;
    let result = RunResult::new(model.kind(), horizon, meta.seed, metrics, 0.0)?;
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint");
    write_file(
        &cfg.out.join("eval").join(format!("{stem}.json")),
        serde_json::to_string_pretty(&result)?.as_bytes(),
    )?;
    println!(
        "{} h{horizon}: test rmse {:.4} mae {:.4} over {} windows",
        model.kind(),
        metrics.rmse,
        metrics.mae,
        test.len()
    );
    Ok(())
}

pub fn predict(checkpoint: &Path, cfg: RunConfig) -> anyhow::Result<()> {
    let data = cfg.data_path()?.to_path_buf();
    let (model, meta) = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let raw = load_series(&data)?;
    let lookback = model.hyperparams().lookback;
    if raw.len() < lookback {
        bail!("{} has {} hours; the model needs the last {lookback}", data.display(), raw.len());
    }
    let normalizer = match meta.normalizer {
        Some(n) => n,
        None => Normalizer::fit(raw.values(), FitScope::AllData)?,
    };
    let time_scale = match meta.time_scale {
        Some(s) => s,
        None => TimeScale::fit(raw.start(), raw.end())?,
    };
    let from = raw.len() - lookback;
    let values = normalizer.normalize_all(&raw.values()[from..]);
    let times: Vec<_> = (from..raw.len()).map(|i| raw.timestamp(i)).collect();
    let batch = Batch::from_embedding(&build_embedding_input(&values, &times, &time_scale)?)?;
    let forecast = model.predict(&batch)?;

    let mut text = String::from("timestamp,load_kwh\n");
    for (j, &y) in forecast.data().iter().enumerate() {
        let t = raw.timestamp(raw.len() + j);
        text.push_str(&format!("{},{}\n", format_timestamp(t), normalizer.denormalize(y)));
    }
    let path = cfg.out.join("predictions.csv");
    write_file(&path, text.as_bytes())?;
    println!(
        "{} forecast of {} hours from {} -> {}",
        model.kind(),
        model.horizon(),
        format_timestamp(raw.timestamp(raw.len())),
        path.display()
    );
    Ok(())
}

pub fn report(out: &Path) -> anyhow::Result<()> {
    let dir = out.join("runs");
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    if paths.is_empty() {
        bail!("no run results in {}", dir.display());
    }
    let results = paths
        .iter()
        .map(|p| -> anyhow::Result<RunResult> {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let table = count_wins(&aggregate_all(&results)?)?;
    let written = write_reports(&table, out)?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(render_report_text(&table).as_bytes())?;
    writeln!(stdout, "aggregated {} runs into {} files", results.len(), written.len())?;
    Ok(())
}

pub fn make_synthetic(out: &Path, hours: usize, seed: u64) -> anyhow::Result<()> {
    let series = synthetic_series(&SyntheticSpec {
        hours,
        seed,
        ..SyntheticSpec::default()
    })?;
    let mut csv = Vec::new();
    series.write_csv(&mut csv)?;
    write_file(out, &csv)?;
    println!("wrote {hours} synthetic hours to {}", out.display());
    Ok(())
}
