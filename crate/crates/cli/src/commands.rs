use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use timecatcher_core::autodiff::{Tape, Tensor};
use timecatcher_core::data::{load_csv, save_csv, split_and_normalize, synth_jump_series, Dataset, RawSeries, SplitData, SplitSpec, SynthConfig};
use timecatcher_core::model::{
    activation_bytes, draw_noise, forward, forward_on_tape, init_parameters, load_checkpoint, parameter_count,
    save_checkpoint, AblationCase, ModelConfig, Parameters,
};
use timecatcher_core::train::{
    loss_on_tape, metrics_of, predict, train_from, BatchPrediction, EpochRecord, EvalOptions, Metrics, TrainOutcome,
};
use timecatcher_core::Error as CoreError;

use crate::args::{AblateArgs, BenchArgs, EvalArgs, ExportArgs, RunArgs, SplitName, SynthArgs, TrainArgs};
use crate::config::{ExperimentConfig, RunInfo};
use crate::error::{input, CliError, CliResult};

fn runtime_io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(CoreError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Runtime(CoreError::Data(format!("writing {}: {e}", path.display())))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| runtime_io(path, e))
}

fn prepare_out_dir(run: &RunArgs) -> CliResult<PathBuf> {
    std::fs::create_dir_all(&run.out_dir).map_err(|e| runtime_io(&run.out_dir, e))?;
    Ok(run.out_dir.clone())
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

struct ManifestWriter {
    started: Instant,
    started_unix: u64,
}

impl ManifestWriter {
    fn start() -> Self {
        Self {
            started: Instant::now(),
            started_unix: unix_now(),
        }
    }

    fn write(&self, dir: &Path, cfg: &ExperimentConfig, command: &str, seeds: Vec<u64>, threads: usize, artifacts: &[(&str, &Path)]) -> CliResult<PathBuf> {
        let mut m = cfg.clone();
        m.run = Some(RunInfo {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seeds,
            threads,
            artifacts: artifacts.iter().map(|(k, p)| (k.to_string(), p.to_path_buf())).collect(),
            started_unix: self.started_unix,
            elapsed_secs: self.started.elapsed().as_secs_f64(),
        });
        let path = dir.join("manifest.toml");
        std::fs::write(&path, m.to_toml()?).map_err(|e| runtime_io(&path, e))?;
        Ok(path)
    }
}

/// Loads the configured dataset and fixes the channel count to match it.
pub fn load_dataset(cfg: &mut ExperimentConfig) -> CliResult<RawSeries> {
    let path = cfg.data_path()?.to_path_buf();
    let series = load_csv(&path).map_err(input)?;
    if cfg.model.channels != series.channels() {
        log::info!("using {} channels from {}", series.channels(), path.display());
        cfg.model.channels = series.channels();
    }
    Ok(series)
}

pub fn split(series: &RawSeries, spec: &SplitSpec, model: &ModelConfig) -> CliResult<SplitData> {
    split_and_normalize(series, spec, model.lookback, model.horizon).map_err(input)
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: TrainOutcome,
    pub test: Metrics,
}

/// Trains on the train split (early-stopping on val) and scores the test split.
pub fn run_experiment(cfg: &ExperimentConfig, data: &SplitData, threads: usize) -> CliResult<RunResult> {
    cfg.validate()?;
    let eval = EvalOptions {
        batch_size: 64,
        threads,
    };
    let init = init_parameters(&cfg.model).map_err(input)?;
    let outcome = train_from(init, &data.train, &data.val, &cfg.model, &cfg.train, eval)?;
    let test = metrics_of(&predict(&outcome.params, &data.test, &cfg.model, eval)?)?;
    Ok(RunResult { outcome, test })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub manifest: PathBuf,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub test: Metrics,
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> CliResult<()> {
    write_rows(path, history)
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainReport> {
    let clock = ManifestWriter::start();
    let mut cfg = ExperimentConfig::resolve(args.model.config.as_deref(), &args.model)?;
    let series = load_dataset(&mut cfg)?;
    cfg.validate()?;
    let data = split(&series, &cfg.split, &cfg.model)?;
    let dir = prepare_out_dir(&args.run)?;
    let result = run_experiment(&cfg, &data, args.run.threads)?;

    let checkpoint = dir.join("checkpoint.bin");
    save_checkpoint(&checkpoint, &cfg.model, &result.outcome.params)?;
    let history = dir.join("history.csv");
    write_history(&history, &result.outcome.history)?;
    let manifest = clock.write(
        &dir,
        &cfg,
        "train",
        vec![cfg.train.seed],
        args.run.threads,
        &[("checkpoint", &checkpoint), ("history", &history)],
    )?;
    println!(
        "best_epoch={} epochs_run={} test_mse={} test_mae={}",
        result.outcome.best_epoch,
        result.outcome.history.len(),
        result.test.mse,
        result.test.mae
    );
    println!("checkpoint: {}", checkpoint.display());
    Ok(TrainReport {
        checkpoint,
        history,
        manifest,
        best_epoch: result.outcome.best_epoch,
        epochs_run: result.outcome.history.len(),
        test: result.test,
    })
}

#[derive(Serialize)]
struct TraceRow {
    window: usize,
    row: usize,
    step: usize,
    channel: usize,
    target: f64,
    x_hat: f64,
    trend: f64,
    latent: f64,
    emphasis: f64,
    mask: f64,
    direction: f64,
}

pub fn write_traces(path: &Path, data: &Dataset, preds: &[BatchPrediction]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for p in preds {
        let o = &p.output;
        let (lp, d) = (o.x_hat.shape()[1], o.x_hat.shape()[2]);
        for (b, &win) in p.windows.iter().enumerate() {
            for step in 0..lp {
                for channel in 0..d {
                    let i = (b * lp + step) * d + channel;
                    w.serialize(TraceRow {
                        window: win,
                        row: data.target_start(win) + step,
                        step,
                        channel,
                        target: p.target.data()[i],
                        x_hat: o.x_hat.data()[i],
                        trend: o.branch_trend.data()[i],
                        latent: o.branch_latent.data()[i],
                        emphasis: o.branch_emphasis.data()[i],
                        mask: o.mask.data()[i],
                        direction: o.direction.data()[i],
                    })
                    .map_err(|e| csv_err(path, e))?;
                }
            }
        }
    }
    w.flush().map_err(|e| runtime_io(path, e))
}

/// Data and model for commands that start from a checkpoint.
struct Restored {
    cfg: ExperimentConfig,
    params: Parameters,
    data: SplitData,
}

fn restore(checkpoint: &Path, data: Option<&Path>, config: Option<&Path>) -> CliResult<Restored> {
    let (model, params) = load_checkpoint(checkpoint).map_err(input)?;
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = data {
        cfg.data.path = Some(d.to_path_buf());
    }
    let series = load_csv(cfg.data_path()?).map_err(input)?;
    if series.channels() != model.channels {
        return Err(CliError::Input(CoreError::Config(format!(
            "checkpoint expects {} channels, dataset has {}",
            model.channels,
            series.channels()
        ))));
    }
    cfg.model = model;
    let data = split(&series, &cfg.split, &cfg.model)?;
    Ok(Restored { cfg, params, data })
}

fn pick(data: &SplitData, which: SplitName) -> &Dataset {
    match which {
        SplitName::Train => &data.train,
        SplitName::Val => &data.val,
        SplitName::Test => &data.test,
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub traces: PathBuf,
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<EvalReport> {
    let r = restore(&args.checkpoint, args.data.as_deref(), args.config.as_deref())?;
    if let Some(h) = args.horizon {
        if h != r.cfg.model.horizon {
            return Err(CliError::Input(CoreError::Config(format!(
                "horizon {h} requested, checkpoint was trained for {}",
                r.cfg.model.horizon
            ))));
        }
    }
    let ds = pick(&r.data, args.split);
    let preds = predict(
        &r.params,
        ds,
        &r.cfg.model,
        EvalOptions {
            batch_size: 64,
            threads: args.run.threads,
        },
    )?;
    let metrics = metrics_of(&preds)?;
    let dir = prepare_out_dir(&args.run)?;
    let traces = dir.join("traces.csv");
    write_traces(&traces, ds, &preds)?;
    println!("split={:?} windows={} mse={} mae={}", args.split, metrics.windows, metrics.mse, metrics.mae);
    Ok(EvalReport { metrics, traces })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub case: usize,
    pub name: String,
    pub trend: bool,
    pub latent: bool,
    pub volatility: bool,
    pub mse: f64,
    pub mae: f64,
}

pub fn cmd_ablate(args: &AblateArgs) -> CliResult<Vec<AblationRow>> {
    let clock = ManifestWriter::start();
    let mut base = ExperimentConfig::resolve(args.model.config.as_deref(), &args.model)?;
    let series = load_dataset(&mut base)?;
    let horizons = if args.horizons.is_empty() {
        vec![base.model.horizon]
    } else {
        args.horizons.clone()
    };
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be ≥ 1".into()));
    }
    let seeds: Vec<u64> = (0..args.runs as u64).map(|k| base.train.seed + k).collect();
    let mut rows = Vec::with_capacity(6);
    for case in AblationCase::ALL {
        let (mut mse, mut mae, mut n) = (0.0, 0.0, 0.0);
        for &h in &horizons {
            let mut cfg = base.clone();
            cfg.model = cfg.model.with_case(case);
            cfg.model.horizon = h;
            cfg.model.window = cfg.model.window.min(h);
            cfg.validate()?;
            let data = split(&series, &cfg.split, &cfg.model)?;
            for &s in &seeds {
                cfg.model.seed = s;
                cfg.train.seed = s;
                let r = run_experiment(&cfg, &data, args.run.threads)?;
                log::info!("{case} horizon {h} seed {s}: mse {} mae {}", r.test.mse, r.test.mae);
                mse += r.test.mse;
                mae += r.test.mae;
                n += 1.0;
            }
        }
        let (t, l, v) = case.flags();
        rows.push(AblationRow {
            case: case.number(),
            name: case.slug().into(),
            trend: t,
            latent: l,
            volatility: v,
            mse: mse / n,
            mae: mae / n,
        });
    }
    let dir = prepare_out_dir(&args.run)?;
    let table = dir.join("ablation.csv");
    write_rows(&table, &rows)?;
    clock.write(&dir, &base, "ablate", seeds, args.run.threads, &[("table", &table)])?;
    println!("case,name,mse,mae");
    for r in &rows {
        println!("{},{},{},{}", r.case, r.name, r.mse, r.mae);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub lookback: usize,
    pub horizon: usize,
    pub ms_per_iter: f64,
    pub params: usize,
    pub trend_params: usize,
    pub activation_bytes: usize,
}

/// Mean wall time of a forward+backward pass over `iters` iterations after `warmup`.
pub fn bench_config(cfg: &ModelConfig, batch: usize, iters: usize, warmup: usize) -> CliResult<BenchRow> {
    cfg.validate().map_err(input)?;
    if batch == 0 || iters == 0 {
        return Err(CliError::Usage("--batch and --iters must be ≥ 1".into()));
    }
    let params = init_parameters(cfg).map_err(input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = draw_noise(&mut rng, batch, cfg.lookback * cfg.channels).reshaped([batch, cfg.lookback, cfg.channels])?;
    let y = draw_noise(&mut rng, batch, cfg.horizon * cfg.channels).reshaped([batch, cfg.horizon, cfg.channels])?;
    let step = |rng: &mut ChaCha8Rng| -> CliResult<()> {
        let eps = cfg.enable_latent.then(|| draw_noise(rng, batch, cfg.latent_dim));
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, true)?;
        let xv = tape.constant(x.clone())?;
        let out = forward_on_tape(&mut tape, xv, &bound, cfg, eps.as_ref())?;
        let loss = loss_on_tape(&mut tape, &out, &y, 1e-3)?;
        tape.backward(loss)?;
        Ok(())
    };
    for _ in 0..warmup {
        step(&mut rng)?;
    }
    let t0 = Instant::now();
    for _ in 0..iters {
        step(&mut rng)?;
    }
    let ms = t0.elapsed().as_secs_f64() * 1e3 / iters as f64;
    let trend_params = params
        .entries()
        .iter()
        .filter(|(n, _)| n.starts_with("trend."))
        .map(|(_, t)| t.len())
        .sum();
    Ok(BenchRow {
        lookback: cfg.lookback,
        horizon: cfg.horizon,
        ms_per_iter: ms,
        params: parameter_count(&params),
        trend_params,
        activation_bytes: activation_bytes(cfg, batch)?,
    })
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<Vec<BenchRow>> {
    let clock = ManifestWriter::start();
    let mut cfg = ExperimentConfig::resolve(args.model.config.as_deref(), &args.model)?;
    if cfg.data.path.is_some() {
        load_dataset(&mut cfg)?;
    } else {
        cfg.model.channels = args.channels;
    }
    if args.lengths.is_empty() {
        return Err(CliError::Usage("--lengths needs at least one value".into()));
    }
    let mut rows = Vec::new();
    for &l in &args.lengths {
        let m = ModelConfig {
            lookback: l,
            ..cfg.model.clone()
        };
        let row = bench_config(&m, args.batch, args.iters, args.warmup)?;
        log::info!("lookback {l}: {:.3} ms/iter", row.ms_per_iter);
        rows.push(row);
    }
    let dir = prepare_out_dir(&args.run)?;
    let table = dir.join("bench.csv");
    write_rows(&table, &rows)?;
    clock.write(&dir, &cfg, "bench", vec![cfg.model.seed], 1, &[("table", &table)])?;
    println!("lookback,horizon,ms_per_iter,params,trend_params,activation_bytes");
    for r in &rows {
        println!(
            "{},{},{:.4},{},{},{}",
            r.lookback, r.horizon, r.ms_per_iter, r.params, r.trend_params, r.activation_bytes
        );
    }
    Ok(rows)
}

/// Writes `window, mu_0.., z_0..` per window; returns the row count.
pub fn cmd_export_latent(args: &ExportArgs) -> CliResult<usize> {
    let r = restore(&args.checkpoint, args.data.as_deref(), args.config.as_deref())?;
    if !r.cfg.model.enable_latent {
        return Err(CliError::Input(CoreError::Config(
            "checkpoint has the latent branch disabled; nothing to export".into(),
        )));
    }
    let ds = pick(&r.data, args.split);
    let h = r.cfg.model.latent_dim;
    let path = &args.out;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["window".to_string()];
    header.extend((0..h).map(|j| format!("mu_{j}")));
    header.extend((0..h).map(|j| format!("z_{j}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut rows = 0;
    for ids in ds.sequential_batches(64) {
        let (x, _) = ds.batch(&ids)?;
        let out = forward(&x, &r.params, &r.cfg.model, &mut rng, !args.no_sample)?;
        let lat = out.latent.expect("latent branch enabled");
        for (b, &win) in ids.iter().enumerate() {
            let mut rec = vec![win.to_string()];
            rec.extend(lat.mu.data()[b * h..(b + 1) * h].iter().map(f64::to_string));
            rec.extend(lat.z.data()[b * h..(b + 1) * h].iter().map(f64::to_string));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| runtime_io(path, e))?;
    println!("rows={rows} out={}", path.display());
    Ok(rows)
}

#[derive(Serialize)]
struct JumpRow {
    time: usize,
    channel: usize,
    shift: f64,
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let s = synth_jump_series(&SynthConfig {
        length: args.length,
        channels: args.channels,
        jump_count: args.jumps,
        jump_scale: args.jump_scale,
        noise: args.noise,
        seed: args.seed,
    })
    .map_err(input)?;
    save_csv(&args.out, &s.series)?;
    let stem = args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    let jumps_path = args.out.with_file_name(format!("{stem}.jumps.csv"));
    write_rows(
        &jumps_path,
        s.jumps.iter().flat_map(|j| {
            j.shifts.iter().enumerate().map(move |(channel, &shift)| JumpRow {
                time: j.time,
                channel,
                shift,
            })
        }),
    )?;
    println!("rows={} channels={} jumps={} out={}", s.series.len(), s.series.channels(), s.jumps.len(), args.out.display());
    Ok(())
}

/// Normalised-space input tensor for a single window, handy for tests.
pub fn window_input(ds: &Dataset, i: usize) -> CliResult<Tensor> {
    Ok(ds.batch(&[i])?.0)
}
