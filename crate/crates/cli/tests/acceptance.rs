//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Exits 0 after reporting unless `ACCEPTANCE_STRICT=1`, in which case any
//! FAIL makes the process exit 1. `ACCEPTANCE_ONLY=3,7` runs a subset.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::suites::{additivity_suite, closed_form_suite, gradient_suite, volatility_suite};
use timecatcher_cli::args::{EvalArgs, ModelOverrides, RunArgs, SplitName, TrainArgs};
use timecatcher_cli::commands::{bench_config, cmd_eval, cmd_train, run_experiment};
use timecatcher_cli::config::ExperimentConfig;
use timecatcher_core::data::{load_csv, save_csv, split_and_normalize, synth_jump_series, SplitSpec, SynthConfig};
use timecatcher_core::model::{AblationCase, ModelConfig};
use timecatcher_core::train::predict;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradients() -> Outcome {
    let t0 = Instant::now();
    let r = gradient_suite();
    let secs = t0.elapsed().as_secs_f64();
    check(
        r.max_rel < 1e-4 && secs < 30.0 && r.checked > 0,
        format!(
            "max rel err {:.2e} at {} over {} coords ({} kink-skipped), {secs:.1}s",
            r.max_rel, r.worst, r.checked, r.skipped
        ),
    )
}

fn closed_forms() -> Outcome {
    let fails = closed_form_suite();
    check(fails.is_empty(), if fails.is_empty() { "kl, Monte-Carlo kl, ema, softplus".into() } else { fails.join("; ") })
}

fn additivity() -> Outcome {
    let (worst, fails) = additivity_suite(1000);
    check(
        fails.is_empty() && worst <= 1e-9,
        format!("6000 inputs, worst residual {worst:.2e}{}", if fails.is_empty() { String::new() } else { format!("; {}", fails.join("; ")) }),
    )
}

fn volatility() -> Outcome {
    let fails = volatility_suite();
    check(fails.is_empty(), if fails.is_empty() { "brute force, flat latent, tau monotone".into() } else { fails.join("; ") })
}

struct JumpScore {
    mse: f64,
    jump_mse: f64,
}

fn jump_run(seed: u64, case: AblationCase) -> Result<JumpScore, String> {
    let (l, lp) = (96, 96);
    let syn = synth_jump_series(&SynthConfig {
        length: 4000,
        channels: 3,
        jump_count: 12,
        seed,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let data = split_and_normalize(&syn.series, &SplitSpec::default(), l, lp).map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig {
        model: ModelConfig {
            lookback: l,
            horizon: lp,
            channels: 3,
            seed,
            ..ModelConfig::default()
        }
        .with_case(case),
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = 30;
    cfg.train.seed = seed;
    let r = run_experiment(&cfg, &data, 1).map_err(|e| e.to_string())?;
    let preds = predict(&r.outcome.params, &data.test, &cfg.model, Default::default()).map_err(|e| e.to_string())?;
    let jumps = syn.jump_times();
    let (mut sum, mut n) = (0.0, 0usize);
    for p in &preds {
        for (b, &w) in p.windows.iter().enumerate() {
            let start = data.test.target_start(w);
            for h in 0..lp {
                let t = start + h;
                if jumps.iter().any(|&j| t.abs_diff(j) <= 8) {
                    for c in 0..3 {
                        let e = p.output.x_hat.at(&[b, h, c]) - p.target.at(&[b, h, c]);
                        sum += e * e;
                        n += 1;
                    }
                }
            }
        }
    }
    if n == 0 {
        return Err(format!("seed {seed}: no test targets near a jump"));
    }
    Ok(JumpScore {
        mse: r.test.mse,
        jump_mse: sum / n as f64,
    })
}

fn jump_sensitivity() -> Outcome {
    let t0 = Instant::now();
    let (mut wins, mut jump_wins) = (0, 0);
    let mut parts = Vec::new();
    for seed in 0..3 {
        let full = jump_run(seed, AblationCase::Full)?;
        let trend = jump_run(seed, AblationCase::TrendOnly)?;
        wins += (full.mse < trend.mse) as usize;
        jump_wins += (full.jump_mse < trend.jump_mse) as usize;
        parts.push(format!(
            "seed {seed} mse {:.4} vs {:.4}, near-jump {:.4} vs {:.4}",
            full.mse, trend.mse, full.jump_mse, trend.jump_mse
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    check(
        wins >= 2 && jump_wins >= 2 && secs < 900.0,
        format!("full beats trend-only on {wins}/3 (near-jump {jump_wins}/3) in {secs:.0}s; {}", parts.join("; ")),
    )
}

fn exchange_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("TIMECATCHER_EXCHANGE_CSV") {
        return Some(p.into());
    }
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/exchange_rate.csv");
    p.exists().then_some(p)
}

fn exchange() -> Outcome {
    let Some(path) = exchange_path() else {
        return Err("exchange-rate CSV not available (set TIMECATCHER_EXCHANGE_CSV or add data/exchange_rate.csv)".into());
    };
    let t0 = Instant::now();
    let series = load_csv(&path).map_err(|e| e.to_string())?;
    let mut total = 0.0;
    let mut runs = Vec::new();
    for seed in 0..3 {
        let mut cfg = ExperimentConfig::default();
        cfg.model.channels = series.channels();
        cfg.model.seed = seed;
        cfg.train.seed = seed;
        let data = split_and_normalize(&series, &cfg.split, 96, 96).map_err(|e| e.to_string())?;
        let r = run_experiment(&cfg, &data, 1).map_err(|e| e.to_string())?;
        total += r.test.mse;
        runs.push(format!("{:.4}", r.test.mse));
    }
    let mean = total / 3.0;
    let secs = t0.elapsed().as_secs_f64();
    check(mean <= 0.12 && secs < 600.0, format!("mean test mse {mean:.4} [{}] in {secs:.0}s", runs.join(", ")))
}

fn small_series(dir: &Path) -> Result<PathBuf, String> {
    let syn = synth_jump_series(&SynthConfig {
        length: 800,
        channels: 2,
        jump_count: 4,
        seed: 5,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let path = dir.join("series.csv");
    save_csv(&path, &syn.series).map_err(|e| e.to_string())?;
    Ok(path)
}

fn train_args(data: PathBuf, out_dir: PathBuf) -> TrainArgs {
    TrainArgs {
        model: ModelOverrides {
            data: Some(data),
            lookback: Some(96),
            horizon: Some(48),
            epochs: Some(3),
            seed: Some(11),
            ..ModelOverrides::default()
        },
        run: RunArgs { threads: 1, out_dir },
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let data = small_series(d)?;
    let first = cmd_train(&train_args(data, d.join("a"))).map_err(|e| e.to_string())?;
    let second = cmd_train(&TrainArgs {
        model: ModelOverrides {
            config: Some(first.manifest.clone()),
            ..ModelOverrides::default()
        },
        run: RunArgs {
            threads: 1,
            out_dir: d.join("b"),
        },
    })
    .map_err(|e| e.to_string())?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
    let same_ckpt = read(&first.checkpoint)? == read(&second.checkpoint)?;
    let same_hist = read(&first.history)? == read(&second.history)?;
    check(
        same_ckpt && same_hist,
        format!("checkpoint identical: {same_ckpt}, history identical: {same_hist}"),
    )
}

fn scaling() -> Outcome {
    let base = ModelConfig::default();
    let short = bench_config(&ModelConfig { lookback: 192, ..base.clone() }, 16, 20, 3).map_err(|e| e.to_string())?;
    let long = bench_config(&ModelConfig { lookback: 768, ..base.clone() }, 16, 20, 3).map_err(|e| e.to_string())?;
    let ratio = long.ms_per_iter / short.ms_per_iter;
    let exact = short.trend_params == 2 * 192 * base.horizon && long.trend_params == 2 * 768 * base.horizon;
    check(
        ratio < 6.0 && exact,
        format!(
            "time ratio {ratio:.2} ({:.2} ms vs {:.2} ms), trend params {} and {}",
            long.ms_per_iter, short.ms_per_iter, short.trend_params, long.trend_params
        ),
    )
}

fn checkpoint_round_trip() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let data = small_series(d)?;
    let trained = cmd_train(&train_args(data, d.join("run"))).map_err(|e| e.to_string())?;
    let eval = cmd_eval(&EvalArgs {
        checkpoint: trained.checkpoint.clone(),
        data: None,
        config: Some(trained.manifest.clone()),
        split: SplitName::Test,
        horizon: None,
        run: RunArgs {
            threads: 1,
            out_dir: d.join("eval"),
        },
    })
    .map_err(|e| e.to_string())?;
    let (a, b) = (trained.test, eval.metrics);
    let exact = a.mse.to_bits() == b.mse.to_bits() && a.mae.to_bits() == b.mae.to_bits() && a.kl.to_bits() == b.kl.to_bits();
    check(exact, format!("in-memory mse {} mae {}, reloaded mse {} mae {}", a.mse, a.mae, b.mse, b.mae))
}

fn main() {
    // libtest flags such as --nocapture may be passed through; ignore them
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [Criterion; 9] = [
        (1, "gradient suite", gradients),
        (2, "closed forms", closed_forms),
        (3, "branch additivity", additivity),
        (4, "volatility semantics", volatility),
        (5, "jump sensitivity", jump_sensitivity),
        (6, "exchange-rate accuracy", exchange),
        (7, "determinism", determinism),
        (8, "efficiency scaling", scaling),
        (9, "checkpoint round trip", checkpoint_round_trip),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {detail}");
            }
        }
    }
    if failed > 0 && strict {
        std::process::exit(1);
    }
}
