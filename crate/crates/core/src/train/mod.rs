//! Loss, AdamW, the training loop and evaluation metrics.

mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{draw_noise, forward, forward_on_tape, ForecastOutput, ForecastVars, ModelConfig, Parameters};

pub use optim::{adamw_step, clip_grad_norm, OptimizerState};

/// Optimiser and loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Weight β of the KL term.
    pub kl_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Non-improving epochs tolerated before stopping; 0 disables early stopping.
    pub patience: usize,
    /// Global gradient-norm cap. Written as `0` in config files when off,
    /// since TOML has no null.
    #[serde(with = "clip_serde")]
    pub grad_clip: Option<f64>,
    /// Seeds batch shuffling and latent sampling.
    pub seed: u64,
}

mod clip_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(0.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v = f64::deserialize(d)?;
        Ok((v != 0.0).then_some(v))
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            kl_weight: 1e-3,
            epochs: 10,
            batch_size: 32,
            patience: 5,
            grad_clip: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        for (n, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{n} {b} outside (0, 1)"));
            }
        }
        // written so NaN fails too
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.eps_adam > 0.0) || !(self.weight_decay >= 0.0) || !(self.kl_weight >= 0.0) {
            return bad("eps_adam must be > 0; weight_decay and kl_weight ≥ 0".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if let Some(c) = self.grad_clip {
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(c > 0.0) {
                return bad(format!("grad_clip {c} must be > 0"));
            }
        }
        Ok(())
    }
}

/// Batch mean of `−½ Σ_h (1 + logvar − mu² − exp(logvar))`.
pub fn kl_divergence(mu: &Tensor, logvar: &Tensor) -> Result<f64> {
    if mu.shape() != logvar.shape() || mu.rank() != 2 {
        return Err(Error::dim(format!("kl_divergence needs equal [B, H] shapes, got {:?} and {:?}", mu.shape(), logvar.shape())));
    }
    let b = mu.shape()[0];
    let s: f64 = mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(&m, &lv)| 1.0 + lv - m * m - lv.exp())
        .sum();
    Ok(-0.5 * s / b as f64)
}

/// Tape version of [`kl_divergence`].
pub fn kl_on_tape(tape: &mut Tape, mu: Var, logvar: Var) -> Result<Var> {
    let sq = tape.mul(mu, mu)?;
    let e = tape.exp(logvar);
    let one = tape.add_scalar(logvar, 1.0)?;
    let a = tape.sub(one, sq)?;
    let inner = tape.sub(a, e)?;
    let per_sample = tape.sum(inner, &[1])?;
    let m = tape.mean_all(per_sample)?;
    Ok(tape.scale(m, -0.5))
}

/// `mean |x̂ − y| + β·KL`, the KL term only when the latent branch ran.
pub fn loss_on_tape(tape: &mut Tape, vars: &ForecastVars, target: &Tensor, kl_weight: f64) -> Result<Var> {
    if tape.shape(vars.x_hat) != target.shape() {
        return Err(Error::dim(format!("forecast {:?} vs target {:?}", tape.shape(vars.x_hat), target.shape())));
    }
    let y = tape.constant(target.clone())?;
    let diff = tape.sub(vars.x_hat, y)?;
    let a = tape.abs(diff);
    let l1 = tape.mean_all(a)?;
    match vars.latent {
        Some(lat) if kl_weight != 0.0 => {
            let kl = kl_on_tape(tape, lat.mu, lat.logvar)?;
            let w = tape.scale(kl, kl_weight);
            tape.add(l1, w)
        }
        _ => Ok(l1),
    }
}

/// Value-level loss on a finished forward pass.
pub fn loss(output: &ForecastOutput, target: &Tensor, cfg: &TrainConfig) -> Result<f64> {
    if output.x_hat.shape() != target.shape() {
        return Err(Error::dim(format!("forecast {:?} vs target {:?}", output.x_hat.shape(), target.shape())));
    }
    let n = target.len() as f64;
    let l1 = output.x_hat.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    match &output.latent {
        Some(l) => Ok(l1 + cfg.kl_weight * kl_divergence(&l.mu, &l.logvar)?),
        None => Ok(l1),
    }
}

/// One row of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen (initial ones if no epoch ran).
    pub params: Parameters,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of `params`, 0 if no epoch ran.
    pub best_epoch: usize,
}

/// Evaluation batching and sharding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    pub batch_size: usize,
    /// Worker threads; results do not depend on this.
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: 64,
            threads: 1,
        }
    }
}

/// Forecasts for one batch of windows.
#[derive(Clone, Debug)]
pub struct BatchPrediction {
    pub windows: Vec<usize>,
    pub output: ForecastOutput,
    pub target: Tensor,
}

/// Runs the model over every window of `data` with sampling off, in window order.
pub fn predict(params: &Parameters, data: &Dataset, cfg: &ModelConfig, opts: EvalOptions) -> Result<Vec<BatchPrediction>> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty split".into()));
    }
    if data.channels() != cfg.channels || data.lookback() != cfg.lookback || data.horizon() != cfg.horizon {
        return Err(Error::Config(format!(
            "dataset windows are L={} L′={} D={}, model expects L={} L′={} D={}",
            data.lookback(),
            data.horizon(),
            data.channels(),
            cfg.lookback,
            cfg.horizon,
            cfg.channels
        )));
    }
    let batches = data.sequential_batches(opts.batch_size);
    let run = |ids: &Vec<usize>| -> Result<BatchPrediction> {
        let (x, y) = data.batch(ids)?;
        // sampling is off, so the generator is never drawn from
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let output = forward(&x, params, cfg, &mut rng, false)?;
        Ok(BatchPrediction {
            windows: ids.clone(),
            output,
            target: y,
        })
    };
    let threads = opts.threads.max(1).min(batches.len());
    if threads == 1 {
        return batches.iter().map(run).collect();
    }
    let chunk = batches.len().div_ceil(threads);
    let shards: Vec<Result<Vec<BatchPrediction>>> = std::thread::scope(|s| {
        let handles: Vec<_> = batches
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(run).collect::<Result<Vec<_>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Training("evaluation worker panicked".into()))))
            .collect()
    });
    let mut out = Vec::with_capacity(batches.len());
    for s in shards {
        out.extend(s?);
    }
    Ok(out)
}

/// Aggregate metrics over a split, in normalised space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    /// Mean KL per window (0 without the latent branch).
    pub kl: f64,
    pub windows: usize,
}

impl Metrics {
    /// `mae + β·kl`, the same objective the training loss uses.
    pub fn loss(&self, kl_weight: f64) -> f64 {
        self.mae + kl_weight * self.kl
    }
}

/// Sums batch contributions in window order, so the result is the same for
/// any thread count.
pub fn metrics_of(preds: &[BatchPrediction]) -> Result<Metrics> {
    let (mut sse, mut sae, mut kl, mut n, mut w) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for p in preds {
        for (a, b) in p.output.x_hat.data().iter().zip(p.target.data()) {
            let e = a - b;
            sse += e * e;
            sae += e.abs();
        }
        n += p.target.len();
        let bsz = p.windows.len();
        if let Some(l) = &p.output.latent {
            kl += kl_divergence(&l.mu, &l.logvar)? * bsz as f64;
        }
        w += bsz;
    }
    if n == 0 {
        return Err(Error::Data("no windows to evaluate".into()));
    }
    Ok(Metrics {
        mse: sse / n as f64,
        mae: sae / n as f64,
        kl: kl / w as f64,
        windows: w,
    })
}

pub fn evaluate_with(params: &Parameters, data: &Dataset, cfg: &ModelConfig, opts: EvalOptions) -> Result<Metrics> {
    metrics_of(&predict(params, data, cfg, opts)?)
}

/// `(mse, mae)` over all windows, sampling disabled.
pub fn evaluate(params: &Parameters, data: &Dataset, cfg: &ModelConfig) -> Result<(f64, f64)> {
    let m = evaluate_with(params, data, cfg, EvalOptions::default())?;
    Ok((m.mse, m.mae))
}

/// One optimisation step on a batch; returns the batch loss.
pub fn train_step(
    params: &mut Parameters,
    state: &mut OptimizerState,
    x: &Tensor,
    y: &Tensor,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let batch = x.shape()[0];
    let eps = model_cfg.enable_latent.then(|| draw_noise(rng, batch, model_cfg.latent_dim));
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true)?;
    let xv = tape.constant(x.clone())?;
    let vars = forward_on_tape(&mut tape, xv, &bound, model_cfg, eps.as_ref())?;
    let loss = loss_on_tape(&mut tape, &vars, y, train_cfg.kl_weight)?;
    let value = tape.value(loss).item()?;
    if !value.is_finite() {
        return Err(Error::Training(format!("non-finite loss {value}")));
    }
    tape.backward(loss)?;
    let mut grads = bound.grads(&tape);
    if let Some(c) = train_cfg.grad_clip {
        clip_grad_norm(&mut grads, c);
    }
    adamw_step(params, &grads, state, train_cfg)?;
    Ok(value)
}

/// Trains from `init`; see [`train_model`].
pub fn train_from(
    init: Parameters,
    train: &Dataset,
    val: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    eval: EvalOptions,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation splits must be non-empty".into()));
    }
    crate::model::check_structure(&init, model_cfg)?;
    let mut params = init;
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut state = OptimizerState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=train_cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for (step, ids) in order.chunks(train_cfg.batch_size).enumerate() {
            let (x, y) = train.batch(ids)?;
            let l = train_step(&mut params, &mut state, &x, &y, model_cfg, train_cfg, &mut rng)
                .map_err(|e| match e {
                    Error::Training(m) => Error::Training(format!("epoch {epoch}, step {step}: {m}")),
                    other => other,
                })?;
            total += l * ids.len() as f64;
            seen += ids.len();
        }
        let m = evaluate_with(&params, val, model_cfg, eval)?;
        let rec = EpochRecord {
            epoch,
            train_loss: total / seen as f64,
            val_loss: m.loss(train_cfg.kl_weight),
            val_mse: m.mse,
            val_mae: m.mae,
        };
        log::info!(
            "epoch {epoch}: train {:.6} val {:.6} (mse {:.6}, mae {:.6})",
            rec.train_loss,
            rec.val_loss,
            rec.val_mse,
            rec.val_mae
        );
        if !rec.val_loss.is_finite() {
            return Err(Error::Training(format!("epoch {epoch}: non-finite validation loss")));
        }
        let improved = rec.val_loss < best_loss;
        history.push(rec);
        if improved {
            best_loss = history[epoch - 1].val_loss;
            best = params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if train_cfg.patience > 0 && stale >= train_cfg.patience {
                log::info!("early stop after epoch {epoch}; best epoch {best_epoch}");
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: if best_epoch == 0 { params } else { best },
        history,
        best_epoch,
    })
}

/// Initialises from `model_cfg.seed` and trains with early stopping on the
/// validation loss, returning the best parameters and the per-epoch history.
pub fn train_model(train: &Dataset, val: &Dataset, model_cfg: &ModelConfig, train_cfg: &TrainConfig) -> Result<TrainOutcome> {
    let init = crate::model::init_parameters(model_cfg)?;
    train_from(init, train, val, model_cfg, train_cfg, EvalOptions::default())
}
