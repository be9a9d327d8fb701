use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::ModelConfig;
use super::params::{Affine, BoundParams, Parameters};
use super::volatility::{volatility_mask, VolatilityMask};
use crate::autodiff::{Tape, Tensor, Var};
use crate::decomp::ema_decompose_on;
use crate::error::{Error, Result};

/// Posterior parameters and latent samples.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub mu: Tensor,
    pub logvar: Tensor,
    /// `mu + exp(logvar/2)·eps`, or `mu` when sampling is off.
    pub z: Tensor,
    pub z_hat: Tensor,
    /// Standard-normal draw used for `z`, if sampling was on.
    pub eps: Option<Tensor>,
}

/// Forecast and its decomposition into branch contributions, all `[B, L′, D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastOutput {
    pub x_hat: Tensor,
    pub branch_trend: Tensor,
    pub branch_latent: Tensor,
    pub branch_emphasis: Tensor,
    pub mask: Tensor,
    pub direction: Tensor,
    pub latent: Option<LatentState>,
}

/// Latent-branch handles on the tape.
#[derive(Clone, Copy, Debug)]
pub struct LatentVars {
    pub mu: Var,
    pub logvar: Var,
    pub z: Var,
    pub z_hat: Var,
    pub decoded: Var,
}

/// Everything a forward pass records, for loss construction and readout.
#[derive(Clone, Debug)]
pub struct ForecastVars {
    pub x_hat: Var,
    pub trend: Option<Var>,
    pub latent: Option<LatentVars>,
    pub emphasis: Option<Var>,
    pub volatility: Option<VolatilityMask>,
    pub eps: Option<Tensor>,
}

fn check_input(x: &[usize], cfg: &ModelConfig) -> Result<()> {
    if x.len() != 3 || x[1] != cfg.lookback || x[2] != cfg.channels {
        return Err(Error::dim(format!(
            "input shape {x:?}, expected [B, {}, {}]",
            cfg.lookback, cfg.channels
        )));
    }
    Ok(())
}

/// `x · Wᵀ + b` for `x: [B, in]`, `W: [out, in]`.
fn linear(tape: &mut Tape, x: Var, layer: &Affine<Var>) -> Result<Var> {
    let y = tape.matmul_nt(x, layer.weight)?;
    tape.add(y, layer.bias)
}

/// Applies `[L′, L]` projections along the time axis of a `[B, L, D]`
/// seasonal/trend pair, channel by channel with shared weights.
fn project_time(tape: &mut Tape, parts: [(Var, Var); 2], cfg: &ModelConfig, batch: usize) -> Result<Var> {
    let (l, lp, d) = (cfg.lookback, cfg.horizon, cfg.channels);
    let mut acc = None;
    for (series, weight) in parts {
        let p = tape.permute(series, &[0, 2, 1])?;
        let rows = tape.reshape(p, &[batch * d, l])?;
        let y = tape.matmul_nt(rows, weight)?;
        acc = Some(match acc {
            None => y,
            Some(a) => tape.add(a, y)?,
        });
    }
    let y = tape.reshape(acc.expect("two parts"), &[batch, d, lp])?;
    tape.permute(y, &[0, 2, 1])
}

/// Trend branch: EMA-decompose the input along time and project both parts.
pub fn trend_branch(tape: &mut Tape, x: Var, params: &BoundParams, cfg: &ModelConfig) -> Result<Var> {
    check_input(tape.shape(x), cfg)?;
    let trend = params
        .trend
        .as_ref()
        .ok_or_else(|| Error::Config("trend branch parameters missing".into()))?;
    let batch = tape.shape(x)[0];
    let parts = ema_decompose_on(tape, x, cfg.alpha_x, 1)?;
    project_time(
        tape,
        [(parts.seasonal, trend.w_seasonal), (parts.trend, trend.w_trend)],
        cfg,
        batch,
    )
}

/// Conv encoder; returns `(mu, logvar)`, each `[B, H]`.
pub fn encode(tape: &mut Tape, x: Var, params: &BoundParams, cfg: &ModelConfig) -> Result<(Var, Var)> {
    check_input(tape.shape(x), cfg)?;
    cfg.encoder_lengths()?;
    let latent = params
        .latent
        .as_ref()
        .ok_or_else(|| Error::Config("latent branch parameters missing".into()))?;
    let batch = tape.shape(x)[0];
    let mut h = tape.permute(x, &[0, 2, 1])?;
    for layer in &latent.conv {
        let c = tape.conv1d(h, layer.weight, Some(layer.bias), cfg.conv_stride, cfg.conv_padding)?;
        h = tape.relu(c);
    }
    let features = tape.value(h).len() / batch;
    let flat = tape.reshape(h, &[batch, features])?;
    let mu = linear(tape, flat, &latent.mu_head)?;
    let logvar = linear(tape, flat, &latent.logvar_head)?;
    Ok((mu, logvar))
}

/// `z = mu + exp(logvar/2) ⊙ eps`; with `eps = None` the latent is `mu` itself.
pub fn reparameterize(tape: &mut Tape, mu: Var, logvar: Var, eps: Option<&Tensor>) -> Result<Var> {
    if tape.shape(mu) != tape.shape(logvar) {
        return Err(Error::dim(format!(
            "mu {:?} and logvar {:?} differ",
            tape.shape(mu),
            tape.shape(logvar)
        )));
    }
    let Some(eps) = eps else { return Ok(mu) };
    if eps.shape() != tape.shape(mu) {
        return Err(Error::dim(format!("noise {:?} for latent {:?}", eps.shape(), tape.shape(mu))));
    }
    let half = tape.scale(logvar, 0.5);
    let sigma = tape.exp(half);
    let e = tape.constant(eps.clone())?;
    let noise = tape.mul(sigma, e)?;
    tape.add(mu, noise)
}

/// Draws a `[B, H]` standard-normal tensor.
pub fn draw_noise(rng: &mut impl Rng, batch: usize, latent_dim: usize) -> Tensor {
    Tensor::from_fn([batch, latent_dim], |_| StandardNormal.sample(rng))
}

/// EMA-decomposes `z` along its latent axis and projects both parts.
pub fn project_latent(tape: &mut Tape, z: Var, params: &BoundParams, cfg: &ModelConfig) -> Result<Var> {
    let latent = params
        .latent
        .as_ref()
        .ok_or_else(|| Error::Config("latent branch parameters missing".into()))?;
    let s = tape.shape(z);
    if s.len() != 2 || s[1] != cfg.latent_dim {
        return Err(Error::dim(format!("latent {s:?}, expected [B, {}]", cfg.latent_dim)));
    }
    let parts = ema_decompose_on(tape, z, cfg.alpha_z, 1)?;
    let a = tape.matmul_nt(parts.seasonal, latent.w_seasonal)?;
    let b = tape.matmul_nt(parts.trend, latent.w_trend)?;
    tape.add(a, b)
}

/// MLP decoder `H → hidden → … → L′·D`, reshaped to `[B, L′, D]`.
pub fn decode(tape: &mut Tape, z_hat: Var, params: &BoundParams, cfg: &ModelConfig) -> Result<Var> {
    let latent = params
        .latent
        .as_ref()
        .ok_or_else(|| Error::Config("latent branch parameters missing".into()))?;
    let batch = tape.shape(z_hat)[0];
    let mut h = z_hat;
    let last = latent.decoder.len().saturating_sub(1);
    for (i, layer) in latent.decoder.iter().enumerate() {
        h = linear(tape, h, layer)?;
        if i < last {
            h = tape.relu(h);
        }
    }
    tape.reshape(h, &[batch, cfg.horizon, cfg.channels])
}

/// Volatility emphasis `g(softplus(γ)·|x̂ᶻ − x̂ˣ|) ⊙ direction ⊙ mask`.
///
/// `trend_forecast = None` stands for a disabled trend branch (treated as zero).
pub fn volatility_branch(
    tape: &mut Tape,
    x: Var,
    latent_forecast: Var,
    trend_forecast: Option<Var>,
    params: &BoundParams,
    cfg: &ModelConfig,
) -> Result<(Var, VolatilityMask)> {
    let vol = params
        .volatility
        .as_ref()
        .ok_or_else(|| Error::Config("volatility branch parameters missing".into()))?;
    if let Some(t) = trend_forecast {
        if tape.shape(t) != tape.shape(latent_forecast) {
            return Err(Error::dim(format!(
                "trend forecast {:?} vs latent forecast {:?}",
                tape.shape(t),
                tape.shape(latent_forecast)
            )));
        }
    }
    let masks = volatility_mask(tape.value(x), tape.value(latent_forecast), cfg.window, cfg.tau)?;
    let raw = match trend_forecast {
        Some(t) => tape.sub(latent_forecast, t)?,
        None => latent_forecast,
    };
    let delta = tape.abs(raw);
    let scale = tape.softplus(vol.gamma);
    let scaled = tape.mul(delta, scale)?;
    let weighted = tape.mul(scaled, vol.g_weight)?;
    let magnitude = tape.add(weighted, vol.g_bias)?;
    let gate = Tensor::from_fn(masks.mask.shape().to_vec(), |i| masks.mask.data()[i] * masks.direction.data()[i]);
    let gate = tape.constant(gate)?;
    let emphasis = tape.mul(magnitude, gate)?;
    Ok((emphasis, masks))
}

/// Records the full forward pass on `tape`.
///
/// `eps` is the reparameterisation noise; `None` means `z = mu`.
pub fn forward_on_tape(
    tape: &mut Tape,
    x: Var,
    params: &BoundParams,
    cfg: &ModelConfig,
    eps: Option<&Tensor>,
) -> Result<ForecastVars> {
    check_input(tape.shape(x), cfg)?;
    let trend = if cfg.enable_trend {
        Some(trend_branch(tape, x, params, cfg)?)
    } else {
        None
    };
    let latent = if cfg.enable_latent {
        let (mu, logvar) = encode(tape, x, params, cfg)?;
        let z = reparameterize(tape, mu, logvar, eps)?;
        let z_hat = project_latent(tape, z, params, cfg)?;
        let decoded = decode(tape, z_hat, params, cfg)?;
        Some(LatentVars {
            mu,
            logvar,
            z,
            z_hat,
            decoded,
        })
    } else {
        None
    };
    let (emphasis, volatility) = if cfg.enable_volatility {
        let xz = match &latent {
            Some(l) => l.decoded,
            // no latent forecast: zero trajectory, so the mask is empty
            None => tape.constant(Tensor::zeros([tape.shape(x)[0], cfg.horizon, cfg.channels]))?,
        };
        let (e, m) = volatility_branch(tape, x, xz, trend, params, cfg)?;
        (Some(e), Some(m))
    } else {
        (None, None)
    };
    let mut x_hat: Option<Var> = None;
    for part in [trend, latent.map(|l| l.decoded), emphasis].into_iter().flatten() {
        x_hat = Some(match x_hat {
            None => part,
            Some(acc) => tape.add(acc, part)?,
        });
    }
    let x_hat = x_hat.ok_or_else(|| Error::Config("no forecasting branch enabled".into()))?;
    Ok(ForecastVars {
        x_hat,
        trend,
        latent,
        emphasis,
        volatility,
        eps: eps.cloned(),
    })
}

impl ForecastVars {
    /// Copies the recorded values out of the tape; disabled branches become zeros.
    pub fn read(&self, tape: &Tape) -> ForecastOutput {
        let x_hat = tape.value(self.x_hat).clone();
        let zeros = || Tensor::zeros(x_hat.shape().to_vec());
        let value_or_zero = |v: Option<Var>| v.map(|v| tape.value(v).clone()).unwrap_or_else(zeros);
        let (mask, direction) = match &self.volatility {
            Some(m) => (m.mask.clone(), m.direction.clone()),
            None => (zeros(), zeros()),
        };
        ForecastOutput {
            branch_trend: value_or_zero(self.trend),
            branch_latent: value_or_zero(self.latent.map(|l| l.decoded)),
            branch_emphasis: value_or_zero(self.emphasis),
            mask,
            direction,
            latent: self.latent.map(|l| LatentState {
                mu: tape.value(l.mu).clone(),
                logvar: tape.value(l.logvar).clone(),
                z: tape.value(l.z).clone(),
                z_hat: tape.value(l.z_hat).clone(),
                eps: self.eps.clone(),
            }),
            x_hat,
        }
    }
}

/// Forward pass on a fresh tape with no gradient tracking.
///
/// With `sampling` on, `eps` is drawn from `rng`; otherwise `z = mu` and `rng`
/// is untouched.
pub fn forward(x: &Tensor, params: &Parameters, cfg: &ModelConfig, rng: &mut impl Rng, sampling: bool) -> Result<ForecastOutput> {
    check_input(x.shape(), cfg)?;
    let eps = (sampling && cfg.enable_latent).then(|| draw_noise(rng, x.shape()[0], cfg.latent_dim));
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false)?;
    let xv = tape.constant(x.clone())?;
    let vars = forward_on_tape(&mut tape, xv, &bound, cfg, eps.as_ref())?;
    Ok(vars.read(&tape))
}

/// Bytes of intermediate activations recorded by one forward pass over a
/// batch of `batch` windows (with sampling on), counted per node from the
/// shapes of the graph built by [`forward_on_tape`].
pub fn activation_bytes(cfg: &ModelConfig, batch: usize) -> Result<usize> {
    cfg.validate()?;
    let (b, l, lp, d, h) = (batch, cfg.lookback, cfg.horizon, cfg.channels, cfg.latent_dim);
    let mut n = 0usize;
    let out = b * lp * d;
    if cfg.enable_trend {
        // ema, sub, 2×(permute, reshape), 2×matmul, add, reshape, permute
        n += 6 * b * l * d + 5 * b * d * lp;
    }
    if cfg.enable_latent {
        n += b * l * d;
        let lens = cfg.encoder_lengths()?;
        for (c, t) in cfg.conv_channels.iter().zip(&lens) {
            n += 2 * b * c * t;
        }
        let f = cfg.encoder_features()?;
        n += b * f;
        n += 2 * (2 * b * h);
        n += 4 * b * h;
        n += 5 * b * h;
        let widths = cfg.decoder_widths();
        let layers = widths.len() - 1;
        for (i, w) in widths.windows(2).enumerate() {
            n += 2 * b * w[1];
            if i + 1 < layers {
                n += b * w[1];
            }
        }
        n += out;
    }
    if cfg.enable_volatility {
        n += if cfg.enable_trend { 2 * out } else { out };
        n += 1 + 4 * out;
    }
    let branches = [cfg.enable_trend, cfg.enable_latent, cfg.enable_volatility]
        .iter()
        .filter(|&&e| e)
        .count();
    n += branches.saturating_sub(1) * out;
    Ok(n * std::mem::size_of::<f64>())
}
