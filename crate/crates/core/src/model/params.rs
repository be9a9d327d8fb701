use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::ModelConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Weight/bias pair. For linear layers the weight is `[out, in]`; for conv
/// layers it is `[C_out, C_in, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<T> {
    pub weight: T,
    pub bias: T,
}

/// Time projections of the seasonal and trend parts of the input, each `[L′, L]`,
/// shared across channels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrendParams<T> {
    pub w_seasonal: T,
    pub w_trend: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentParams<T> {
    pub conv: Vec<Affine<T>>,
    pub mu_head: Affine<T>,
    pub logvar_head: Affine<T>,
    /// `[H, H]` projections of the decomposed latent vector.
    pub w_seasonal: T,
    pub w_trend: T,
    pub decoder: Vec<Affine<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolatilityParams<T> {
    /// Scalar scale, passed through softplus.
    pub gamma: T,
    /// Per-channel affine map `g`, each `[D]`.
    pub g_weight: T,
    pub g_bias: T,
}

/// Parameters of all enabled branches. `T` is [`Tensor`] for stored values and
/// gradients, [`Var`] once bound to a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    pub trend: Option<TrendParams<T>>,
    pub latent: Option<LatentParams<T>>,
    pub volatility: Option<VolatilityParams<T>>,
}

pub type Parameters = ParamSet<Tensor>;
pub type BoundParams = ParamSet<Var>;

impl<T> Affine<T> {
    fn try_map<U>(&self, prefix: &str, f: &mut impl FnMut(&str, &T) -> Result<U>) -> Result<Affine<U>> {
        Ok(Affine {
            weight: f(&format!("{prefix}.weight"), &self.weight)?,
            bias: f(&format!("{prefix}.bias"), &self.bias)?,
        })
    }
}

impl<T> ParamSet<T> {
    /// Stable `(name, value)` listing; the order is the checkpoint order.
    pub fn entries(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        if let Some(t) = &self.trend {
            out.push(("trend.w_seasonal".to_string(), &t.w_seasonal));
            out.push(("trend.w_trend".to_string(), &t.w_trend));
        }
        if let Some(l) = &self.latent {
            for (i, c) in l.conv.iter().enumerate() {
                out.push((format!("encoder.conv{i}.weight"), &c.weight));
                out.push((format!("encoder.conv{i}.bias"), &c.bias));
            }
            out.push(("encoder.mu.weight".to_string(), &l.mu_head.weight));
            out.push(("encoder.mu.bias".to_string(), &l.mu_head.bias));
            out.push(("encoder.logvar.weight".to_string(), &l.logvar_head.weight));
            out.push(("encoder.logvar.bias".to_string(), &l.logvar_head.bias));
            out.push(("latent.w_seasonal".to_string(), &l.w_seasonal));
            out.push(("latent.w_trend".to_string(), &l.w_trend));
            for (i, d) in l.decoder.iter().enumerate() {
                out.push((format!("decoder.{i}.weight"), &d.weight));
                out.push((format!("decoder.{i}.bias"), &d.bias));
            }
        }
        if let Some(v) = &self.volatility {
            out.push(("volatility.gamma".to_string(), &v.gamma));
            out.push(("volatility.g_weight".to_string(), &v.g_weight));
            out.push(("volatility.g_bias".to_string(), &v.g_bias));
        }
        out
    }

    /// Mutable values in [`entries`](Self::entries) order.
    pub fn values_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        if let Some(t) = &mut self.trend {
            out.push(&mut t.w_seasonal);
            out.push(&mut t.w_trend);
        }
        if let Some(l) = &mut self.latent {
            for c in &mut l.conv {
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
            out.push(&mut l.mu_head.weight);
            out.push(&mut l.mu_head.bias);
            out.push(&mut l.logvar_head.weight);
            out.push(&mut l.logvar_head.bias);
            out.push(&mut l.w_seasonal);
            out.push(&mut l.w_trend);
            for d in &mut l.decoder {
                out.push(&mut d.weight);
                out.push(&mut d.bias);
            }
        }
        if let Some(v) = &mut self.volatility {
            out.push(&mut v.gamma);
            out.push(&mut v.g_weight);
            out.push(&mut v.g_bias);
        }
        out
    }

    /// Structure-preserving map; `f` sees the same names as [`entries`](Self::entries).
    pub fn try_map<U>(&self, mut f: impl FnMut(&str, &T) -> Result<U>) -> Result<ParamSet<U>> {
        let trend = match &self.trend {
            Some(t) => Some(TrendParams {
                w_seasonal: f("trend.w_seasonal", &t.w_seasonal)?,
                w_trend: f("trend.w_trend", &t.w_trend)?,
            }),
            None => None,
        };
        let latent = match &self.latent {
            Some(l) => {
                let conv = l
                    .conv
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.try_map(&format!("encoder.conv{i}"), &mut f))
                    .collect::<Result<Vec<_>>>()?;
                let mu_head = l.mu_head.try_map("encoder.mu", &mut f)?;
                let logvar_head = l.logvar_head.try_map("encoder.logvar", &mut f)?;
                let w_seasonal = f("latent.w_seasonal", &l.w_seasonal)?;
                let w_trend = f("latent.w_trend", &l.w_trend)?;
                let decoder = l
                    .decoder
                    .iter()
                    .enumerate()
                    .map(|(i, d)| d.try_map(&format!("decoder.{i}"), &mut f))
                    .collect::<Result<Vec<_>>>()?;
                Some(LatentParams {
                    conv,
                    mu_head,
                    logvar_head,
                    w_seasonal,
                    w_trend,
                    decoder,
                })
            }
            None => None,
        };
        let volatility = match &self.volatility {
            Some(v) => Some(VolatilityParams {
                gamma: f("volatility.gamma", &v.gamma)?,
                g_weight: f("volatility.g_weight", &v.g_weight)?,
                g_bias: f("volatility.g_bias", &v.g_bias)?,
            }),
            None => None,
        };
        Ok(ParamSet {
            trend,
            latent,
            volatility,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ParamSet<U> {
        self.try_map(|n, t| Ok(f(n, t))).expect("infallible map")
    }

    pub fn names(&self) -> Vec<String> {
        self.entries().into_iter().map(|(n, _)| n).collect()
    }
}

impl Parameters {
    /// Records every tensor as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Result<BoundParams> {
        self.try_map(|_, t| tape.leaf(t.clone(), requires_grad))
    }

    /// Zero tensors of identical structure.
    pub fn zeros_like(&self) -> Parameters {
        self.map(|_, t| Tensor::zeros(t.shape().to_vec()))
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|(_, t)| t.is_finite())
    }
}

impl BoundParams {
    /// Gradients accumulated on `tape`; parameters that received none get zeros.
    pub fn grads(&self, tape: &Tape) -> Parameters {
        self.map(|_, &v| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.shape(v).to_vec()))
        })
    }
}

/// Exact number of trainable scalars.
pub fn parameter_count(params: &Parameters) -> usize {
    params.entries().iter().map(|(_, t)| t.len()).sum()
}

fn uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Tensor::from_fn(shape.to_vec(), |_| dist.sample(rng))
}

fn near_identity(rng: &mut impl Rng, n: usize) -> Tensor {
    let noise = Normal::new(0.0, 0.01).expect("valid std");
    Tensor::from_fn([n, n], |i| {
        let diag = if i / n == i % n { 1.0 } else { 0.0 };
        diag + noise.sample(rng)
    })
}

/// Deterministic initialisation from `cfg.seed`.
///
/// Trend projections start as a moving average (every entry `1/L`), the latent
/// projections near the identity so that `ẑ ≈ z`, conv and linear layers
/// uniform in `±sqrt(1/fan_in)`, `γ = 0` and `g` the identity map.
pub fn init_parameters(cfg: &ModelConfig) -> Result<Parameters> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (l, lp, d, h) = (cfg.lookback, cfg.horizon, cfg.channels, cfg.latent_dim);

    let trend = cfg.enable_trend.then(|| TrendParams {
        w_seasonal: Tensor::full([lp, l], 1.0 / l as f64),
        w_trend: Tensor::full([lp, l], 1.0 / l as f64),
    });

    let latent = if cfg.enable_latent {
        let mut conv = Vec::with_capacity(cfg.conv_layers);
        let mut c_in = d;
        for &c_out in &cfg.conv_channels {
            let fan_in = c_in * cfg.conv_kernel;
            conv.push(Affine {
                weight: uniform(&mut rng, &[c_out, c_in, cfg.conv_kernel], fan_in),
                bias: uniform(&mut rng, &[c_out], fan_in),
            });
            c_in = c_out;
        }
        let features = cfg.encoder_features()?;
        let head = |rng: &mut ChaCha8Rng| Affine {
            weight: uniform(rng, &[h, features], features),
            bias: uniform(rng, &[h], features),
        };
        let mu_head = head(&mut rng);
        let logvar_head = head(&mut rng);
        let w_seasonal = near_identity(&mut rng, h);
        let w_trend = near_identity(&mut rng, h);
        let widths = cfg.decoder_widths();
        let decoder = widths
            .windows(2)
            .map(|w| Affine {
                weight: uniform(&mut rng, &[w[1], w[0]], w[0]),
                bias: uniform(&mut rng, &[w[1]], w[0]),
            })
            .collect();
        Some(LatentParams {
            conv,
            mu_head,
            logvar_head,
            w_seasonal,
            w_trend,
            decoder,
        })
    } else {
        None
    };

    let volatility = cfg.enable_volatility.then(|| VolatilityParams {
        gamma: Tensor::scalar(0.0),
        g_weight: Tensor::ones([d]),
        g_bias: Tensor::zeros([d]),
    });

    Ok(ParamSet {
        trend,
        latent,
        volatility,
    })
}

/// Checks that `params` has exactly the structure `cfg` implies.
pub fn check_structure(params: &Parameters, cfg: &ModelConfig) -> Result<()> {
    let expected = init_parameters(&ModelConfig { seed: 0, ..cfg.clone() })?;
    let (want, got) = (expected.entries(), params.entries());
    if want.len() != got.len() {
        return Err(Error::Config(format!(
            "parameter set has {} tensors, configuration implies {}",
            got.len(),
            want.len()
        )));
    }
    for ((wn, wt), (gn, gt)) in want.iter().zip(&got) {
        if wn != gn || wt.shape() != gt.shape() {
            return Err(Error::Config(format!(
                "parameter {gn} {:?} does not match expected {wn} {:?}",
                gt.shape(),
                wt.shape()
            )));
        }
    }
    Ok(())
}
