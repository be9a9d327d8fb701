use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::Parameters;

/// AdamW moments mirroring the parameter set, plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Parameters,
    pub v: Parameters,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(params: &Parameters) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One AdamW step with decoupled weight decay:
/// `p ← p − lr·(m̂/(√v̂ + ε) + wd·p)`.
///
/// Fails without touching anything if any gradient is non-finite.
pub fn adamw_step(params: &mut Parameters, grads: &Parameters, state: &mut OptimizerState, cfg: &TrainConfig) -> Result<()> {
    let names = params.names();
    let gs = grads.entries();
    if gs.len() != names.len() {
        return Err(Error::Training(format!("{} gradients for {} parameters", gs.len(), names.len())));
    }
    for ((name, g), (_, p)) in gs.iter().zip(params.entries()) {
        if g.shape() != p.shape() {
            return Err(Error::Training(format!("gradient for {name} has shape {:?}, parameter {:?}", g.shape(), p.shape())));
        }
        if !g.is_finite() {
            return Err(Error::Training(format!("non-finite gradient for parameter {name}")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, wd, eps) = (cfg.learning_rate, cfg.weight_decay, cfg.eps_adam);
    let ms = state.m.values_mut();
    let vs = state.v.values_mut();
    for (((p, (_, g)), m), v) in params.values_mut().into_iter().zip(gs).zip(ms).zip(vs) {
        let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p[i] -= lr * (mh / (vh.sqrt() + eps) + wd * p[i]);
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut Parameters, max_norm: f64) -> f64 {
    let norm = grads.entries().iter().map(|(_, g)| g.squared_norm()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}
