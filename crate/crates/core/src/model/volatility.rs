//! Sliding-window amplitude, direction and dynamic-threshold mask.
//!
//! These are computed from values and enter the graph as constants.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct VolatilityMask {
    /// `max − min` of the latent forecast over the window ending at each step.
    pub amplitude: Tensor,
    /// `sign(x̂_t − x̂_start)` with `start` the first index of that window.
    pub direction: Tensor,
    /// 1 where the amplitude reaches `τ · (max − min)` of the input channel.
    pub mask: Tensor,
}

/// `x`: `[B, L, D]` lookback input; `forecast`: `[B, L′, D]` latent-branch output.
///
/// The window at step `t` covers `[max(0, t−w+1), t]`, so early steps see a
/// shorter window instead of values from before the horizon.
pub fn volatility_mask(x: &Tensor, forecast: &Tensor, window: usize, tau: f64) -> Result<VolatilityMask> {
    let (xs, fs) = (x.shape(), forecast.shape());
    if xs.len() != 3 || fs.len() != 3 || xs[0] != fs[0] || xs[2] != fs[2] {
        return Err(Error::dim(format!(
            "volatility mask needs [B, L, D] input and [B, L′, D] forecast, got {xs:?} and {fs:?}"
        )));
    }
    let (b, l, d) = (xs[0], xs[1], xs[2]);
    let lp = fs[1];
    if window == 0 || window > lp {
        return Err(Error::Config(format!("window {window} must satisfy 1 ≤ w ≤ horizon {lp}")));
    }
    let xd = x.data();
    let fd = forecast.data();
    let mut amplitude = vec![0.0; b * lp * d];
    let mut direction = vec![0.0; b * lp * d];
    let mut mask = vec![0.0; b * lp * d];
    for bi in 0..b {
        for di in 0..d {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for t in 0..l {
                let v = xd[(bi * l + t) * d + di];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let threshold = tau * (hi - lo);
            let at = |t: usize| fd[(bi * lp + t) * d + di];
            for t in 0..lp {
                let start = (t + 1).saturating_sub(window);
                let (mut wlo, mut whi) = (f64::INFINITY, f64::NEG_INFINITY);
                for s in start..=t {
                    wlo = wlo.min(at(s));
                    whi = whi.max(at(s));
                }
                let a = whi - wlo;
                let idx = (bi * lp + t) * d + di;
                amplitude[idx] = a;
                direction[idx] = crate::autodiff::tape_sign(at(t) - at(start));
                mask[idx] = if a >= threshold { 1.0 } else { 0.0 };
            }
        }
    }
    let shape = fs.to_vec();
    Ok(VolatilityMask {
        amplitude: Tensor::from_raw(shape.clone(), amplitude),
        direction: Tensor::from_raw(shape.clone(), direction),
        mask: Tensor::from_raw(shape, mask),
    })
}
