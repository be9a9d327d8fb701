//! Exponential-moving-average seasonal/trend split.
//!
//! The trend follows `trend₀ = x₀`, `trendₜ = α·xₜ + (1−α)·trendₜ₋₁` along a
//! chosen axis and the seasonal part is the remainder `x − trend`, so the two
//! always sum back to the input. Used on the input window (time axis) and on
//! the latent vector (latent axis, treated as a pseudo-sequence).

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct DecompResult {
    pub seasonal: Tensor,
    pub trend: Tensor,
}

/// Seasonal/trend handles recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct DecompVars {
    pub seasonal: Var,
    pub trend: Var,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("EMA alpha {alpha} outside (0, 1]")))
    }
}

/// Differentiable decomposition of `x` along `axis`.
pub fn ema_decompose_on(tape: &mut Tape, x: Var, alpha: f64, axis: usize) -> Result<DecompVars> {
    check_alpha(alpha)?;
    let trend = tape.ema_trend(x, alpha, axis)?;
    let seasonal = tape.sub(x, trend)?;
    Ok(DecompVars { seasonal, trend })
}

/// Value-level decomposition.
pub fn ema_decompose(x: &Tensor, alpha: f64, axis: usize) -> Result<DecompResult> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone())?;
    let d = ema_decompose_on(&mut tape, xv, alpha, axis)?;
    Ok(DecompResult {
        seasonal: tape.value(d.seasonal).clone(),
        trend: tape.value(d.trend).clone(),
    })
}

/// Trend of a single 1-D series.
pub fn ema_trend_series(values: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let mut out = Vec::with_capacity(values.len());
    let mut prev = None;
    for &v in values {
        let t = match prev {
            None => v,
            Some(p) => alpha * v + (1.0 - alpha) * p,
        };
        out.push(t);
        prev = Some(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_sequence_is_all_trend() {
        let x = Tensor::full([3], 4.25);
        for alpha in [0.05, 0.3, 0.9, 1.0] {
            let d = ema_decompose(&x, alpha, 0).unwrap();
            assert_eq!(d.trend.data(), &[4.25; 3]);
            assert_eq!(d.seasonal.data(), &[0.0; 3]);
        }
    }

    #[test]
    fn alpha_one_degenerates() {
        let x = Tensor::from_vec(vec![1.0, -3.0, 2.5, 7.0]);
        let d = ema_decompose(&x, 1.0, 0).unwrap();
        assert_eq!(d.trend, x);
        assert!(d.seasonal.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_alpha_hand_computed() {
        let x = Tensor::from_vec(vec![0.0, 2.0]);
        let d = ema_decompose(&x, 0.5, 0).unwrap();
        assert_eq!(d.trend.data(), &[0.0, 1.0]);
        assert_eq!(d.seasonal.data(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_alpha_outside_unit_interval() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        for alpha in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(matches!(ema_decompose(&x, alpha, 0), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn decomposes_along_middle_axis_independently() {
        // shape [1, 3, 2]: channel 0 = [0, 2, 2], channel 1 = [5, 5, 5]
        let x = Tensor::new([1, 3, 2], vec![0.0, 5.0, 2.0, 5.0, 2.0, 5.0]).unwrap();
        let d = ema_decompose(&x, 0.5, 1).unwrap();
        assert_eq!(d.trend.data(), &[0.0, 5.0, 1.0, 5.0, 1.5, 5.0]);
    }

    #[test]
    fn series_helper_matches_tensor_path() {
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let a = ema_trend_series(&v, 0.3).unwrap();
        let b = ema_decompose(&Tensor::from_vec(v), 0.3, 0).unwrap();
        assert_eq!(a, b.trend.data());
    }

    fn series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 1..64)
    }

    proptest! {
        #[test]
        fn reconstruction_is_exact(xs in series(), alpha in 0.01f64..=1.0) {
            let x = Tensor::from_vec(xs);
            let d = ema_decompose(&x, alpha, 0).unwrap();
            for ((s, t), v) in d.seasonal.data().iter().zip(d.trend.data()).zip(x.data()) {
                prop_assert!((s + t - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }

        #[test]
        fn monotone_input_gives_monotone_trend(mut xs in series(), alpha in 0.01f64..=1.0) {
            xs.sort_by(f64::total_cmp);
            let trend = ema_trend_series(&xs, alpha).unwrap();
            for w in trend.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }

        #[test]
        fn trend_is_shift_equivariant(xs in series(), alpha in 0.01f64..=1.0, c in -50.0f64..50.0) {
            let base = ema_trend_series(&xs, alpha).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|v| v + c).collect();
            let moved = ema_trend_series(&shifted, alpha).unwrap();
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((a + c - b).abs() < 1e-9);
            }
        }
    }
}
