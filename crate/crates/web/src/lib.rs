//! WebAssembly bindings for the demo page in `www/`.
//!
//! Everything works on a single channel so the page can pass plain
//! `Float64Array`s around.

use timecatcher_core::autodiff::Tensor;
use timecatcher_core::data::{synth_jump_series as synth, SynthConfig};
use timecatcher_core::decomp::ema_decompose as decompose;
use timecatcher_core::model::volatility_mask as mask;
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct Decomposition {
    trend: Vec<f64>,
    seasonal: Vec<f64>,
}

#[wasm_bindgen]
impl Decomposition {
    #[wasm_bindgen(getter)]
    pub fn trend(&self) -> Vec<f64> {
        self.trend.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn seasonal(&self) -> Vec<f64> {
        self.seasonal.clone()
    }
}

#[wasm_bindgen]
pub struct VolatilityMask {
    mask: Vec<f64>,
    amplitude: Vec<f64>,
    direction: Vec<f64>,
}

#[wasm_bindgen]
impl VolatilityMask {
    #[wasm_bindgen(getter)]
    pub fn mask(&self) -> Vec<f64> {
        self.mask.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn amplitude(&self) -> Vec<f64> {
        self.amplitude.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn direction(&self) -> Vec<f64> {
        self.direction.clone()
    }
}

#[wasm_bindgen]
pub struct JumpSeries {
    values: Vec<f64>,
    jumps: Vec<u32>,
}

#[wasm_bindgen]
impl JumpSeries {
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Row indices of the level shifts.
    #[wasm_bindgen(getter)]
    pub fn jumps(&self) -> Vec<u32> {
        self.jumps.clone()
    }
}

fn series(values: &[f64]) -> Result<Tensor, String> {
    Tensor::new([1, values.len(), 1], values.to_vec()).map_err(|e| e.to_string())
}

pub fn decompose_series(values: &[f64], alpha: f64) -> Result<Decomposition, String> {
    let d = decompose(&series(values)?, alpha, 1).map_err(|e| e.to_string())?;
    Ok(Decomposition {
        trend: d.trend.data().to_vec(),
        seasonal: d.seasonal.data().to_vec(),
    })
}

pub fn mask_series(input: &[f64], forecast: &[f64], window: usize, tau: f64) -> Result<VolatilityMask, String> {
    let m = mask(&series(input)?, &series(forecast)?, window, tau).map_err(|e| e.to_string())?;
    Ok(VolatilityMask {
        mask: m.mask.data().to_vec(),
        amplitude: m.amplitude.data().to_vec(),
        direction: m.direction.data().to_vec(),
    })
}

pub fn jump_series(length: usize, jumps: usize, jump_scale: f64, noise: f64, seed: u32) -> Result<JumpSeries, String> {
    let s = synth(&SynthConfig {
        length,
        channels: 1,
        jump_count: jumps,
        jump_scale,
        noise,
        seed: seed.into(),
    })
    .map_err(|e| e.to_string())?;
    Ok(JumpSeries {
        values: s.series.values().to_vec(),
        jumps: s.jump_times().into_iter().map(|t| t as u32).collect(),
    })
}

/// Splits `values` into an EMA trend and the seasonal remainder.
#[wasm_bindgen]
pub fn ema_decompose(values: &[f64], alpha: f64) -> Result<Decomposition, JsError> {
    decompose_series(values, alpha).map_err(|e| JsError::new(&e))
}

/// Flags forecast steps whose windowed swing reaches `tau` times the input range.
#[wasm_bindgen]
pub fn volatility_mask(input: &[f64], forecast: &[f64], window: usize, tau: f64) -> Result<VolatilityMask, JsError> {
    mask_series(input, forecast, window, tau).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn synth_jump_series(length: usize, jumps: usize, jump_scale: f64, noise: f64, seed: u32) -> Result<JumpSeries, JsError> {
    jump_series(length, jumps, jump_scale, noise, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_adds_back_up() {
        let x = [1.0, 4.0, -2.0, 3.5, 0.0];
        let d = decompose_series(&x, 0.3).unwrap();
        assert_eq!(d.trend[0], 1.0);
        for ((t, s), v) in d.trend.iter().zip(&d.seasonal).zip(x) {
            assert!((t + s - v).abs() < 1e-12);
        }
        assert!(decompose_series(&x, 1.5).is_err());
        assert!(decompose_series(&[], 0.3).is_err());
    }

    #[test]
    fn mask_flags_large_swings_only() {
        let input = [0.0, 1.0, 2.0, 3.0];
        let forecast = [0.0, 0.1, 2.0, 2.0, 2.1];
        let v = mask_series(&input, &forecast, 2, 0.5).unwrap();
        // window amplitudes 0, 0.1, 1.9, 0, 0.1 against a threshold of 1.5
        assert_eq!(v.mask, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(v.direction[2], 1.0);
    }

    #[test]
    fn jump_series_is_seeded() {
        let a = jump_series(300, 4, 3.0, 0.1, 9).unwrap();
        let b = jump_series(300, 4, 3.0, 0.1, 9).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.jumps.len(), 4);
        assert_ne!(jump_series(300, 4, 3.0, 0.1, 10).unwrap().values, a.values);
    }
}
