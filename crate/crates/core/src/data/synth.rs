use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::RawSeries;
use crate::error::{Error, Result};

/// Generator settings for [`synth_jump_series`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub length: usize,
    pub channels: usize,
    pub jump_count: usize,
    /// Shift size in units of each channel's periodic-component std.
    pub jump_scale: f64,
    /// Gaussian noise std, in the same units.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            length: 4000,
            channels: 3,
            jump_count: 12,
            jump_scale: 3.0,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// One level shift: from `time` on, channel `c` moves by `shifts[c]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: usize,
    pub shifts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSeries {
    pub series: RawSeries,
    pub jumps: Vec<Jump>,
}

impl SynthSeries {
    pub fn jump_times(&self) -> Vec<usize> {
        self.jumps.iter().map(|j| j.time).collect()
    }
}

// independent streams so that turning one ingredient off leaves the others intact
const STREAM_SHAPE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_JUMPS: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Linear trend + two sinusoids + Gaussian noise + step shifts.
///
/// Jump times are stratified, one drawn uniformly inside each of `jump_count`
/// equal segments (never at row 0), so shifts are spread over the series.
pub fn synth_jump_series(cfg: &SynthConfig) -> Result<SynthSeries> {
    let (t_len, d) = (cfg.length, cfg.channels);
    if t_len < 64 {
        return Err(Error::Config(format!("synthetic length {t_len} must be ≥ 64")));
    }
    if d == 0 {
        return Err(Error::Config("synthetic series needs ≥ 1 channel".into()));
    }
    if !(cfg.jump_scale >= 0.0 && cfg.noise >= 0.0) {
        return Err(Error::Config("jump_scale and noise must be ≥ 0".into()));
    }
    if cfg.jump_count * 2 > t_len {
        return Err(Error::Config(format!("{} jumps do not fit in {t_len} rows", cfg.jump_count)));
    }

    let mut shape_rng = stream(cfg.seed, STREAM_SHAPE);
    struct Shape {
        slope: f64,
        amps: [f64; 2],
        periods: [f64; 2],
        phases: [f64; 2],
    }
    let shapes: Vec<Shape> = (0..d)
        .map(|_| Shape {
            slope: shape_rng.random_range(-1.0..1.0) / t_len as f64,
            amps: [shape_rng.random_range(0.5..1.5), shape_rng.random_range(0.2..0.8)],
            periods: [shape_rng.random_range(20.0..40.0), shape_rng.random_range(80.0..200.0)],
            phases: [
                shape_rng.random_range(0.0..std::f64::consts::TAU),
                shape_rng.random_range(0.0..std::f64::consts::TAU),
            ],
        })
        .collect();
    // std of the periodic part: sqrt(Σ a²/2)
    let sigma: Vec<f64> = shapes
        .iter()
        .map(|s| ((s.amps[0].powi(2) + s.amps[1].powi(2)) / 2.0).sqrt())
        .collect();

    let mut jump_rng = stream(cfg.seed, STREAM_JUMPS);
    let mut jumps = Vec::with_capacity(cfg.jump_count);
    for k in 0..cfg.jump_count {
        let lo = (k * t_len / cfg.jump_count).max(1);
        let hi = (k + 1) * t_len / cfg.jump_count;
        let time = jump_rng.random_range(lo..hi);
        let shifts = sigma
            .iter()
            .map(|&s| {
                let sign = if jump_rng.random_bool(0.5) { 1.0 } else { -1.0 };
                sign * cfg.jump_scale * s * jump_rng.random_range(0.75..1.25)
            })
            .collect();
        jumps.push(Jump { time, shifts });
    }

    let mut noise_rng = stream(cfg.seed, STREAM_NOISE);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::with_capacity(t_len * d);
    let mut level = vec![0.0; d];
    let mut next = 0;
    for t in 0..t_len {
        while next < jumps.len() && jumps[next].time == t {
            for (l, s) in level.iter_mut().zip(&jumps[next].shifts) {
                *l += s;
            }
            next += 1;
        }
        for (c, s) in shapes.iter().enumerate() {
            let tf = t as f64;
            let periodic: f64 = (0..2)
                .map(|i| s.amps[i] * (std::f64::consts::TAU * tf / s.periods[i] + s.phases[i]).sin())
                .sum();
            let eps: f64 = unit.sample(&mut noise_rng);
            values.push(s.slope * tf * sigma[c] * 0.5 + periodic + level[c] + cfg.noise * sigma[c] * eps);
        }
    }
    let names = (0..d).map(|c| format!("ch{c}")).collect();
    Ok(SynthSeries {
        series: RawSeries::new(values, names, None)?,
        jumps,
    })
}
