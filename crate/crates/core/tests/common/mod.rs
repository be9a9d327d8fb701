//! Independent oracles shared by the integration and acceptance suites.
//!
//! Nothing here calls back into the library's own gradient or mask code:
//! gradients are checked against central differences, masks against a
//! direct loop over the definition, KL against sampling.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use timecatcher_core::autodiff::{Tape, Tensor, Var};
use timecatcher_core::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    /// Coordinates near a kink or a mask/direction flip, left out.
    pub skipped: usize,
    pub max_rel: f64,
    pub worst: String,
}

impl GradReport {
    pub fn merge(&mut self, other: GradReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        if other.max_rel > self.max_rel {
            self.max_rel = other.max_rel;
            self.worst = other.worst;
        }
    }
}

pub const FD_STEP: f64 = 1e-6;
/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

/// Compares reverse-mode gradients of the scalar `f(inputs)` with central
/// differences, coordinate by coordinate.
///
/// A coordinate is treated as sitting in a kink neighbourhood, and skipped,
/// when the forward and backward one-sided slopes disagree by more than a
/// smooth function could over a step of `FD_STEP`.
pub fn check_gradients(label: &str, inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> GradReport {
    let eval = |vals: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.constant(t.clone()).unwrap()).collect();
        let out = f(&mut tape, &vars).unwrap();
        tape.value(out).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone()).unwrap()).collect();
    let out = f(&mut tape, &vars).unwrap();
    tape.backward(out).unwrap();
    let base = tape.value(out).item().unwrap();

    let mut report = GradReport::default();
    let mut vals = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape().to_vec()));
        for i in 0..input.len() {
            let x0 = input.data()[i];
            vals[k].data_mut()[i] = x0 + FD_STEP;
            let up = eval(&vals);
            vals[k].data_mut()[i] = x0 - FD_STEP;
            let down = eval(&vals);
            vals[k].data_mut()[i] = x0;
            let fwd = (up - base) / FD_STEP;
            let bwd = (base - down) / FD_STEP;
            let numeric = (up - down) / (2.0 * FD_STEP);
            if (fwd - bwd).abs() > 1e-3 * numeric.abs().max(1.0) {
                report.skipped += 1;
                continue;
            }
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel {
                report.max_rel = rel;
                report.worst = format!("{label}: input {k} coord {i}: analytic {a:e}, numeric {numeric:e}");
            }
        }
    }
    report
}

/// `Σ r ⊙ v` with fixed pseudo-random weights `r`, turning any output into a scalar.
pub fn project(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let mut g = rng(seed);
    let r = random_tensor(&mut g, tape.shape(v), -1.0, 1.0);
    let rv = tape.constant(r)?;
    let p = tape.mul(v, rv)?;
    tape.sum_all(p)
}

/// Straight-line evaluation of the volatility mask definition on one channel.
/// Returns `(amplitude, direction, mask)` per horizon step.
pub fn brute_force_mask(input: &[f64], forecast: &[f64], window: usize, tau: f64) -> Vec<(f64, f64, f64)> {
    let range = input.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - input.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    for t in 0..forecast.len() {
        let start = (t + 1).saturating_sub(window);
        let seg = &forecast[start..=t];
        let hi = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = seg.iter().cloned().fold(f64::INFINITY, f64::min);
        let amp = hi - lo;
        let d = forecast[t] - forecast[start];
        let dir = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        out.push((amp, dir, if amp >= tau * range { 1.0 } else { 0.0 }));
    }
    out
}

/// Monte-Carlo estimate of `E_q[log q(z) − log p(z)]` averaged over rows,
/// with `q = N(mu, exp(logvar))` and `p = N(0, I)`.
pub fn monte_carlo_kl(mu: &[f64], logvar: &[f64], rows: usize, samples: usize, seed: u64) -> f64 {
    let h = mu.len() / rows;
    let mut g = rng(seed);
    let mut total = 0.0;
    for _ in 0..samples {
        for r in 0..rows {
            for j in 0..h {
                let (m, lv) = (mu[r * h + j], logvar[r * h + j]);
                let s = (0.5 * lv).exp();
                let e: f64 = StandardNormal.sample(&mut g);
                let z = m + s * e;
                // log q − log p, the 2π terms cancel
                let log_q = -0.5 * lv - 0.5 * e * e;
                let log_p = -0.5 * z * z;
                total += log_q - log_p;
            }
        }
    }
    total / (samples * rows) as f64
}

/// Naive EMA trend, for cross-checking decompositions.
pub fn naive_ema(x: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for (t, &v) in x.iter().enumerate() {
        out.push(if t == 0 { v } else { alpha * v + (1.0 - alpha) * out[t - 1] });
    }
    out
}

pub mod suites;
