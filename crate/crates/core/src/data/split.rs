use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::RawSeries;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Chronological split fractions; boundaries fall at `floor(frac · T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
        }
    }
}

impl SplitSpec {
    /// 60/20/20, the usual convention for the ETT family.
    pub fn ett() -> Self {
        Self {
            train_frac: 0.6,
            val_frac: 0.2,
            test_frac: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train_frac, self.val_frac, self.test_frac];
        if f.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Config(format!("split fractions {f:?} must each lie in (0, 1)")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {f:?} must sum to 1")));
        }
        Ok(())
    }

    /// `(train_end, val_end, T)`.
    pub fn boundaries(&self, t: usize) -> (usize, usize, usize) {
        let a = (self.train_frac * t as f64).floor() as usize;
        let b = ((self.train_frac + self.val_frac) * t as f64).floor() as usize;
        (a, b.min(t), t)
    }
}

/// Per-channel train-split mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Statistics of the first `rows` rows. Zero-variance channels get std 1.
    pub fn fit(series: &RawSeries, rows: usize) -> Result<Self> {
        if rows == 0 || rows > series.len() {
            return Err(Error::Data(format!("cannot fit statistics on {rows} of {} rows", series.len())));
        }
        let d = series.channels();
        let mut mean = vec![0.0; d];
        for t in 0..rows {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += series.value(t, c);
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut std = vec![0.0; d];
        for t in 0..rows {
            for (c, s) in std.iter_mut().enumerate() {
                let e = series.value(t, c) - mean[c];
                *s += e * e;
            }
        }
        for (c, s) in std.iter_mut().enumerate() {
            *s = (*s / rows as f64).sqrt();
            if *s <= f64::EPSILON * mean[c].abs().max(1.0) {
                log::warn!(
                    "channel '{}' is constant over the training rows; using std 1",
                    series.channel_names()[c]
                );
                *s = 1.0;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, values: &mut [f64]) {
        let d = self.mean.len();
        for (i, v) in values.iter_mut().enumerate() {
            *v = (*v - self.mean[i % d]) / self.std[i % d];
        }
    }

    pub fn denormalize(&self, values: &mut [f64]) {
        let d = self.mean.len();
        for (i, v) in values.iter_mut().enumerate() {
            *v = *v * self.std[i % d] + self.mean[i % d];
        }
    }
}

/// Sliding `(x, y)` windows over a shared normalised series.
///
/// Window `i` reads `x` from rows `starts[i] .. starts[i]+L` and `y` from the
/// `L′` rows that follow.
#[derive(Clone, Debug)]
pub struct Dataset {
    series: Arc<Vec<f64>>,
    channels: usize,
    lookback: usize,
    horizon: usize,
    starts: Vec<usize>,
}

impl Dataset {
    /// Windows whose targets lie in `target_rows` and whose inputs start no
    /// earlier than `context_start`, advancing by `stride`.
    pub fn new(
        series: Arc<Vec<f64>>,
        channels: usize,
        lookback: usize,
        horizon: usize,
        context_start: usize,
        target_end: usize,
        stride: usize,
    ) -> Result<Self> {
        if channels == 0 || lookback == 0 || horizon == 0 || stride == 0 {
            return Err(Error::Config("channels, lookback, horizon and stride must be ≥ 1".into()));
        }
        let rows = series.len() / channels;
        if target_end > rows {
            return Err(Error::Data(format!("window range ends at {target_end}, series has {rows} rows")));
        }
        let span = lookback + horizon;
        let last = target_end.checked_sub(span);
        let starts: Vec<usize> = match last {
            Some(last) if last >= context_start => (context_start..=last).step_by(stride).collect(),
            _ => Vec::new(),
        };
        if starts.is_empty() {
            return Err(Error::Data(format!(
                "rows {context_start}..{target_end} are too short for one window of {lookback} + {horizon}"
            )));
        }
        Ok(Self {
            series,
            channels,
            lookback,
            horizon,
            starts,
        })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Row index where window `i`'s input begins.
    pub fn start(&self, i: usize) -> usize {
        self.starts[i]
    }

    /// Row index of window `i`'s first target step.
    pub fn target_start(&self, i: usize) -> usize {
        self.starts[i] + self.lookback
    }

    /// Stacks the listed windows into `x: [B, L, D]` and `y: [B, L′, D]`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        if indices.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let d = self.channels;
        let (l, lp) = (self.lookback, self.horizon);
        let mut x = Vec::with_capacity(indices.len() * l * d);
        let mut y = Vec::with_capacity(indices.len() * lp * d);
        for &i in indices {
            let s = *self
                .starts
                .get(i)
                .ok_or_else(|| Error::Data(format!("window {i} out of range ({} windows)", self.len())))?;
            x.extend_from_slice(&self.series[s * d..(s + l) * d]);
            y.extend_from_slice(&self.series[(s + l) * d..(s + l + lp) * d]);
        }
        let b = indices.len();
        Ok((Tensor::new([b, l, d], x)?, Tensor::new([b, lp, d], y)?))
    }

    /// Consecutive batches in window order; the last may be short.
    pub fn sequential_batches(&self, batch_size: usize) -> Vec<Vec<usize>> {
        let ids: Vec<usize> = (0..self.len()).collect();
        ids.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
    }
}

/// All stride-`stride` windows of a `T × D` row-major block, as `([L, D], [L′, D])`.
pub fn windows(values: &[f64], channels: usize, lookback: usize, horizon: usize, stride: usize) -> Result<Vec<(Tensor, Tensor)>> {
    if channels == 0 || !values.len().is_multiple_of(channels) {
        return Err(Error::Data(format!("{} values are not rows of {channels} channels", values.len())));
    }
    let rows = values.len() / channels;
    if rows < lookback + horizon {
        return Err(Error::Data(format!(
            "{rows} rows are fewer than lookback {lookback} + horizon {horizon}"
        )));
    }
    let ds = Dataset::new(Arc::new(values.to_vec()), channels, lookback, horizon, 0, rows, stride)?;
    (0..ds.len())
        .map(|i| {
            let (x, y) = ds.batch(&[i])?;
            Ok((x.reshaped([lookback, channels])?, y.reshaped([horizon, channels])?))
        })
        .collect()
}

/// Normalised train/val/test window sets and the statistics behind them.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub stats: NormStats,
    /// `(train_end, val_end, T)` row boundaries.
    pub boundaries: (usize, usize, usize),
    /// The whole series after normalisation, row-major.
    pub normalized: Arc<Vec<f64>>,
}

/// Splits chronologically, fits statistics on the train rows, normalises
/// everything and builds stride-1 windows. Validation and test windows take
/// their lookback from the rows just before their boundary.
pub fn split_and_normalize(series: &RawSeries, spec: &SplitSpec, lookback: usize, horizon: usize) -> Result<SplitData> {
    spec.validate()?;
    let t = series.len();
    let (a, b, end) = spec.boundaries(t);
    let span = lookback + horizon;
    for (name, len) in [("train", a), ("validation", b - a), ("test", end - b)] {
        let need = if name == "train" { span } else { horizon };
        if len < need {
            return Err(Error::Data(format!(
                "{name} split has {len} rows, needs at least {need} for lookback {lookback} and horizon {horizon} (series has {t} rows)"
            )));
        }
    }
    if a < lookback {
        return Err(Error::Data(format!("train split has {a} rows, shorter than lookback {lookback}")));
    }
    let stats = NormStats::fit(series, a)?;
    let mut values = series.values().to_vec();
    stats.normalize(&mut values);
    let values = Arc::new(values);
    let d = series.channels();
    let ds = |from: usize, to: usize, name: &str| {
        Dataset::new(values.clone(), d, lookback, horizon, from, to, 1)
            .map_err(|e| Error::Data(format!("{name} split: {e}")))
    };
    Ok(SplitData {
        train: ds(0, a, "train")?,
        val: ds(a - lookback, b, "validation")?,
        test: ds(b - lookback, end, "test")?,
        stats,
        boundaries: (a, b, end),
        normalized: values,
    })
}
