use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::conv1d_output_len;
use crate::decomp::DEFAULT_ALPHA;
use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Lookback length L.
    pub lookback: usize,
    /// Forecast horizon L′.
    pub horizon: usize,
    /// Number of variates D.
    pub channels: usize,
    /// Latent width H.
    pub latent_dim: usize,
    /// Encoder conv depth N; also the number of decoder linear layers.
    pub conv_layers: usize,
    /// Output channels of each encoder conv layer (length N).
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub conv_padding: usize,
    pub decoder_hidden: usize,
    /// Sliding window w of the volatility mask.
    pub window: usize,
    /// Dynamic threshold fraction τ.
    pub tau: f64,
    pub alpha_x: f64,
    pub alpha_z: f64,
    pub enable_trend: bool,
    pub enable_latent: bool,
    pub enable_volatility: bool,
    /// Seed for parameter initialisation.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 96,
            horizon: 96,
            channels: 1,
            latent_dim: 64,
            conv_layers: 2,
            conv_channels: vec![32, 64],
            conv_kernel: 3,
            conv_stride: 2,
            conv_padding: 1,
            decoder_hidden: 128,
            window: 5,
            tau: 0.2,
            alpha_x: DEFAULT_ALPHA,
            alpha_z: DEFAULT_ALPHA,
            enable_trend: true,
            enable_latent: true,
            enable_volatility: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by gradient checks and quick tests.
    pub fn tiny() -> Self {
        Self {
            lookback: 8,
            horizon: 4,
            channels: 2,
            latent_dim: 4,
            conv_layers: 2,
            conv_channels: vec![3, 4],
            decoder_hidden: 5,
            window: 2,
            ..Self::default()
        }
    }

    pub fn with_case(mut self, case: AblationCase) -> Self {
        let (t, l, v) = case.flags();
        self.enable_trend = t;
        self.enable_latent = l;
        self.enable_volatility = v;
        self
    }

    /// Lengths of the encoder activations after each conv layer.
    pub fn encoder_lengths(&self) -> Result<Vec<usize>> {
        let mut t = self.lookback;
        let mut out = Vec::with_capacity(self.conv_layers);
        for layer in 0..self.conv_layers {
            t = conv1d_output_len(t, self.conv_kernel, self.conv_stride, self.conv_padding).ok_or_else(|| {
                Error::Config(format!(
                    "lookback {} too short for {} conv layers (kernel {}, stride {}, padding {}): layer {layer} output < 1",
                    self.lookback, self.conv_layers, self.conv_kernel, self.conv_stride, self.conv_padding
                ))
            })?;
            out.push(t);
        }
        Ok(out)
    }

    /// Width of the flattened encoder features fed to the μ / log σ² heads.
    pub fn encoder_features(&self) -> Result<usize> {
        let t = *self.encoder_lengths()?.last().unwrap_or(&self.lookback);
        let c = self.conv_channels.last().copied().unwrap_or(self.channels);
        Ok(t * c)
    }

    /// Layer widths of the decoder MLP, `H → hidden … → L′·D`.
    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.latent_dim];
        w.extend(std::iter::repeat_n(self.decoder_hidden, self.conv_layers.saturating_sub(1)));
        w.push(self.horizon * self.channels);
        w
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.lookback == 0 || self.horizon == 0 || self.channels == 0 || self.latent_dim == 0 {
            return bad(format!(
                "lookback, horizon, channels and latent_dim must be ≥ 1 (got {}, {}, {}, {})",
                self.lookback, self.horizon, self.channels, self.latent_dim
            ));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau {} outside (0, 1)", self.tau));
        }
        if self.window == 0 || self.window > self.horizon {
            return bad(format!("window {} must satisfy 1 ≤ w ≤ horizon {}", self.window, self.horizon));
        }
        for (name, a) in [("alpha_x", self.alpha_x), ("alpha_z", self.alpha_z)] {
            if !(a > 0.0 && a <= 1.0) {
                return bad(format!("{name} {a} outside (0, 1]"));
            }
        }
        if !self.enable_trend && !self.enable_latent {
            return bad("at least one of the trend and latent branches must be enabled".into());
        }
        if self.enable_latent {
            if self.conv_layers == 0 || self.conv_channels.len() != self.conv_layers {
                return bad(format!(
                    "conv_channels has {} entries for {} conv layers",
                    self.conv_channels.len(),
                    self.conv_layers
                ));
            }
            if self.conv_channels.contains(&0) || self.conv_kernel == 0 || self.conv_stride == 0 || self.decoder_hidden == 0 {
                return bad("conv channels, kernel, stride and decoder_hidden must be ≥ 1".into());
            }
            self.encoder_lengths()?;
        }
        Ok(())
    }
}

/// The six branch combinations of the ablation study, numbered as in its table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationCase {
    /// ① trend + latent + volatility.
    Full,
    /// ② trend + latent.
    NoVolatility,
    /// ③ trend + volatility. With no latent forecast the mask is empty.
    NoLatent,
    /// ④ trend only (a DLinear-style linear baseline).
    TrendOnly,
    /// ⑤ latent + volatility.
    NoTrend,
    /// ⑥ latent only.
    LatentOnly,
}

impl AblationCase {
    pub const ALL: [AblationCase; 6] = [
        AblationCase::Full,
        AblationCase::NoVolatility,
        AblationCase::NoLatent,
        AblationCase::TrendOnly,
        AblationCase::NoTrend,
        AblationCase::LatentOnly,
    ];

    /// `(trend, latent, volatility)` enable flags.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            AblationCase::Full => (true, true, true),
            AblationCase::NoVolatility => (true, true, false),
            AblationCase::NoLatent => (true, false, true),
            AblationCase::TrendOnly => (true, false, false),
            AblationCase::NoTrend => (false, true, true),
            AblationCase::LatentOnly => (false, true, false),
        }
    }

    pub fn number(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap() + 1
    }

    pub fn slug(self) -> &'static str {
        match self {
            AblationCase::Full => "full",
            AblationCase::NoVolatility => "no-volatility",
            AblationCase::NoLatent => "no-latent",
            AblationCase::TrendOnly => "trend-only",
            AblationCase::NoTrend => "no-trend",
            AblationCase::LatentOnly => "latent-only",
        }
    }
}

impl fmt::Display for AblationCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case{} ({})", self.number(), self.slug())
    }
}
