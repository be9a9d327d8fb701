//! The forecaster: configuration, parameters, forward pass and checkpoints.

mod checkpoint;
mod config;
mod forward;
mod params;
mod volatility;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use config::{AblationCase, ModelConfig};
pub use forward::{
    activation_bytes, decode, draw_noise, encode, forward, forward_on_tape, project_latent, reparameterize,
    trend_branch, volatility_branch, ForecastOutput, ForecastVars, LatentState, LatentVars,
};
pub use params::{
    check_structure, init_parameters, parameter_count, Affine, BoundParams, LatentParams, ParamSet, Parameters,
    TrendParams, VolatilityParams,
};
pub use volatility::{volatility_mask, VolatilityMask};
