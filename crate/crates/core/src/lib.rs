//! Volatility-aware variational forecasting.
//!
//! A forecast is the sum of three branches computed from a lookback window:
//! a linear projection of the EMA-decomposed input (trend branch), a
//! variational encoder whose latent vector is decomposed, projected and
//! decoded (latent branch), and a masked, signed emphasis of the gap between
//! the two (volatility branch).

pub mod autodiff;
pub mod data;
pub mod decomp;
pub mod error;
pub mod model;
pub mod train;

pub use error::{Error, Result};
