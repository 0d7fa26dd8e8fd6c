//! Financial Chaos Index (FCIX) toolkit.
//!
//! Builds a realized-volatility index from an asset-price panel through a
//! positive rank-one approximation of stacked reciprocal pairwise comparison
//! matrices, segments it with kernel change-point detection, fits Modified
//! Lognormal Power-Law (MLP) regime mixtures to its distribution, describes
//! regime switching as a Markov chain, and fits segment-wise elastic-net
//! forecasts of implied volatility.

pub mod chaos_index;
pub mod error;
pub mod fixture;
pub mod market_data;
pub mod mlp;
pub mod optimize;
pub mod pipeline;
pub mod regime_dynamics;
pub mod regime_mixture;
pub mod segmentation;
pub mod special;
pub mod volatility_forecast;

pub use error::{Error, Result};
