pub mod error;
pub mod factor_bias;
pub mod frontier;
pub mod geometry;
pub mod harness;
pub mod market_data;
pub mod signals;
pub mod stochastics;

pub use error::{LabError, Result};
