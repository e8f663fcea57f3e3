pub mod baselines;
pub mod error;
pub mod experiments;
pub mod features;
pub mod fourier;
pub mod net;
pub mod mnist;
pub mod parity;
pub mod plot;
pub mod rng;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
