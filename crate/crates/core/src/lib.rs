//! Linear probing hashing and conditioned sums of i.i.d. pairs.

pub mod berry_esseen;
pub mod cli;
pub mod conditional;
pub mod distributions;
pub mod error;
pub mod exact;
pub mod fourier;
pub mod model;
pub mod models;
pub mod normal;
pub mod numeric;
pub mod pmf;
pub mod probing;
pub mod quad;
pub mod rng;
pub mod tails;

pub use error::{Error, Result};
pub use pmf::Pmf;
pub use rng::RngStream;
