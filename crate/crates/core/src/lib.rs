//! Mode-switching threshold design, closed-form throughput and loss analysis,
//! target-split optimization and Monte Carlo simulation for a source that
//! adapts its rate while a decode-and-forward relay handles retransmissions
//! over Rayleigh block fading.

pub mod analytic;
pub mod channel;
pub mod config;
pub mod design;
pub mod error;
pub mod experiments;
pub mod optimizer;
mod serde_ext;
pub mod sim;

pub use error::{Error, Result};
