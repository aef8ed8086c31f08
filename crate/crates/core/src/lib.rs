//! Non-Markovian qubit dynamics in a Gaussian bath.

pub mod bathspec;
pub mod circuit;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod ode;
pub mod oracle;
pub mod propagator;
pub mod quad;

pub use error::{Error, Result};

/// Library version, echoed into every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
