//! Experiment harness: configuration, parallel Monte Carlo runners, fits,
//! independent oracles and result writers behind the `postconc` binary.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod oracle;
pub mod output;
pub mod selfcheck;

pub use error::{HarnessError, Result};
