//! Command-line pipeline over the `hybridclf` toolkit:
//! prepare → embed → cluster → train → evaluate → predict.
//!
//! Every stage writes into its own directory under the run's `out_dir`
//! together with a `manifest.json` listing the artifacts and their SHA-256
//! hashes; downstream stages refuse inputs whose hashes no longer match.

pub mod config;
pub mod encode;
pub mod error;
pub mod manifest;
pub mod stages;
pub mod synth;

pub use config::RunConfig;
pub use error::CliError;
