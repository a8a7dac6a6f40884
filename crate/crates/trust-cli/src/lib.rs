//! Command-line pipeline around the explainer core: configuration,
//! synthetic data generation, a perturbation-surrogate baseline, and the
//! timing harness. The `trust` binary is a thin dispatcher over
//! [`commands`].

pub mod baseline;
pub mod bench;
pub mod commands;
pub mod config;
pub mod synth;

pub use config::{Cli, Command, RunConfig};
