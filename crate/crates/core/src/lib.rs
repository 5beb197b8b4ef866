//! Single-image human motion transfer.
//!
//! The pipeline runs in three stages: a pose-conditioned parsing generator,
//! a foreground generator guided by the generated parsing and by appearance
//! flow, and a recurrent fusion network that blends each foreground into
//! the background. This crate also provides the data preparation steps, the
//! training loops, a Fréchet video distance evaluator and the `motionflow` CLI.

pub mod error;
pub mod flow;
pub mod foreground;
pub mod fusion;
pub mod fvd;
pub mod nn;
pub mod parsing;
pub mod pipeline;
pub mod pose;
pub mod region;

pub use error::{Error, Result};
