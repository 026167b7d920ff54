//! Cycle-accurate simulator of a weight-stationary systolic-array DNN
//! accelerator pipeline with a single-event-upset fault-injection engine.
//!
//! The crate is organized bottom-up:
//!
//! - [`quant`]: power-of-two quantization and shift-based requantization
//! - [`golden`]: functional reference model of the pipeline
//! - [`registry`]: enumeration of every flip-flop bit, by register group
//! - [`pipeline`]: the cycle-accurate register-transfer model
//! - [`stimulus`]: constrained-random, DNN-like workloads
//! - [`fault`]: single-upset sampling, execution and classification
//! - [`reliability`]: upset-rate and Poisson arithmetic
//! - [`campaign`]: Monte-Carlo orchestration, aggregation and persistence

pub mod campaign;
pub mod error;
pub mod fault;
pub mod golden;
pub mod pipeline;
pub mod quant;
pub mod registry;
pub mod reliability;
pub mod rng;
pub mod stimulus;

pub use error::{Error, Result};
pub use golden::{golden_forward, ActivationVector, NlfTable, OutputVector, Tile};
pub use pipeline::{Pipeline, PipelineConfig, PipelineState, Schedule};
pub use quant::{Pow2Scale, ShiftAmount};
pub use registry::{build_registry, FlipFlopId, RegGroup, Registry, RegistryCensus};
