//! Deterministic simulator of radiation-induced configuration-memory upsets
//! in an SRAM-based FPGA, with a fault-injection campaign harness for
//! comparing configuration scrubbing strategies on a fixed-point cruise
//! control workload.
//!
//! The crate is organized bottom-up:
//!
//! - [`fixed`], [`crc`], [`ecc`]: numeric and coding primitives.
//! - [`config_memory`]: frame-organized golden/live bit matrices with
//!   incremental difference tracking.
//! - [`fault`]: upset models (single-bit, adjacent-pair, multi-cell) and
//!   deterministic fault-plan generation, including flux-modulated Poisson
//!   arrivals.
//! - [`dut`]: the protected module — a saturating Q16.16 PI(D) cruise
//!   controller with a first-order plant and a double-precision reference
//!   twin.
//! - [`sensitivity`]: mapping from flipped configuration cells to behavioral
//!   corruptions of the controller.
//! - [`environment`], [`predictor`]: sensor traces and the hazard-score
//!   scheduler behind the failure-prediction scrub policy.
//! - [`scrub`]: the scrub policy runtimes and configuration-port cost model.
//! - [`harness`], [`config`], [`stats`]: campaign execution, root-cause
//!   attribution, TOML campaign files, and reporting statistics.

pub mod cli;
pub mod config;
pub mod config_memory;
pub mod crc;
pub mod dut;
pub mod ecc;
pub mod environment;
pub mod fault;
pub mod fixed;
pub mod harness;
pub mod predictor;
pub mod scrub;
pub mod sensitivity;
pub mod stats;
