//! Simulator and resource optimizer for adaptive split federated learning
//! over a vehicular edge network.
//!
//! The crate is organised bottom-up:
//!
//! - [`profile`]: cut-layer dependent workloads and payload sizes of the split model.
//! - [`radio`]: broadcast downlink and OFDMA uplink rates.
//! - [`mobility`]: vehicle spawning, standing time and selection probabilities.
//! - [`cost`]: seven-phase delay/energy accounting, parallel round time and baseline schemes.
//! - [`optimizer`]: cut-layer search, SCA power control, KKT bandwidth/frequency
//!   allocation and the block-coordinate-descent driver.
//! - [`split_train`]: a desk-scale split federated training engine.
//! - [`convergence`]: the convergence bound and Monte-Carlo lemma validators.
//! - [`harness`]: scenario configuration, sweeps and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod cost;
pub mod error;
pub mod harness;
pub mod mobility;
pub mod optimizer;
pub mod profile;
pub mod radio;
pub mod seed;
pub mod split_train;

pub use error::{Error, Result};
