//! Deterministic simulation of delay-aware synchronization across distributed
//! infrastructure sensor nodes, and the cooperative BEV fusion pipeline those
//! nodes feed.
//!
//! The crate is organised bottom-up:
//!
//! * [`sim`]: anchor-triggered nodes, latency mixture, event log.
//! * [`estimator`]: sliding-window per-node delay estimate.
//! * [`sync`]: adaptive fusion window, normal/late classification, metrics.
//! * [`fusion`], [`tracking`]: cross-node fusion, late post-fusion, tracker.
//! * [`geometry`]: oriented IoU, NMS, drivable-area test, bandwidth.
//! * [`scenario`], [`eval`]: synthetic scenes, early/late fusion, mAP.
//! * [`experiments`]: reproducible experiment runner writing CSV artifacts.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csv;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod experiments;
pub mod fusion;
pub mod geometry;
pub mod interchange;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod sync;
pub mod tracking;

pub use error::{Error, Result};
