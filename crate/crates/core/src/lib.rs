//! Desk-scale time-domain sky-survey catalog engine.
//!
//! The crate covers the whole path from a survey design to science queries:
//!
//! - [`planner`]: throughput, storage, scan, transfer and hardware-timeline
//!   arithmetic for a petabyte-per-year survey.
//! - [`skygen`]: seeded synthetic surveys with ground truth (static,
//!   periodic, transient and moving objects).
//! - [`sphere`]: unit-vector geometry, kd-tree and declination-zone
//!   indexing, cone and convex-polygon search, the neighbors join.
//! - [`store`]: fixed-width partitioned detection store with parallel
//!   sequential scan, zone index and the master/summary cross-match.
//! - [`timedomain`]: light-curve fitting and classification, the streaming
//!   transient trigger and moving-object linking.
//! - [`stats`]: dual-tree angular pair counting, the Landy-Szalay
//!   estimator and kd-tree accelerated Gaussian-mixture EM.
//! - [`cli`]: the `skyvault` command line and the `bench20` query set.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod cli;
pub mod error;
pub mod planner;
pub mod skygen;
pub mod sphere;
pub mod stats;
pub mod store;
pub mod timedomain;
pub mod units;

pub use error::{Error, Result};
