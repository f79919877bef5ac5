//! Admission control for a video-on-demand server whose ports are completely
//! partitioned into sections.
//!
//! Requests from each client cluster arrive as a Poisson stream, are admitted
//! to a partition with a per-partition probability taken from a column of a
//! control matrix, and overflow to later partitions when their home partition
//! is full. The crate provides the discrete-event simulator ([`engine`]), the
//! admission state machine ([`admission`]), exact and closed-form oracles
//! ([`analytics`]), and result/plot output ([`reporting`]).

pub mod admission;
pub mod analytics;
pub mod engine;
mod error;
pub mod metrics;
pub mod model;
pub mod reporting;
pub mod traffic;

pub use admission::{admit, release, AdmissionOutcome, BlockReason, CascadeMode, OnPolicyReject, Scan};
pub use engine::{run, sweep, HoldingDistribution, PolicySource, Scenario, SweepAxis};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use model::{ControlMatrix, PolicyVector, ServerState};
