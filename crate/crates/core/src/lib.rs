//! Folksodriven structure networks and their small-strain deformation analysis.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`ingest`] turns a JSONL stream of tag events into [`model::FDTag`]s,
//! * [`fsn`] links tags by acquaintance into a network and summarizes its topology,
//! * [`embedding`] lays the network out in 3D and builds neighbor stencils,
//! * [`elastica`] computes displacement, strain, stress, energy and dynamics,
//! * [`matching`] aligns two snapshots with an elasticity-aware objective and
//!   suggests tags,
//! * [`metrics`] scores rankings (Kendall τ_b, Spearman ρ, avgDiff),
//! * [`snapshot`] and [`bench`] handle persistence and the latency harness,
//! * [`synth`] generates seeded synthetic tag streams.

pub mod bench;
pub mod elastica;
pub mod embedding;
pub mod fsn;
pub mod ingest;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod snapshot;
pub mod synth;
