//! Discrete-event simulator for mobile ad hoc networks running the AOMR-LM
//! energy-aware multipath routing protocol, with AOMDV as a baseline.
//!
//! The crate is organised bottom-up:
//!
//! * [`energy`] holds the residual-energy arithmetic and node classification.
//! * [`engine`] is the deterministic event queue and seeded random streams.
//! * [`world`] models positions, random waypoint mobility, unit-disk links,
//!   batteries and a contention-free MAC.
//! * [`protocol`] is the per-node routing state machine.
//! * [`traffic`] generates CBR traffic and reduces the run metrics.
//! * [`sim`] wires the pieces together into a single run.
//! * [`scenario`] and [`experiment`] load configuration and orchestrate
//!   seed sweeps, summaries and plot-ready curves.

pub mod audit;
pub mod energy;
pub mod engine;
pub mod experiment;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod traffic;
pub mod world;

mod error;

pub use error::Error;

/// Node identifier; nodes are numbered densely from zero.
pub type NodeId = u32;

/// Simulation time in seconds.
pub type SimTime = f64;
