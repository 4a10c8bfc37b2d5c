//! Capacity planning for LLM inference GPU fleets.
//!
//! The crate sizes serving pools with an analytical M/G/c model and checks
//! the cheapest candidates with a request-level discrete-event simulator.

pub mod error;
pub mod cli;
pub mod des;
pub mod disagg;
pub mod gpu;
pub mod gridflex;
pub mod optimizer;
pub mod queueing;
pub mod reliability;
pub mod report;
pub mod routing;
pub mod scenario;
pub mod workload;

pub use error::{Error, Result};
pub use gpu::{GpuProfile, PowerCurve, ProfileCatalog};
pub use scenario::{ReportFormat, Scenario};
pub use workload::{LengthSample, SyntheticDist, WorkloadCdf, WorkloadSpec};
