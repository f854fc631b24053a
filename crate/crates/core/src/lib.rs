//! Pseudo-spectral Harmonic Ricci Flow on the flat torus.

pub mod collar;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod monitor;
pub mod scenario;
pub mod snapshot;
pub mod splitting;
pub mod target;

pub use error::{Error, Result};
pub use flow::{AlphaSchedule, FlowState, RunConfig, RunOutcome};
pub use geometry::FlatMetric;
pub use grid::{Grid, ScalarField, Spectrum};
pub use monitor::{check_invariants, InvariantCheck, MonitorRow};
pub use splitting::{HorizontalVelocity, SymTensorField, VectorField};
pub use target::{MapField, Target};
pub use scenario::{build_initial, parse_config, ScenarioConfig};
