//! Deterministic discrete-event simulation of live VM migration over a
//! fluid, max-min fair IP network.
//!
//! A run is driven by a scenario file (see [`scenario`]) and produces
//! per-migration, per-session and per-request records plus an optional
//! event trace. Identical input and seed give byte-identical output.

pub mod batch;
pub mod engine;
pub mod migration;
pub mod mobility;
pub mod net;
pub mod report;
pub mod scenario;
pub mod services;
pub mod sim;
pub mod units;

pub use engine::{execute_migration, run_scenario, simulate, FlowClass, FlowSegment, RunError, RunOutput};
pub use migration::{MigrationMode, MigrationOutcome, MigrationPlan, MobilityMode, VmId, VmSpec};
pub use net::{HostId, LinkId, Topology};
pub use scenario::{parse_scenario, Model, Scenario, ScenarioError, Settings};
pub use sim::{EventKind, EventQueue, SimError, SimTime};
