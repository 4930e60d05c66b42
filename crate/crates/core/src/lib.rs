//! Grid-based crowd evacuation simulator in which digital promotional
//! signs switch to exit guidance after an alarm, optionally adapting their
//! message to the crowd density they sense.
//!
//! The crate is organised bottom-up: [`geometry`] (plans, maps, distance
//! fields), [`mall`] (the synthetic default plan), [`population`] (agents),
//! [`signage`] (signs and their controller), [`engine`] (the step loop and
//! metrics), [`scenario`] (config files) and [`sweep`] (parameter sweeps).

pub mod engine;
pub mod geometry;
pub mod mall;
pub mod population;
pub mod scenario;
pub mod signage;
pub mod sweep;

pub use engine::{run, MetricsSeries, SimConfig, SimError, Simulation, StepRecord, World};
pub use geometry::{distance_field, nearest_exit, parse_map, CellKind, Coord, DistanceField, DistanceFields, ExitId, FloorPlan};
pub use mall::{default_plan, generate_synthetic_mall};
pub use population::{Agent, PaMessage};
pub use scenario::{parse_config, ConfigFile, Scenario, SweepSpec};
pub use signage::{ControllerConfig, Mode, Policy, Sign};
pub use sweep::{run_sweep, SweepResult, SweepRow};
