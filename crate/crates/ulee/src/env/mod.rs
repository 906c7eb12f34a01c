//! Procedurally generated, partially observable rule/goal grid worlds
//! with deterministic stepping.

pub mod kinds;
pub mod pool;
pub mod rules;
pub mod spec;
pub mod world;

pub use kinds::KindTable;
pub use rules::{Action, ExtrinsicGoal, Near, Orientation, Rule, NUM_ACTIONS};
pub use spec::{sample_env_spec, BenchConfig, BenchKind, EnvSpec, Layout, Placement};
pub use world::{
    advance, goal_satisfied, observe, reset_lifetime, step, Observation, StepResult, WorldState,
    OBS_CELLS,
};
