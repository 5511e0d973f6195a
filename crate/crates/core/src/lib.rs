//! Structured social world states.
//!
//! Social narratives are encoded as trajectories of simulation steps
//! (environment state, per-agent observations, per-agent actions). On top of
//! that representation the crate provides memory reconstruction, a
//! validate-and-retry parser over pluggable completion backends, a symbolic
//! belief oracle, social world models, the foresee-and-act lookahead agent
//! and a benchmark harness.

pub mod agent;
pub mod backend;
pub mod bench;
pub mod cli;
pub mod memory;
pub mod model;
pub mod oracle;
pub mod parser;
pub mod schema;
pub mod swm;
pub mod tags;
pub mod template;

pub use memory::{agent_view, reconstruct_memory, AgentMemory, MemoryContent, MemoryEntry, MemoryKind};
pub use model::{
    append_step, AgentAction, AgentId, CoreError, ObservationExpr, ResolvedObservation, SimulationStep, Timestep,
    Trajectory,
};
pub use tags::resolve_tags;
