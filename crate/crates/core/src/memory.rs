//! Per-agent memory: the agent's past observations and actions.

use serde::{Deserialize, Serialize};

use crate::model::{AgentAction, AgentId, CoreError, ResolvedObservation, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    Observation,
    Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryContent {
    Observation(ResolvedObservation),
    Action(AgentAction),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub ordinal: usize,
    pub content: MemoryContent,
}

impl MemoryEntry {
    pub fn kind(&self) -> MemoryKind {
        match self.content {
            MemoryContent::Observation(_) => MemoryKind::Observation,
            MemoryContent::Action(_) => MemoryKind::Action,
        }
    }
}

/// Memory of `owner` before timestep `upto`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMemory {
    pub owner: AgentId,
    pub upto: usize,
    pub entries: Vec<MemoryEntry>,
}

impl AgentMemory {
    /// Resolved observations in ordinal order.
    pub fn observations(&self) -> impl Iterator<Item = (usize, &ResolvedObservation)> {
        self.entries.iter().filter_map(|e| match &e.content {
            MemoryContent::Observation(o) => Some((e.ordinal, o)),
            MemoryContent::Action(_) => None,
        })
    }

    pub fn actions(&self) -> impl Iterator<Item = (usize, &AgentAction)> {
        self.entries.iter().filter_map(|e| match &e.content {
            MemoryContent::Action(a) => Some((e.ordinal, a)),
            MemoryContent::Observation(_) => None,
        })
    }
}

/// Reconstructs the memory of `agent` at timestep `t`: for every ordinal
/// before `t`, the resolved observation followed by the action. Null
/// records are kept, so the memory always holds `2 * t` entries.
pub fn reconstruct_memory(traj: &Trajectory, agent: &AgentId, t: usize) -> Result<AgentMemory, CoreError> {
    if !traj.contains_agent(agent) {
        return Err(CoreError::UnknownAgent(agent.to_string()));
    }
    if t > traj.len() {
        return Err(CoreError::OrdinalOutOfRange {
            ordinal: t,
            len: traj.len(),
        });
    }
    let mut entries = Vec::with_capacity(2 * t);
    for ordinal in 0..t {
        let observation = traj.resolve_observation(ordinal, agent)?;
        entries.push(MemoryEntry {
            ordinal,
            content: MemoryContent::Observation(observation),
        });
        let action = traj.steps()[ordinal].actions[agent].clone();
        entries.push(MemoryEntry {
            ordinal,
            content: MemoryContent::Action(action),
        });
    }
    Ok(AgentMemory {
        owner: agent.clone(),
        upto: t,
        entries,
    })
}

/// The pair a policy consumes at timestep `t`: memory before `t` and the
/// current observation.
pub fn agent_view(traj: &Trajectory, agent: &AgentId, t: usize) -> Result<(AgentMemory, ResolvedObservation), CoreError> {
    if t >= traj.len() {
        if !traj.contains_agent(agent) {
            return Err(CoreError::UnknownAgent(agent.to_string()));
        }
        return Err(CoreError::OrdinalOutOfRange {
            ordinal: t,
            len: traj.len(),
        });
    }
    let memory = reconstruct_memory(traj, agent, t)?;
    let current = traj.resolve_observation(t, agent)?;
    Ok((memory, current))
}
