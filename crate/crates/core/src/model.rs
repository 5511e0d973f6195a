//! Domain model for structured social world states: agents, simulation
//! steps and trajectories.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tags;

/// Errors raised by the domain model, tag resolution and memory
/// reconstruction.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoreError {
    #[error("invalid agent name {name:?}: {reason}")]
    InvalidAgentId { name: String, reason: &'static str },
    #[error("timestep text is empty")]
    EmptyTimestep,
    #[error("state text is empty")]
    EmptyState,
    #[error("agent {agent} uses a last-action tag at ordinal 0, where no previous step exists")]
    TagAtOrigin { agent: String },
    #[error("agent index {index} is out of range: the trajectory has {count} agents")]
    UnknownAgentIndex { index: usize, count: usize },
    #[error("malformed tag in {text:?}: {reason}")]
    MalformedTag { text: String, reason: String },
    #[error("unknown agent {0:?}")]
    UnknownAgent(String),
    #[error("agent set mismatch: expected [{expected}], found [{found}]")]
    AgentSetMismatch { expected: String, found: String },
    #[error("duplicate agent {0:?}")]
    DuplicateAgent(String),
    #[error("ordinal {ordinal} is out of range for a trajectory of {len} steps")]
    OrdinalOutOfRange { ordinal: usize, len: usize },
}

/// Case-insensitive, trimmed comparison against the `none` sentinel.
pub fn is_none_text(text: &str) -> bool {
    text.trim().eq_ignore_ascii_case("none")
}

/// Name of a social agent.
///
/// Names are trimmed and case-preserved. They may not be empty, may not be
/// the `none` sentinel and may not contain `": "`, which separates the agent
/// from its payload in the list wire form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgentId(String);

impl AgentId {
    pub fn new(name: impl AsRef<str>) -> Result<Self, CoreError> {
        let trimmed = name.as_ref().trim();
        let invalid = |reason| CoreError::InvalidAgentId {
            name: name.as_ref().to_string(),
            reason,
        };
        if trimmed.is_empty() {
            return Err(invalid("name is empty"));
        }
        if is_none_text(trimmed) {
            return Err(invalid("'none' is reserved"));
        }
        if trimmed.contains(": ") {
            return Err(invalid("name contains ': '"));
        }
        if trimmed.chars().any(|c| c.is_control()) {
            return Err(invalid("name contains control characters"));
        }
        Ok(Self(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for AgentId {
    type Error = CoreError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<AgentId> for String {
    fn from(value: AgentId) -> Self {
        value.0
    }
}

impl AsRef<str> for AgentId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Timestep of a simulation step. `raw` is display text (an integer or a
/// description); `ordinal` is the zero-based position in the trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Timestep {
    pub raw: String,
    pub ordinal: usize,
}

impl Timestep {
    pub fn new(raw: impl Into<String>, ordinal: usize) -> Result<Self, CoreError> {
        let raw = raw.into();
        if raw.trim().is_empty() {
            return Err(CoreError::EmptyTimestep);
        }
        Ok(Self { raw, ordinal })
    }
}

/// Raw observation text, possibly containing special tags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationExpr {
    pub raw: String,
}

impl ObservationExpr {
    pub fn new(raw: impl Into<String>) -> Self {
        Self { raw: raw.into() }
    }

    pub fn none() -> Self {
        Self::new("none")
    }

    pub fn is_none(&self) -> bool {
        is_none_text(&self.raw)
    }

    /// Checks the tag grammar without resolving anything.
    pub fn check_tags(&self) -> Result<(), CoreError> {
        if self.is_none() {
            return Ok(());
        }
        tags::parse_segments(&self.raw).map(|_| ())
    }
}

/// An observation with every special tag substituted. `external` is the
/// tag-free perceived text; `mental` carries introspective content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResolvedObservation {
    pub external: String,
    pub mental: Option<String>,
    pub is_none: bool,
}

impl ResolvedObservation {
    pub fn none() -> Self {
        Self {
            external: String::new(),
            mental: None,
            is_none: true,
        }
    }
}

/// An agent's action at one timestep.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct AgentAction {
    pub raw: String,
    pub is_none: bool,
}

impl AgentAction {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let is_none = is_none_text(&raw);
        Self { raw, is_none }
    }

    pub fn none() -> Self {
        Self::new("none")
    }
}

impl From<String> for AgentAction {
    fn from(value: String) -> Self {
        Self::new(value)
    }
}

impl From<&str> for AgentAction {
    fn from(value: &str) -> Self {
        Self::new(value)
    }
}

impl From<AgentAction> for String {
    fn from(value: AgentAction) -> Self {
        value.raw
    }
}

impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// One timestep of the social world: the pre-action environment state,
/// each agent's observation of it and each agent's action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationStep {
    pub timestep: Timestep,
    pub state: String,
    pub observations: IndexMap<AgentId, ObservationExpr>,
    pub actions: IndexMap<AgentId, AgentAction>,
}

fn join_names<'a>(names: impl Iterator<Item = &'a AgentId>) -> String {
    names.map(AgentId::as_str).collect::<Vec<_>>().join(", ")
}

impl SimulationStep {
    /// Builds a step, checking that observations and actions cover the same
    /// agents. Actions are reordered to follow the observation order.
    pub fn new(
        timestep: Timestep,
        state: impl Into<String>,
        observations: IndexMap<AgentId, ObservationExpr>,
        mut actions: IndexMap<AgentId, AgentAction>,
    ) -> Result<Self, CoreError> {
        let state = state.into();
        if state.trim().is_empty() {
            return Err(CoreError::EmptyState);
        }
        if observations.len() != actions.len()
            || observations.keys().any(|k| !actions.contains_key(k))
        {
            return Err(CoreError::AgentSetMismatch {
                expected: join_names(observations.keys()),
                found: join_names(actions.keys()),
            });
        }
        let ordered = observations
            .keys()
            .map(|k| {
                let action = actions.shift_remove(k).expect("key sets checked above");
                (k.clone(), action)
            })
            .collect();
        Ok(Self {
            timestep,
            state,
            observations,
            actions: ordered,
        })
    }

    /// Agents of this step, in observation order.
    pub fn agents(&self) -> impl Iterator<Item = &AgentId> {
        self.observations.keys()
    }

    fn reordered(mut self, agents: &[AgentId]) -> Result<Self, CoreError> {
        let same_set = self.observations.len() == agents.len()
            && agents.iter().all(|a| self.observations.contains_key(a));
        if !same_set {
            return Err(CoreError::AgentSetMismatch {
                expected: join_names(agents.iter()),
                found: join_names(self.observations.keys()),
            });
        }
        let mut observations = IndexMap::with_capacity(agents.len());
        let mut actions = IndexMap::with_capacity(agents.len());
        for agent in agents {
            let (k, v) = self.observations.shift_remove_entry(agent).expect("checked");
            observations.insert(k, v);
            let (k, v) = self.actions.shift_remove_entry(agent).expect("checked");
            actions.insert(k, v);
        }
        self.observations = observations;
        self.actions = actions;
        Ok(self)
    }
}

/// An ordered sequence of simulation steps over a fixed agent set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    agents: Vec<AgentId>,
    steps: Vec<SimulationStep>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl Trajectory {
    /// An empty trajectory over the given agents.
    pub fn new(agents: Vec<AgentId>) -> Result<Self, CoreError> {
        for (i, a) in agents.iter().enumerate() {
            if agents[..i].contains(a) {
                return Err(CoreError::DuplicateAgent(a.to_string()));
            }
        }
        Ok(Self {
            agents,
            steps: Vec::new(),
            metadata: Default::default(),
        })
    }

    /// Builds a trajectory from steps, normalizing ordinals and per-step
    /// agent order.
    pub fn from_steps(agents: Vec<AgentId>, steps: Vec<SimulationStep>) -> Result<Self, CoreError> {
        let mut traj = Self::new(agents)?;
        for step in steps {
            traj.push_step(step)?;
        }
        Ok(traj)
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn steps(&self) -> &[SimulationStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last_step(&self) -> Option<&SimulationStep> {
        self.steps.last()
    }

    pub fn contains_agent(&self, agent: &AgentId) -> bool {
        self.agents.contains(agent)
    }

    pub fn agent(&self, name: &str) -> Option<&AgentId> {
        self.agents.iter().find(|a| a.as_str() == name)
    }

    pub fn with_metadata(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    /// Appends a step in place. An agentless empty trajectory adopts the
    /// step's agents.
    pub fn push_step(&mut self, step: SimulationStep) -> Result<(), CoreError> {
        if self.agents.is_empty() && self.steps.is_empty() {
            self.agents = step.agents().cloned().collect();
        }
        let mut step = step.reordered(&self.agents)?;
        step.timestep.ordinal = self.steps.len();
        self.steps.push(step);
        Ok(())
    }

    /// Returns a new trajectory with `step` appended; `self` is untouched.
    pub fn appended(&self, step: SimulationStep) -> Result<Self, CoreError> {
        let mut next = self.clone();
        next.push_step(step)?;
        Ok(next)
    }

    /// Returns a copy whose last step carries the given actions; agents not
    /// named keep their recorded action.
    pub fn with_last_actions(&self, actions: &IndexMap<AgentId, AgentAction>) -> Result<Self, CoreError> {
        let mut next = self.clone();
        let last = next.steps.last_mut().ok_or(CoreError::OrdinalOutOfRange { ordinal: 0, len: 0 })?;
        for (agent, action) in actions {
            match last.actions.get_mut(agent) {
                Some(slot) => *slot = action.clone(),
                None => return Err(CoreError::UnknownAgent(agent.to_string())),
            }
        }
        Ok(next)
    }

    /// The state text of step `ordinal` with any last-action tags
    /// substituted.
    pub fn resolved_state(&self, ordinal: usize) -> Result<String, CoreError> {
        let step = self.step(ordinal)?;
        tags::resolve_state(step, &self.steps[..ordinal], &self.agents)
    }

    /// Tag-resolved observation of `agent` at step `ordinal`.
    pub fn resolve_observation(&self, ordinal: usize, agent: &AgentId) -> Result<ResolvedObservation, CoreError> {
        let step = self.step(ordinal)?;
        tags::resolve_tags(step, &self.steps[..ordinal], &self.agents, agent)
    }

    fn step(&self, ordinal: usize) -> Result<&SimulationStep, CoreError> {
        self.steps.get(ordinal).ok_or(CoreError::OrdinalOutOfRange {
            ordinal,
            len: self.steps.len(),
        })
    }
}

/// Appends `step` to `traj`, returning a new trajectory.
pub fn append_step(traj: &Trajectory, step: SimulationStep) -> Result<Trajectory, CoreError> {
    traj.appended(step)
}
