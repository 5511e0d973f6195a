//! A symbolic social-world simulator with perception rules, nested belief
//! tracking, narrative rendering and seeded scenario generation.
//!
//! Perception follows the classic false-belief task rules: agents perceive
//! everything that happens in their current location and nothing elsewhere,
//! public claims are heard by everyone, private claims only by the
//! recipient, and what an agent says never changes what it believes.

mod generate;
mod narrative;
mod questions;
mod sim;
mod trajectory;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AgentId;

pub use generate::{generate_scenario, GenParams};
pub use narrative::{parse_scenario_narrative, render_narrative, render_narrative_with, RenderStyle, TemplateMismatchError};
pub use questions::{
    answer_from_trajectory, belief_questions, parse_belief_question, read_mental_beliefs, BeliefQuestion,
    UNKNOWN_ANSWER,
};
pub use sim::{all_chains, query_belief, simulate, simulate_with_order, BeliefStore, Chain, WorldSnapshot, MAX_ORDER};
pub use trajectory::{belief_sentence, ground_truth_trajectory, scene_text, state_text};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("event {index} is invalid: {reason}")]
    InvalidEvent { index: usize, reason: String },
    #[error("unknown entity '{0}'")]
    UnknownEntity(String),
    #[error("belief chain of order {order} exceeds the supported maximum {max}")]
    ChainTooLong { order: usize, max: usize },
    #[error("time {t} is out of range for {len} snapshots")]
    TimeOutOfRange { t: usize, len: usize },
    #[error("infeasible generation parameters: {0}")]
    InfeasibleParams(String),
}

/// What happens in one event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Enter { location: String },
    Exit { location: String },
    MoveObject { object: String, to: String },
    /// A statement heard by every agent that the object is in a container.
    PublicClaim { object: String, container: String },
    /// The same statement, heard only by `recipient`.
    PrivateTell { recipient: AgentId, object: String, container: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub actor: AgentId,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn new(actor: &AgentId, kind: EventKind) -> Self {
        Self { actor: actor.clone(), kind }
    }

    /// The event as an action phrase of its actor, e.g.
    /// "moved the marble to the box".
    pub fn action_text(&self) -> String {
        match &self.kind {
            EventKind::Enter { location } => format!("entered the {location}"),
            EventKind::Exit { location } => format!("exited the {location}"),
            EventKind::MoveObject { object, to } => format!("moved the {object} to the {to}"),
            EventKind::PublicClaim { object, container } => {
                format!("said publicly that the {object} is in the {container}")
            }
            EventKind::PrivateTell { recipient, object, container } => {
                format!("privately told {recipient} that the {object} is in the {container}")
            }
        }
    }
}

/// Ground truth for one story: places, containers, objects, agents and the
/// events that happen to them.
///
/// Agents map to their initial location; `None` means outside every
/// location. Containers never change location, so an object's location is
/// fixed by its initial container.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OracleScenario {
    pub locations: Vec<String>,
    pub containers: IndexMap<String, String>,
    pub objects: IndexMap<String, String>,
    pub agents: IndexMap<AgentId, Option<String>>,
    #[serde(default)]
    pub events: Vec<Event>,
}

/// Entity names are single words so rendered sentences stay unambiguous.
fn check_word(kind: &str, name: &str) -> Result<(), OracleError> {
    let ok = !name.is_empty()
        && name.chars().next().is_some_and(|c| c.is_alphabetic())
        && name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(OracleError::InvalidScenario(format!("{kind} name '{name}' must be a single word")))
    }
}

impl OracleScenario {
    /// Checks the static invariants: every reference resolves and every name
    /// is used once.
    pub fn validate(&self) -> Result<(), OracleError> {
        let invalid = |m: String| Err(OracleError::InvalidScenario(m));
        if self.locations.is_empty() {
            return invalid("a scenario needs at least one location".into());
        }
        let mut seen = std::collections::HashSet::new();
        let names = self
            .locations
            .iter()
            .map(|n| ("location", n.as_str()))
            .chain(self.containers.keys().map(|n| ("container", n.as_str())))
            .chain(self.objects.keys().map(|n| ("object", n.as_str())))
            .chain(self.agents.keys().map(|n| ("agent", n.as_str())));
        for (kind, name) in names {
            check_word(kind, name)?;
            if !seen.insert(name.to_lowercase()) {
                return invalid(format!("name '{name}' is used more than once"));
            }
        }
        for (container, location) in &self.containers {
            if !self.locations.contains(location) {
                return invalid(format!("container '{container}' is in unknown location '{location}'"));
            }
        }
        for (object, container) in &self.objects {
            if !self.containers.contains_key(container) {
                return invalid(format!("object '{object}' is in unknown container '{container}'"));
            }
        }
        for (agent, location) in &self.agents {
            if let Some(l) = location {
                if !self.locations.contains(l) {
                    return invalid(format!("agent '{agent}' starts in unknown location '{l}'"));
                }
            }
        }
        Ok(())
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.agents.keys().cloned().collect()
    }

    pub fn container_location(&self, container: &str) -> Option<&str> {
        self.containers.get(container).map(String::as_str)
    }

    /// Location of an object; constant over a scenario.
    pub fn object_location(&self, object: &str) -> Option<&str> {
        self.objects.get(object).and_then(|c| self.container_location(c))
    }

    /// Containers in `location`, in declaration order.
    pub fn containers_in<'a>(&'a self, location: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.containers
            .iter()
            .filter(move |(_, l)| l.as_str() == location)
            .map(|(c, _)| c.as_str())
    }

    pub fn with_events(mut self, events: Vec<Event>) -> Self {
        self.events = events;
        self
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn event_json_shape() {
        let e = Event::new(&a("Anne"), EventKind::MoveObject { object: "marble".into(), to: "box".into() });
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v, serde_json::json!({"actor": "Anne", "kind": "move_object", "object": "marble", "to": "box"}));
        assert_eq!(serde_json::from_value::<Event>(v).unwrap(), e);
        assert_eq!(e.action_text(), "moved the marble to the box");
    }

    #[test]
    fn scenario_round_trips_and_validates() {
        let s = sally_anne();
        s.validate().unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<OracleScenario>(&text).unwrap(), s);
        assert_eq!(s.object_location("marble"), Some("room"));
        assert_eq!(s.containers_in("room").collect::<Vec<_>>(), ["basket", "box"]);
    }

    #[test]
    fn validation_rejects_bad_references() {
        let mut s = sally_anne();
        s.objects.insert("coin".into(), "drawer".into());
        assert!(matches!(s.validate(), Err(OracleError::InvalidScenario(_))));

        let mut s = sally_anne();
        s.containers.insert("room".into(), "room".into());
        assert!(s.validate().is_err());

        let mut s = sally_anne();
        s.locations.push("back yard".into());
        assert!(s.validate().is_err());
    }
}
