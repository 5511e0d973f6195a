use serde_json::Value;

use super::{action_text, ActionSpace, AgentError, Goal, Policy, Refiner};
use crate::backend::{CompletionBackend, CompletionRequest};
use crate::memory::{agent_view, MemoryContent};
use crate::model::{AgentAction, AgentId, SimulationStep, Trajectory};
use crate::parser::extract_json;
use crate::schema::{encode_trajectory, step_to_value, WireForm};
use crate::template::Template;

pub const POLICY_TEMPLATE: Template = Template::new("policy", 1, include_str!("../../assets/prompts/policy_v1.txt"));
pub const REFINE_TEMPLATE: Template =
    Template::new("refine_action", 1, include_str!("../../assets/prompts/refine_action_v1.txt"));

/// Reads `{"action_type": ..., "argument": ...}` from a model reply and
/// checks the result against `space`.
pub fn decode_action_object(raw: &str, space: &ActionSpace) -> Result<AgentAction, AgentError> {
    let fail = |reason: &str| AgentError::ActionDecode { raw: raw.to_string(), reason: reason.to_string() };
    let value = extract_json(raw).ok_or_else(|| fail("the reply contains no JSON object"))?;
    let Value::Object(_) = &value else {
        return Err(fail("the reply is not a JSON object"));
    };
    let text = action_text(&value).ok_or_else(|| fail("the object has no action_type"))?;
    space.check(AgentAction::new(text), raw)
}

fn history(traj: &Trajectory, agent: &AgentId) -> Result<String, AgentError> {
    let Some(t) = traj.len().checked_sub(1) else {
        return Ok("(nothing yet)".into());
    };
    let (memory, current) = agent_view(traj, agent, t)?;
    let mut lines = Vec::new();
    for entry in &memory.entries {
        match &entry.content {
            MemoryContent::Observation(o) if !o.is_none => {
                let mut line = format!("[{}] You observed: {}", entry.ordinal, o.external);
                if let Some(m) = &o.mental {
                    line.push_str(&format!(" (you thought: {m})"));
                }
                lines.push(line);
            }
            MemoryContent::Action(a) if !a.is_none => lines.push(format!("[{}] You did: {a}", entry.ordinal)),
            _ => {}
        }
    }
    if !current.is_none {
        lines.push(format!("[{t}] You now observe: {}", current.external));
    }
    Ok(lines.join("\n"))
}

/// A policy that asks a model for the next action, showing it only what
/// the agent itself has observed and done.
pub struct LlmPolicy<B> {
    backend: B,
    agent: AgentId,
    model_id: String,
}

impl<B: CompletionBackend> LlmPolicy<B> {
    pub fn new(backend: B, agent: AgentId, model_id: impl Into<String>) -> Self {
        Self { backend, agent, model_id: model_id.into() }
    }
}

impl<B: CompletionBackend> Policy for LlmPolicy<B> {
    fn agent(&self) -> &AgentId {
        &self.agent
    }

    fn sample_action(&self, space: &ActionSpace, state: &Trajectory, goal: &Goal) -> Result<AgentAction, AgentError> {
        let prompt = POLICY_TEMPLATE
            .render(&[
                ("agent", self.agent.as_str()),
                ("goal", &goal.description),
                ("history", &history(state, &self.agent)?),
                ("format_instructions", &space.format_instructions()),
            ])
            .expect("all slots filled");
        let raw = self.backend.complete(&CompletionRequest::user(self.model_id.clone(), prompt))?;
        decode_action_object(&raw, space)
    }
}

/// Refines the intended action by showing a model the simulated steps.
pub struct LlmRefiner<B> {
    backend: B,
    agent: AgentId,
    model_id: String,
}

impl<B: CompletionBackend> LlmRefiner<B> {
    pub fn new(backend: B, agent: AgentId, model_id: impl Into<String>) -> Self {
        Self { backend, agent, model_id: model_id.into() }
    }

    /// The refinement prompt.
    pub fn prompt(
        &self,
        space: &ActionSpace,
        sim_states: &[SimulationStep],
        original_state: &Trajectory,
        intended: &AgentAction,
    ) -> String {
        let sim = Value::Array(sim_states.iter().map(|s| step_to_value(s, WireForm::StringList)).collect());
        REFINE_TEMPLATE
            .render(&[
                ("agent", self.agent.as_str()),
                ("history", &encode_trajectory(original_state, WireForm::StringList)),
                ("intended_action", &intended.raw),
                ("socialized_context_info", &serde_json::to_string_pretty(&sim).expect("serializable")),
                ("format_instructions", &space.format_instructions()),
            ])
            .expect("all slots filled")
    }
}

impl<B: CompletionBackend> Refiner for LlmRefiner<B> {
    fn refine(
        &self,
        space: &ActionSpace,
        sim_states: &[SimulationStep],
        original_state: &Trajectory,
        _: &Goal,
        intended: &AgentAction,
    ) -> Result<AgentAction, AgentError> {
        let prompt = self.prompt(space, sim_states, original_state, intended);
        let raw = self.backend.complete(&CompletionRequest::user(self.model_id.clone(), prompt))?;
        decode_action_object(&raw, space)
    }
}
