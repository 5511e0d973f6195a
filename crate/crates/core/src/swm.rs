//! Social world models: predict what the other agents do next and what the
//! world looks like afterwards, mental states included.

use indexmap::IndexMap;
use thiserror::Error;

use crate::agent::{AgentError, Environment, Policy};
use crate::backend::{BackendError, CompletionBackend, CompletionRequest};
use crate::model::{AgentAction, AgentId, CoreError, SimulationStep, Trajectory};
use crate::parser::extract_json;
use crate::schema::{decode_step, encode_trajectory, form_schema, issues_to_feedback, WireForm};
use crate::template::Template;

pub const PREDICT_ACTIONS_TEMPLATE: Template =
    Template::new("predict_actions", 1, include_str!("../assets/prompts/predict_actions_v1.txt"));
pub const PREDICT_STEP_TEMPLATE: Template =
    Template::new("predict_step", 1, include_str!("../assets/prompts/predict_step_v1.txt"));

#[derive(Debug, Error)]
pub enum SwmError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("could not decode the prediction: {reason}")]
    PredictionDecode { raw: String, reason: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("scripted agent {agent} failed: {reason}")]
    Policy { agent: String, reason: String },
    #[error("transition failed: {0}")]
    Transition(String),
}

/// The world so far, whose point of view to take and, optionally, what
/// that agent does at the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct SwmQuery {
    pub trajectory: Trajectory,
    pub ego: AgentId,
    pub ego_action: Option<AgentAction>,
}

impl SwmQuery {
    pub fn new(trajectory: Trajectory, ego: AgentId, ego_action: Option<AgentAction>) -> Result<Self, SwmError> {
        if trajectory.is_empty() {
            return Err(SwmError::InvalidQuery("the trajectory has no steps".into()));
        }
        if !trajectory.contains_agent(&ego) {
            return Err(SwmError::InvalidQuery(format!("{ego} is not an agent of the trajectory")));
        }
        Ok(Self { trajectory, ego, ego_action })
    }

    fn others(&self) -> impl Iterator<Item = &AgentId> {
        self.trajectory.agents().iter().filter(|a| **a != self.ego)
    }

    fn ego_action_or_none(&self) -> AgentAction {
        self.ego_action.clone().unwrap_or_else(AgentAction::none)
    }

    fn check_others(&self, others: &IndexMap<AgentId, AgentAction>) -> Result<(), SwmError> {
        let expected: Vec<&AgentId> = self.others().collect();
        if others.len() != expected.len() || expected.iter().any(|a| !others.contains_key(*a)) {
            let names: Vec<&str> = others.keys().map(AgentId::as_str).collect();
            return Err(SwmError::InvalidQuery(format!(
                "actions must be given for exactly the agents other than {}, got [{}]",
                self.ego,
                names.join(", ")
            )));
        }
        Ok(())
    }
}

/// The other agents' actions at the last step and the step they lead to.
#[derive(Debug, Clone, PartialEq)]
pub struct NextStepPrediction {
    pub others_actions: IndexMap<AgentId, AgentAction>,
    pub next_step: SimulationStep,
    pub confidence_note: Option<String>,
}

impl NextStepPrediction {
    /// `state` with the predicted and ego actions written into its last
    /// step, followed by the predicted step.
    pub fn apply(&self, state: &Trajectory, ego: &AgentId, ego_action: &AgentAction) -> Result<Trajectory, CoreError> {
        let mut actions = self.others_actions.clone();
        actions.insert(ego.clone(), ego_action.clone());
        state.with_last_actions(&actions)?.appended(self.next_step.clone())
    }
}

/// Predicts the social world one step ahead.
pub trait SocialWorldModel: Send + Sync {
    /// Actions of every agent except the ego at the last step.
    fn predict_others_actions(&self, query: &SwmQuery) -> Result<IndexMap<AgentId, AgentAction>, SwmError>;

    /// The next step given everybody's actions at the last step.
    fn predict_next_step_given(
        &self,
        query: &SwmQuery,
        others: &IndexMap<AgentId, AgentAction>,
    ) -> Result<NextStepPrediction, SwmError>;

    /// The next step with the others' actions predicted first.
    fn predict_next_step(&self, query: &SwmQuery) -> Result<NextStepPrediction, SwmError> {
        let others = self.predict_others_actions(query)?;
        self.predict_next_step_given(query, &others)
    }
}

impl<M: SocialWorldModel + ?Sized> SocialWorldModel for Box<M> {
    fn predict_others_actions(&self, query: &SwmQuery) -> Result<IndexMap<AgentId, AgentAction>, SwmError> {
        (**self).predict_others_actions(query)
    }
    fn predict_next_step_given(
        &self,
        query: &SwmQuery,
        others: &IndexMap<AgentId, AgentAction>,
    ) -> Result<NextStepPrediction, SwmError> {
        (**self).predict_next_step_given(query, others)
    }
    fn predict_next_step(&self, query: &SwmQuery) -> Result<NextStepPrediction, SwmError> {
        (**self).predict_next_step(query)
    }
}

/// An exact world model for a scripted environment: the other agents
/// follow their scripted policies and the environment supplies the
/// transition. Agents who move before the ego within a round have already
/// acted, so their recorded actions are kept.
pub struct OracleSwm<E> {
    env: E,
    policies: IndexMap<AgentId, Box<dyn Policy>>,
}

impl<E: Environment> OracleSwm<E> {
    pub fn new(env: E) -> Self {
        let policies = env.agents().into_iter().map(|a| {
            let p = env.scripted_policy(&a);
            (a, p)
        });
        Self { policies: policies.collect(), env }
    }

    /// Replaces the scripted policy assumed for `agent`.
    pub fn with_policy(mut self, agent: AgentId, policy: Box<dyn Policy>) -> Self {
        self.policies.insert(agent, policy);
        self
    }

    pub fn env(&self) -> &E {
        &self.env
    }
}

impl<E: Environment> SocialWorldModel for OracleSwm<E> {
    fn predict_others_actions(&self, query: &SwmQuery) -> Result<IndexMap<AgentId, AgentAction>, SwmError> {
        let order = self.env.agents();
        if !order.contains(&query.ego) {
            return Err(SwmError::InvalidQuery(format!("{} does not play in {}", query.ego, self.env.name())));
        }
        let ego_pos = order.iter().position(|a| *a == query.ego).expect("checked above");
        let last = query.trajectory.last_step().expect("queries have a step");
        let mut traj = query.trajectory.clone();
        let mut others = IndexMap::new();
        for (i, agent) in order.iter().enumerate() {
            let action = if i < ego_pos {
                let recorded = last.actions[agent].clone();
                others.insert(agent.clone(), recorded.clone());
                recorded
            } else if *agent == query.ego {
                query.ego_action_or_none()
            } else {
                let policy = self.policies.get(agent).ok_or_else(|| SwmError::Policy {
                    agent: agent.to_string(),
                    reason: "no scripted policy".into(),
                })?;
                let action = policy
                    .sample_action(&self.env.action_space(agent), &traj, &self.env.goal(agent))
                    .map_err(|e| SwmError::Policy { agent: agent.to_string(), reason: e.to_string() })?;
                others.insert(agent.clone(), action.clone());
                action
            };
            traj = traj.with_last_actions(&IndexMap::from([(agent.clone(), action)]))?;
        }
        Ok(others)
    }

    fn predict_next_step_given(
        &self,
        query: &SwmQuery,
        others: &IndexMap<AgentId, AgentAction>,
    ) -> Result<NextStepPrediction, SwmError> {
        query.check_others(others)?;
        let mut actions = others.clone();
        actions.insert(query.ego.clone(), query.ego_action_or_none());
        let filled = query.trajectory.with_last_actions(&actions)?;
        let next_step = self.env.transition(&filled).map_err(|e| SwmError::Transition(e.to_string()))?;
        Ok(NextStepPrediction { others_actions: others.clone(), next_step, confidence_note: None })
    }
}

/// A world model backed by a completion backend. Trajectories are shown to
/// the model in the string-list wire form.
pub struct LlmSwm<B> {
    backend: B,
    model_id: String,
}

impl<B: CompletionBackend> LlmSwm<B> {
    pub fn new(backend: B, model_id: impl Into<String>) -> Self {
        Self { backend, model_id: model_id.into() }
    }

    fn ask(&self, prompt: String) -> Result<String, SwmError> {
        Ok(self.backend.complete(&CompletionRequest::user(self.model_id.clone(), prompt))?)
    }
}

/// Reads `agent_name: action` lines for exactly the agents other than the
/// ego. A line for the ego is ignored.
pub fn decode_action_lines(raw: &str, query: &SwmQuery) -> Result<IndexMap<AgentId, AgentAction>, SwmError> {
    let fail = |reason: String| SwmError::PredictionDecode { raw: raw.to_string(), reason };
    let mut out = IndexMap::new();
    for line in raw.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim();
        let Some((name, action)) = line.split_once(':') else { continue };
        let Some(agent) = query.trajectory.agent(name.trim()) else {
            if name.trim().contains(' ') {
                continue;
            }
            return Err(fail(format!("'{}' is not an agent of the interaction", name.trim())));
        };
        if *agent == query.ego {
            continue;
        }
        let action = action.trim();
        if action.is_empty() {
            return Err(fail(format!("empty action for {agent}")));
        }
        out.insert(agent.clone(), AgentAction::new(action));
    }
    let missing: Vec<&str> = query.others().filter(|a| !out.contains_key(*a)).map(AgentId::as_str).collect();
    if !missing.is_empty() {
        return Err(fail(format!("no action predicted for {}", missing.join(", "))));
    }
    Ok(out)
}

impl<B: CompletionBackend> SocialWorldModel for LlmSwm<B> {
    fn predict_others_actions(&self, query: &SwmQuery) -> Result<IndexMap<AgentId, AgentAction>, SwmError> {
        let ego_line = match &query.ego_action {
            Some(a) => format!("At the last step {} takes this action: {a}.", query.ego),
            None => format!("The action of {} at the last step is not known.", query.ego),
        };
        let others: Vec<&str> = query.others().map(AgentId::as_str).collect();
        let prompt = PREDICT_ACTIONS_TEMPLATE
            .render(&[
                ("trajectory", &encode_trajectory(&query.trajectory, WireForm::StringList)),
                ("ego_action", &ego_line),
                ("others", &others.join(", ")),
            ])
            .expect("all slots filled");
        decode_action_lines(&self.ask(prompt)?, query)
    }

    fn predict_next_step_given(
        &self,
        query: &SwmQuery,
        others: &IndexMap<AgentId, AgentAction>,
    ) -> Result<NextStepPrediction, SwmError> {
        query.check_others(others)?;
        let mut actions = others.clone();
        actions.insert(query.ego.clone(), query.ego_action_or_none());
        let lines: Vec<String> = query
            .trajectory
            .agents()
            .iter()
            .map(|a| format!("{a}: {}", actions[a]))
            .collect();
        let prompt = PREDICT_STEP_TEMPLATE
            .render(&[
                ("trajectory", &encode_trajectory(&query.trajectory, WireForm::StringList)),
                ("actions", &lines.join("\n")),
                ("schema", &form_schema(WireForm::StringList)),
            ])
            .expect("all slots filled");
        let raw = self.ask(prompt)?;
        let fail = |reason: String| SwmError::PredictionDecode { raw: raw.clone(), reason };
        let value = extract_json(&raw).ok_or_else(|| fail("the response contains no JSON value".into()))?;
        let decoded = decode_step(&value.to_string(), None);
        let step = match decoded.step {
            Some(step) if decoded.issues.is_empty() => step,
            _ => return Err(fail(issues_to_feedback(&decoded.issues).unwrap_or_default())),
        };
        let agents: Vec<&AgentId> = step.agents().collect();
        let expected: Vec<&AgentId> = query.trajectory.agents().iter().collect();
        if agents.len() != expected.len() || expected.iter().any(|a| !step.observations.contains_key(*a)) {
            return Err(fail("the predicted step does not cover the agents of the interaction".into()));
        }
        Ok(NextStepPrediction { others_actions: others.clone(), next_step: step, confidence_note: None })
    }
}

/// Result of a policy-driven rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// The action sampled on the starting state.
    pub initial_action: AgentAction,
    /// The action sampled on the last predicted state.
    pub final_action: AgentAction,
    /// Predicted steps, one per world-model call.
    pub steps: Vec<SimulationStep>,
    /// The trajectory after each predicted step.
    pub states: Vec<Trajectory>,
}

/// Samples an ego action, then `n` times predicts the next step under that
/// action and samples again on the predicted trajectory. Makes `n`
/// world-model calls and `n + 1` policy calls.
pub fn rollout<F>(
    model: &dyn SocialWorldModel,
    state: &Trajectory,
    ego: &AgentId,
    mut policy: F,
    n: usize,
) -> Result<Rollout, AgentError>
where
    F: FnMut(&Trajectory) -> Result<AgentAction, AgentError>,
{
    let initial_action = policy(state)?;
    let mut action = initial_action.clone();
    let mut current = state.clone();
    let mut steps = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let query = SwmQuery::new(current.clone(), ego.clone(), Some(action.clone()))?;
        let prediction = model.predict_next_step(&query)?;
        let next = prediction.apply(&current, ego, &action)?;
        action = policy(&next)?;
        steps.push(next.last_step().expect("a step was appended").clone());
        states.push(next.clone());
        current = next;
    }
    Ok(Rollout { initial_action, final_action: action, steps, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::model::{ObservationExpr, Timestep};

    fn a(n: &str) -> AgentId {
        AgentId::new(n).unwrap()
    }

    fn traj() -> Trajectory {
        let step = SimulationStep::new(
            Timestep::new("0", 0).unwrap(),
            "A table with a cake.",
            [(a("Ann"), ObservationExpr::new("<same_as_state />")), (a("Bo"), ObservationExpr::new("<same_as_state />"))]
                .into_iter()
                .collect(),
            [(a("Ann"), AgentAction::none()), (a("Bo"), AgentAction::none())].into_iter().collect(),
        )
        .unwrap();
        Trajectory::from_steps(vec![a("Ann"), a("Bo")], vec![step]).unwrap()
    }

    const STEP: &str = r#"{"timestep": "1", "state": "Ann holds the cake.",
        "observations": ["Ann: <same_as_state /> <mental_state>pleased</mental_state>", "Bo: <same_as_state />"],
        "actions": ["Ann: none", "Bo: none"]}"#;

    #[test]
    fn llm_model_round_trip() {
        let backend = ScriptedBackend::new("mock", ["Ann: wave\nBo: take the cake", STEP]);
        let swm = LlmSwm::new(&backend, "m");
        let q = SwmQuery::new(traj(), a("Ann"), Some(AgentAction::new("smile"))).unwrap();
        let p = swm.predict_next_step(&q).unwrap();
        assert_eq!(p.others_actions.len(), 1);
        assert_eq!(p.others_actions[&a("Bo")].raw, "take the cake");
        assert_eq!(p.next_step.state, "Ann holds the cake.");
        let prompts = backend.requests();
        assert!(prompts[0].last_user_content().unwrap().contains("Ann takes this action: smile"));
        assert!(prompts[1].last_user_content().unwrap().contains("Bo: take the cake"));
        let next = p.apply(&q.trajectory, &q.ego, &AgentAction::new("smile")).unwrap();
        assert_eq!(next.len(), 2);
        assert_eq!(next.steps()[0].actions[&a("Ann")].raw, "smile");
    }

    #[test]
    fn decode_errors() {
        let q = SwmQuery::new(traj(), a("Ann"), None).unwrap();
        assert!(matches!(decode_action_lines("Zed: run", &q), Err(SwmError::PredictionDecode { .. })));
        assert!(matches!(decode_action_lines("Ann: sit", &q), Err(SwmError::PredictionDecode { .. })));
        assert_eq!(decode_action_lines("Here you go.\n- Bo: sit", &q).unwrap()[&a("Bo")].raw, "sit");

        let backend = ScriptedBackend::new("mock", ["not json at all"]);
        let swm = LlmSwm::new(&backend, "m");
        let others = IndexMap::from([(a("Bo"), AgentAction::none())]);
        assert!(matches!(swm.predict_next_step_given(&q, &others), Err(SwmError::PredictionDecode { .. })));
        let wrong = IndexMap::from([(a("Ann"), AgentAction::none())]);
        assert!(matches!(swm.predict_next_step_given(&q, &wrong), Err(SwmError::InvalidQuery(_))));
    }

    #[test]
    fn queries_need_a_known_ego_and_a_step() {
        assert!(SwmQuery::new(traj(), a("Cy"), None).is_err());
        assert!(SwmQuery::new(Trajectory::new(vec![a("Ann")]).unwrap(), a("Ann"), None).is_err());
    }
}
