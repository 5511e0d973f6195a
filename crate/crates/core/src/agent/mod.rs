//! Agent policies, the foresee-and-act lookahead loop and small
//! interactive environments for measuring goal completion.

mod friends;
mod llm;
mod negotiation;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::BackendError;
use crate::model::{AgentAction, AgentId, CoreError, SimulationStep, Trajectory};
use crate::swm::{rollout, SocialWorldModel, SwmError};

pub use friends::{FriendsConfig, FriendsEnv, FriendsRefiner, FriendsState, MyopicFriendPolicy};
pub use llm::{decode_action_object, LlmPolicy, LlmRefiner, POLICY_TEMPLATE, REFINE_TEMPLATE};
pub use negotiation::{
    GreedyBuyerPolicy, NegotiationConfig, NegotiationEnv, NegotiationRefiner, NegotiationState, Outcome,
    ScriptedSellerPolicy,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("could not decode an action from {raw:?}: {reason}")]
    ActionDecode { raw: String, reason: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Swm(#[from] SwmError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("environment rule violated: {0}")]
    EnvRule(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// The actions available to an agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    Enumerated { options: Vec<AgentAction> },
    /// Free text that must match `pattern` (a regular expression anchored
    /// at both ends).
    FreeText { format_instructions: String, pattern: String },
}

impl ActionSpace {
    pub fn enumerated(options: Vec<AgentAction>) -> Result<Self, AgentError> {
        if options.is_empty() {
            return Err(AgentError::InvalidConfig("an enumerated action space needs options".into()));
        }
        for (i, o) in options.iter().enumerate() {
            if options[..i].contains(o) {
                return Err(AgentError::InvalidConfig(format!("duplicate action option '{o}'")));
            }
        }
        Ok(Self::Enumerated { options })
    }

    pub fn free_text(format_instructions: impl Into<String>, pattern: impl Into<String>) -> Result<Self, AgentError> {
        let pattern = pattern.into();
        Regex::new(&format!("^(?:{pattern})$")).map_err(|e| AgentError::InvalidConfig(e.to_string()))?;
        Ok(Self::FreeText { format_instructions: format_instructions.into(), pattern })
    }

    pub fn contains(&self, action: &AgentAction) -> bool {
        match self {
            ActionSpace::Enumerated { options } => options.iter().any(|o| o.raw.trim() == action.raw.trim()),
            ActionSpace::FreeText { pattern, .. } => Regex::new(&format!("^(?:{pattern})$"))
                .map(|re| re.is_match(action.raw.trim()))
                .unwrap_or(false),
        }
    }

    /// Text for the `{format_instructions}` slot of action prompts.
    pub fn format_instructions(&self) -> String {
        let shape = "Reply with a JSON object {\"action_type\": ..., \"argument\": ...}; the action is the \
                     action type followed by the argument, if any.";
        match self {
            ActionSpace::Enumerated { options } => {
                let list: Vec<&str> = options.iter().map(|o| o.raw.as_str()).collect();
                format!("{shape} The action must be exactly one of: {}.", list.join("; "))
            }
            ActionSpace::FreeText { format_instructions, .. } => format!("{shape} {format_instructions}"),
        }
    }

    fn check(&self, action: AgentAction, raw: &str) -> Result<AgentAction, AgentError> {
        if self.contains(&action) {
            Ok(action)
        } else {
            Err(AgentError::ActionDecode {
                raw: raw.to_string(),
                reason: format!("'{action}' is outside the action space"),
            })
        }
    }
}

/// A private social goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub description: String,
    /// Identifier of the rule that scores this goal.
    pub scorer: String,
}

impl Goal {
    pub fn new(description: impl Into<String>, scorer: impl Into<String>) -> Result<Self, AgentError> {
        let description = description.into();
        if description.trim().is_empty() {
            return Err(AgentError::InvalidConfig("goal description is empty".into()));
        }
        Ok(Self { description, scorer: scorer.into() })
    }
}

/// Goal completion on a 0 to 10 scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GoalScore(f64);

impl GoalScore {
    pub fn new(value: f64) -> Result<Self, AgentError> {
        if (0.0..=10.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(AgentError::InvalidConfig(format!("goal score {value} is outside [0, 10]")))
        }
    }

    /// Clamps into range; NaN becomes 0.
    pub fn clamped(value: f64) -> Self {
        Self(if value.is_nan() { 0.0 } else { value.clamp(0.0, 10.0) })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GoalScore {
    type Error = AgentError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<GoalScore> for f64 {
    fn from(s: GoalScore) -> f64 {
        s.0
    }
}

/// Proposes an action for its agent.
pub trait Policy: Send + Sync {
    fn agent(&self) -> &AgentId;

    fn sample_action(&self, space: &ActionSpace, state: &Trajectory, goal: &Goal) -> Result<AgentAction, AgentError>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn agent(&self) -> &AgentId {
        (**self).agent()
    }

    fn sample_action(&self, space: &ActionSpace, state: &Trajectory, goal: &Goal) -> Result<AgentAction, AgentError> {
        (**self).sample_action(space, state, goal)
    }
}

/// Samples from `policy` and enforces the action space. A space with a
/// single option yields that option without consulting the policy.
pub fn sample_action(
    policy: &dyn Policy,
    space: &ActionSpace,
    state: &Trajectory,
    goal: &Goal,
) -> Result<AgentAction, AgentError> {
    if let ActionSpace::Enumerated { options } = space {
        if let [only] = options.as_slice() {
            return Ok(only.clone());
        }
    }
    let action = policy.sample_action(space, state, goal)?;
    let raw = action.raw.clone();
    space.check(action, &raw)
}

/// Turns an intended action and simulated futures into a final action.
pub trait Refiner: Send + Sync {
    fn refine(
        &self,
        space: &ActionSpace,
        sim_states: &[SimulationStep],
        original_state: &Trajectory,
        goal: &Goal,
        intended: &AgentAction,
    ) -> Result<AgentAction, AgentError>;
}

/// Keeps the intended action.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThroughRefiner;

impl Refiner for PassThroughRefiner {
    fn refine(
        &self,
        _: &ActionSpace,
        _: &[SimulationStep],
        _: &Trajectory,
        _: &Goal,
        intended: &AgentAction,
    ) -> Result<AgentAction, AgentError> {
        Ok(intended.clone())
    }
}

/// Refines `intended` in light of the simulated steps, checking that the
/// result stays in the action space.
pub fn act_from_sim(
    space: &ActionSpace,
    sim_states: &[SimulationStep],
    original_state: &Trajectory,
    goal: &Goal,
    intended: &AgentAction,
    refiner: &dyn Refiner,
) -> Result<AgentAction, AgentError> {
    if sim_states.is_empty() {
        return Err(AgentError::InvalidConfig("refinement needs at least one simulated step".into()));
    }
    let action = refiner.refine(space, sim_states, original_state, goal, intended)?;
    let raw = action.raw.clone();
    space.check(action, &raw)
}

/// Number of lookahead iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeseeConfig {
    pub max_iterations: usize,
}

impl Default for ForeseeConfig {
    fn default() -> Self {
        Self { max_iterations: 1 }
    }
}

impl ForeseeConfig {
    pub fn new(max_iterations: usize) -> Result<Self, AgentError> {
        if max_iterations == 0 {
            return Err(AgentError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        Ok(Self { max_iterations })
    }
}

/// What foresee-and-act decided and what it saw on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct ForeseeOutcome {
    pub action: AgentAction,
    /// The first sampled action, before any lookahead.
    pub initial_action: AgentAction,
    /// The last sampled action, shown to the refiner as the intended one.
    pub intended_action: AgentAction,
    pub sim_states: Vec<SimulationStep>,
}

/// Samples an action, rolls the world model forward `N` times re-sampling
/// after each predicted step, then refines the last sample from the
/// simulated steps and the original state.
///
/// Makes exactly `N` world-model calls, `N + 1` policy samples and one
/// refinement.
pub fn foresee_and_act(
    space: &ActionSpace,
    goal: &Goal,
    state: &Trajectory,
    cfg: &ForeseeConfig,
    swm: &dyn SocialWorldModel,
    policy: &dyn Policy,
    refiner: &dyn Refiner,
) -> Result<ForeseeOutcome, AgentError> {
    if cfg.max_iterations == 0 {
        return Err(AgentError::InvalidConfig("max_iterations must be at least 1".into()));
    }
    let run = rollout(swm, state, policy.agent(), |s| sample_action(policy, space, s, goal), cfg.max_iterations)?;
    let action = act_from_sim(space, &run.steps, state, goal, &run.final_action, refiner)?;
    Ok(ForeseeOutcome {
        action,
        initial_action: run.initial_action,
        intended_action: run.final_action,
        sim_states: run.steps,
    })
}

/// A participant in an episode.
pub trait Actor: Send + Sync {
    fn act(&self, space: &ActionSpace, state: &Trajectory, goal: &Goal) -> Result<AgentAction, AgentError>;
}

/// Acts by sampling its policy once.
pub struct PolicyActor<P>(pub P);

impl<P: Policy> Actor for PolicyActor<P> {
    fn act(&self, space: &ActionSpace, state: &Trajectory, goal: &Goal) -> Result<AgentAction, AgentError> {
        sample_action(&self.0, space, state, goal)
    }
}

/// Acts through foresee-and-act.
pub struct ForeseeActor {
    pub policy: Box<dyn Policy>,
    pub swm: Box<dyn SocialWorldModel>,
    pub refiner: Box<dyn Refiner>,
    pub cfg: ForeseeConfig,
}

impl Actor for ForeseeActor {
    fn act(&self, space: &ActionSpace, state: &Trajectory, goal: &Goal) -> Result<AgentAction, AgentError> {
        Ok(foresee_and_act(space, goal, state, &self.cfg, self.swm.as_ref(), self.policy.as_ref(), self.refiner.as_ref())?
            .action)
    }
}

/// A deterministic multi-agent world played in rounds. Within a round the
/// agents act in [`Environment::agents`] order, each seeing the actions
/// already taken that round in the last step of the trajectory.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;

    fn agents(&self) -> Vec<AgentId>;

    fn initial_step(&self) -> SimulationStep;

    fn action_space(&self, agent: &AgentId) -> ActionSpace;

    fn goal(&self, agent: &AgentId) -> Goal;

    /// Rejects actions that are in the space but break a game rule.
    fn check_action(&self, _state: &Trajectory, _agent: &AgentId, _action: &AgentAction) -> Result<(), String> {
        Ok(())
    }

    /// The step that follows once every agent has acted in the last step.
    fn transition(&self, state: &Trajectory) -> Result<SimulationStep, AgentError>;

    fn is_terminal(&self, state: &Trajectory) -> bool;

    fn scores(&self, state: &Trajectory) -> IndexMap<AgentId, GoalScore>;

    /// The built-in scripted behavior of `agent`.
    fn scripted_policy(&self, agent: &AgentId) -> Box<dyn Policy>;

    /// The rule-based refiner `agent` uses with foresight.
    fn scripted_refiner(&self, _agent: &AgentId) -> Box<dyn Refiner> {
        Box::new(PassThroughRefiner)
    }

    /// Agents that plan with foresight when an evaluation does not say.
    fn default_learners(&self) -> Vec<AgentId> {
        self.agents()
    }
}

impl<E: Environment + ?Sized> Environment for std::sync::Arc<E> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn agents(&self) -> Vec<AgentId> {
        (**self).agents()
    }
    fn initial_step(&self) -> SimulationStep {
        (**self).initial_step()
    }
    fn action_space(&self, agent: &AgentId) -> ActionSpace {
        (**self).action_space(agent)
    }
    fn goal(&self, agent: &AgentId) -> Goal {
        (**self).goal(agent)
    }
    fn check_action(&self, state: &Trajectory, agent: &AgentId, action: &AgentAction) -> Result<(), String> {
        (**self).check_action(state, agent, action)
    }
    fn transition(&self, state: &Trajectory) -> Result<SimulationStep, AgentError> {
        (**self).transition(state)
    }
    fn is_terminal(&self, state: &Trajectory) -> bool {
        (**self).is_terminal(state)
    }
    fn scores(&self, state: &Trajectory) -> IndexMap<AgentId, GoalScore> {
        (**self).scores(state)
    }
    fn scripted_policy(&self, agent: &AgentId) -> Box<dyn Policy> {
        (**self).scripted_policy(agent)
    }
    fn scripted_refiner(&self, agent: &AgentId) -> Box<dyn Refiner> {
        (**self).scripted_refiner(agent)
    }
    fn default_learners(&self) -> Vec<AgentId> {
        (**self).default_learners()
    }
}

/// Scores and full log of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub scores: IndexMap<AgentId, GoalScore>,
    pub trajectory: Trajectory,
    /// `(step ordinal, agent, reason)` for every forfeited turn.
    pub forfeits: Vec<(usize, AgentId, String)>,
}

/// Plays up to `max_turns` rounds. An action outside the agent's space or
/// against the rules forfeits that turn, recorded as `none`.
pub fn run_episode(
    env: &dyn Environment,
    agents: &IndexMap<AgentId, Box<dyn Actor>>,
    max_turns: usize,
) -> Result<EpisodeResult, AgentError> {
    let order = env.agents();
    if order.len() != agents.len() || order.iter().any(|a| !agents.contains_key(a)) {
        return Err(AgentError::InvalidConfig(format!(
            "environment {} needs exactly the agents {:?}",
            env.name(),
            order.iter().map(AgentId::as_str).collect::<Vec<_>>()
        )));
    }
    let mut traj = Trajectory::new(order.clone())?;
    traj.push_step(env.initial_step())?;
    let mut forfeits = Vec::new();
    for _ in 0..max_turns {
        if env.is_terminal(&traj) {
            break;
        }
        for agent in &order {
            let space = env.action_space(agent);
            let (mut action, verdict) = match agents[agent].act(&space, &traj, &env.goal(agent)) {
                Ok(action) if space.contains(&action) => {
                    let verdict = env.check_action(&traj, agent, &action);
                    (action, verdict)
                }
                Ok(action) => {
                    let reason = format!("'{action}' is outside the action space");
                    (action, Err(reason))
                }
                Err(e @ AgentError::ActionDecode { .. }) => (AgentAction::none(), Err(e.to_string())),
                Err(e) => return Err(e),
            };
            if let Err(reason) = verdict {
                forfeits.push((traj.len() - 1, agent.clone(), reason));
                action = AgentAction::none();
            }
            traj = traj.with_last_actions(&IndexMap::from([(agent.clone(), action)]))?;
        }
        let next = env.transition(&traj)?;
        traj.push_step(next)?;
    }
    let scores = env.scores(&traj);
    let traj = traj
        .with_metadata("environment", env.name())
        .with_metadata("forfeits", forfeits.len());
    Ok(EpisodeResult { scores, trajectory: traj, forfeits })
}

/// Environment definitions loadable from JSON, tagged by `env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "snake_case")]
pub enum EnvConfig {
    Negotiation(NegotiationConfig),
    Friends(FriendsConfig),
}

impl EnvConfig {
    pub fn build(&self) -> Result<std::sync::Arc<dyn Environment>, AgentError> {
        Ok(match self {
            EnvConfig::Negotiation(c) => std::sync::Arc::new(NegotiationEnv::new(c.clone())?),
            EnvConfig::Friends(c) => std::sync::Arc::new(FriendsEnv::new(c.clone())?),
        })
    }
}

/// JSON value to action text: `action_type` followed by `argument`.
pub(crate) fn action_text(value: &Value) -> Option<String> {
    let kind = value.get("action_type")?.as_str()?.trim();
    if kind.is_empty() {
        return None;
    }
    let arg = match value.get("argument") {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    };
    Some(if arg.is_empty() { kind.to_string() } else { format!("{kind} {arg}") })
}
