//! A one-item price negotiation between a buyer and a scripted seller.
//!
//! Each round the buyer accepts the current ask or makes an offer, then the
//! seller replies: it takes any offer at or above its ask and otherwise
//! lowers the ask by a fixed step, never below its reservation price. The
//! seller's willingness for the next round is part of its mental state.

use std::sync::LazyLock;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ActionSpace, AgentError, Environment, Goal, GoalScore, Policy, Refiner};
use crate::model::{AgentAction, AgentId, ObservationExpr, SimulationStep, Timestep, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NegotiationConfig {
    pub buyer: String,
    pub seller: String,
    pub start_ask: i64,
    /// How much the seller lowers its ask after a declined round.
    pub step: i64,
    /// The seller never asks less than this.
    pub reservation: i64,
    /// What the item is worth to the buyer.
    pub buyer_value: i64,
    /// The scripted buyer accepts any ask at or below this.
    pub accept_threshold: i64,
    /// The scripted buyer offers this much below the ask.
    pub offer_margin: i64,
    /// Number of buyer turns before the negotiation ends without a deal.
    pub max_rounds: usize,
}

impl Default for NegotiationConfig {
    fn default() -> Self {
        Self {
            buyer: "Buyer".into(),
            seller: "Seller".into(),
            start_ask: 85,
            step: 10,
            reservation: 65,
            buyer_value: 100,
            accept_threshold: 75,
            offer_margin: 5,
            max_rounds: 8,
        }
    }
}

impl NegotiationConfig {
    /// A random configuration for evaluation suites.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start_ask = rng.random_range(80..=100);
        let step = rng.random_range(5..=15);
        let reservation = rng.random_range(start_ask - 40..=start_ask - 10);
        Self {
            start_ask,
            step,
            reservation,
            accept_threshold: rng.random_range(reservation..=start_ask),
            buyer_value: rng.random_range(start_ask..=start_ask + 20),
            max_rounds: rng.random_range(2..=6),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        AgentId::new(&self.buyer)?;
        AgentId::new(&self.seller)?;
        if self.buyer == self.seller {
            return bad("buyer and seller must differ");
        }
        if self.step <= 0 || self.offer_margin < 0 {
            return bad("step must be positive and offer_margin non-negative");
        }
        if self.reservation < 0 || self.reservation > self.start_ask {
            return bad("reservation must lie between 0 and start_ask");
        }
        if self.buyer_value <= self.reservation {
            return bad("buyer_value must exceed the reservation");
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be at least 1");
        }
        Ok(())
    }

    /// The ask the seller moves to when the buyer does not close at `ask`.
    pub fn concession(&self, ask: i64) -> i64 {
        (ask - self.step).max(self.reservation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Open,
    Deal(i64),
    NoDeal,
}

/// The public state at the start of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegotiationState {
    pub ask: i64,
    /// Zero-based index of the step.
    pub round: usize,
    pub outcome: Outcome,
}

static OFFER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^offer (\d+)$").expect("regex"));
static COUNTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^counter (\d+)$").expect("regex"));
static WILLING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"willing to settle near (\d+)").expect("regex"));

fn amount(re: &Regex, action: &AgentAction) -> Option<i64> {
    re.captures(action.raw.trim()).and_then(|c| c[1].parse().ok())
}

fn is_accept(action: &AgentAction) -> bool {
    action.raw.trim() == "accept"
}

#[derive(Debug, Clone)]
pub struct NegotiationEnv {
    cfg: NegotiationConfig,
    buyer: AgentId,
    seller: AgentId,
}

impl NegotiationEnv {
    pub fn new(cfg: NegotiationConfig) -> Result<Self, AgentError> {
        cfg.validate()?;
        Ok(Self { buyer: AgentId::new(&cfg.buyer)?, seller: AgentId::new(&cfg.seller)?, cfg })
    }

    pub fn config(&self) -> &NegotiationConfig {
        &self.cfg
    }

    pub fn buyer(&self) -> &AgentId {
        &self.buyer
    }

    pub fn seller(&self) -> &AgentId {
        &self.seller
    }

    fn advance(&self, mut st: NegotiationState, buyer: &AgentAction, seller: &AgentAction) -> NegotiationState {
        if st.outcome != Outcome::Open {
            st.round += 1;
            return st;
        }
        if is_accept(buyer) {
            st.outcome = Outcome::Deal(st.ask);
        } else if let (Some(offer), true) = (amount(&OFFER, buyer), is_accept(seller)) {
            st.outcome = Outcome::Deal(offer);
        } else if let Some(ask) = amount(&COUNTER, seller) {
            st.ask = ask;
        }
        st.round += 1;
        if st.outcome == Outcome::Open && st.round >= self.cfg.max_rounds {
            st.outcome = Outcome::NoDeal;
        }
        st
    }

    /// The state at the start of step `k`, replayed from the recorded
    /// actions of the steps before it.
    pub fn state_at(&self, traj: &Trajectory, k: usize) -> NegotiationState {
        let mut st = NegotiationState { ask: self.cfg.start_ask, round: 0, outcome: Outcome::Open };
        for step in &traj.steps()[..k.min(traj.len())] {
            st = self.advance(st, &step.actions[&self.buyer], &step.actions[&self.seller]);
        }
        st
    }

    /// The state at the start of the last step.
    pub fn current(&self, traj: &Trajectory) -> NegotiationState {
        self.state_at(traj, traj.len().saturating_sub(1))
    }

    fn state_text(st: &NegotiationState) -> String {
        match st.outcome {
            Outcome::Open => format!("The seller asks {}.", st.ask),
            Outcome::Deal(p) => format!("Deal at {p}."),
            Outcome::NoDeal => format!("No deal. The last ask was {}.", st.ask),
        }
    }

    fn render(&self, st: &NegotiationState, previous: Option<&SimulationStep>) -> SimulationStep {
        let acted = |agent: &AgentId| previous.is_some_and(|p| !p.actions[agent].is_none);
        let mut buyer_obs = String::new();
        if acted(&self.seller) {
            buyer_obs.push_str("<same_as_last_action_2 /> ");
        }
        buyer_obs.push_str("<same_as_state />");
        let mut seller_obs = String::new();
        if acted(&self.buyer) {
            seller_obs.push_str("<same_as_last_action_1 /> ");
        }
        seller_obs.push_str(&format!(
            "<same_as_state /> <mental_state>willing to settle near {}</mental_state>",
            self.cfg.concession(st.ask)
        ));
        let observations = IndexMap::from([
            (self.buyer.clone(), ObservationExpr::new(buyer_obs)),
            (self.seller.clone(), ObservationExpr::new(seller_obs)),
        ]);
        let actions = IndexMap::from([(self.buyer.clone(), AgentAction::none()), (self.seller.clone(), AgentAction::none())]);
        SimulationStep::new(
            Timestep::new(st.round.to_string(), st.round).expect("non-empty"),
            Self::state_text(st),
            observations,
            actions,
        )
        .expect("agent sets match")
    }

    fn final_outcome(&self, traj: &Trajectory) -> Outcome {
        self.state_at(traj, traj.len()).outcome
    }
}

impl Environment for NegotiationEnv {
    fn name(&self) -> &str {
        "negotiation"
    }

    fn agents(&self) -> Vec<AgentId> {
        vec![self.buyer.clone(), self.seller.clone()]
    }

    fn initial_step(&self) -> SimulationStep {
        self.render(&NegotiationState { ask: self.cfg.start_ask, round: 0, outcome: Outcome::Open }, None)
    }

    fn action_space(&self, agent: &AgentId) -> ActionSpace {
        if *agent == self.buyer {
            ActionSpace::free_text("Either 'accept' the current ask or 'offer <price>'.", r"accept|offer \d+")
        } else {
            ActionSpace::free_text("Reply 'accept', 'counter <price>' or 'none'.", r"none|accept|counter \d+")
        }
        .expect("valid pattern")
    }

    fn goal(&self, agent: &AgentId) -> Goal {
        let (text, scorer) = if *agent == self.buyer {
            (format!("Buy the item as cheaply as possible. It is worth {} to you.", self.cfg.buyer_value), "negotiation.buyer")
        } else {
            (format!("Sell the item as dearly as possible, never below {}.", self.cfg.reservation), "negotiation.seller")
        };
        Goal { description: text, scorer: scorer.into() }
    }

    fn transition(&self, state: &Trajectory) -> Result<SimulationStep, AgentError> {
        let last = state.last_step().ok_or_else(|| AgentError::EnvRule("the episode has not started".into()))?;
        let st = self.state_at(state, state.len());
        Ok(self.render(&st, Some(last)))
    }

    fn is_terminal(&self, state: &Trajectory) -> bool {
        self.current(state).outcome != Outcome::Open
    }

    fn scores(&self, state: &Trajectory) -> IndexMap<AgentId, GoalScore> {
        let c = &self.cfg;
        let (buyer, seller) = match self.final_outcome(state) {
            Outcome::Deal(p) => {
                let buyer = 10.0 * (c.buyer_value - p) as f64 / (c.buyer_value - c.reservation) as f64;
                let seller = if c.start_ask == c.reservation {
                    if p >= c.reservation { 10.0 } else { 0.0 }
                } else {
                    10.0 * (p - c.reservation) as f64 / (c.start_ask - c.reservation) as f64
                };
                (buyer, seller)
            }
            _ => (0.0, 0.0),
        };
        IndexMap::from([
            (self.buyer.clone(), GoalScore::clamped(buyer)),
            (self.seller.clone(), GoalScore::clamped(seller)),
        ])
    }

    fn scripted_policy(&self, agent: &AgentId) -> Box<dyn Policy> {
        if *agent == self.buyer {
            Box::new(GreedyBuyerPolicy::new(self.clone()))
        } else {
            Box::new(ScriptedSellerPolicy::new(self.clone()))
        }
    }

    fn scripted_refiner(&self, agent: &AgentId) -> Box<dyn Refiner> {
        if *agent == self.buyer {
            Box::new(NegotiationRefiner::new(self.clone()))
        } else {
            Box::new(super::PassThroughRefiner)
        }
    }

    fn default_learners(&self) -> Vec<AgentId> {
        vec![self.buyer.clone()]
    }
}

/// Accepts once the ask is at or below its threshold, or on its last turn
/// if the ask is still worth paying. Otherwise offers a little below the
/// ask.
#[derive(Debug, Clone)]
pub struct GreedyBuyerPolicy {
    env: NegotiationEnv,
}

impl GreedyBuyerPolicy {
    pub fn new(env: NegotiationEnv) -> Self {
        Self { env }
    }
}

impl Policy for GreedyBuyerPolicy {
    fn agent(&self) -> &AgentId {
        &self.env.buyer
    }

    fn sample_action(&self, _: &ActionSpace, state: &Trajectory, _: &Goal) -> Result<AgentAction, AgentError> {
        let c = &self.env.cfg;
        let st = self.env.current(state);
        if st.outcome != Outcome::Open {
            return Ok(AgentAction::new("accept"));
        }
        let last_turn = st.round + 1 >= c.max_rounds;
        if st.ask <= c.accept_threshold || (last_turn && st.ask <= c.buyer_value) {
            Ok(AgentAction::new("accept"))
        } else {
            Ok(AgentAction::new(format!("offer {}", (st.ask - c.offer_margin).max(0))))
        }
    }
}

/// The seller's fixed script.
#[derive(Debug, Clone)]
pub struct ScriptedSellerPolicy {
    env: NegotiationEnv,
}

impl ScriptedSellerPolicy {
    pub fn new(env: NegotiationEnv) -> Self {
        Self { env }
    }
}

impl Policy for ScriptedSellerPolicy {
    fn agent(&self) -> &AgentId {
        &self.env.seller
    }

    fn sample_action(&self, _: &ActionSpace, state: &Trajectory, _: &Goal) -> Result<AgentAction, AgentError> {
        let st = self.env.current(state);
        let buyer = state
            .last_step()
            .map(|s| s.actions[&self.env.buyer].clone())
            .unwrap_or_else(AgentAction::none);
        if st.outcome != Outcome::Open || is_accept(&buyer) {
            return Ok(AgentAction::none());
        }
        match amount(&OFFER, &buyer) {
            Some(offer) if offer >= st.ask => Ok(AgentAction::new("accept")),
            _ => Ok(AgentAction::new(format!("counter {}", self.env.cfg.concession(st.ask)))),
        }
    }
}

/// Declines to accept when the simulated seller reveals it would go lower
/// and there is a later turn to collect the concession, offering the
/// revealed price instead.
#[derive(Debug, Clone)]
pub struct NegotiationRefiner {
    env: NegotiationEnv,
}

impl NegotiationRefiner {
    pub fn new(env: NegotiationEnv) -> Self {
        Self { env }
    }
}

impl Refiner for NegotiationRefiner {
    fn refine(
        &self,
        _: &ActionSpace,
        sim_states: &[SimulationStep],
        original_state: &Trajectory,
        _: &Goal,
        intended: &AgentAction,
    ) -> Result<AgentAction, AgentError> {
        if !is_accept(intended) {
            return Ok(intended.clone());
        }
        let st = self.env.current(original_state);
        if st.outcome != Outcome::Open || st.round + 1 >= self.env.cfg.max_rounds {
            return Ok(intended.clone());
        }
        let willing = sim_states
            .first()
            .and_then(|s| s.observations.get(&self.env.seller))
            .and_then(|o| WILLING.captures(&o.raw))
            .and_then(|c| c[1].parse::<i64>().ok());
        match willing {
            Some(w) if w < st.ask => Ok(AgentAction::new(format!("offer {w}"))),
            _ => Ok(intended.clone()),
        }
    }
}
