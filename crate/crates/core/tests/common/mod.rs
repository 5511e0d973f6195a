//! Generators shared by the integration tests.
#![allow(dead_code)]

use indexmap::IndexMap;
use proptest::prelude::*;
use proptest::sample::{select, subsequence};
use s3ap::{AgentAction, AgentId, ObservationExpr, SimulationStep, Timestep, Trajectory};

pub const NAMES: &[&str] = &["Sally", "Anne", "Omar", "Li", "Priya", "Tom"];

const WORDS: &[&str] = &[
    "the", "marble", "is", "in", "basket", "box", "walked", "into", "kitchen", "it's", "Anne's", "x<y", "\"quoted\"",
    "café", "50%", "a:b", "{braces}", "[1]", "back\\slash", "moved", "said", "quietly", "3",
];

pub fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec(select(WORDS), 1..6).prop_map(|w| w.join(" "))
}

pub fn action() -> impl Strategy<Value = String> {
    prop_oneof![1 => Just("none".to_string()), 3 => phrase()]
}

fn segment(n_agents: usize, last_action: bool) -> BoxedStrategy<String> {
    let mut options: Vec<BoxedStrategy<String>> = vec![
        phrase().boxed(),
        select(vec!["<same_as_state />", "<same_as_state/>", "< same_as_state />"]).prop_map(str::to_string).boxed(),
        phrase().prop_map(|p| format!("<mental_state>{p}</mental_state>")).boxed(),
    ];
    if last_action {
        options.push(Just("<same_as_last_action />".to_string()).boxed());
        options.push((1..=n_agents).prop_map(|x| format!("<same_as_last_action_{x} />")).boxed());
    }
    proptest::strategy::Union::new(options).boxed()
}

/// An observation expression over `n_agents`; last-action tags only when
/// `last_action` is set.
pub fn observation(n_agents: usize, last_action: bool) -> impl Strategy<Value = String> {
    prop_oneof![
        1 => Just("none".to_string()),
        4 => prop::collection::vec(segment(n_agents, last_action), 1..4).prop_map(|s| s.join(" ")),
    ]
}

pub fn agents() -> impl Strategy<Value = Vec<AgentId>> {
    subsequence(NAMES, 1..=4)
        .prop_shuffle()
        .prop_map(|names| names.iter().map(|n| AgentId::new(n).unwrap()).collect())
}

#[derive(Debug, Clone)]
pub struct RawStep {
    pub timestep: String,
    pub state: String,
    pub observations: Vec<String>,
    pub actions: Vec<String>,
}

pub fn raw_step(n_agents: usize, last_action: bool) -> impl Strategy<Value = RawStep> {
    (
        prop_oneof![(0u32..1000).prop_map(|i| i.to_string()), phrase()],
        phrase(),
        prop::collection::vec(observation(n_agents, last_action), n_agents),
        prop::collection::vec(action(), n_agents),
    )
        .prop_map(|(timestep, state, observations, actions)| RawStep { timestep, state, observations, actions })
}

pub fn build_step(agents: &[AgentId], raw: &RawStep, ordinal: usize) -> SimulationStep {
    let obs: IndexMap<_, _> = agents.iter().cloned().zip(raw.observations.iter().map(ObservationExpr::new)).collect();
    let acts: IndexMap<_, _> = agents.iter().cloned().zip(raw.actions.iter().map(AgentAction::new)).collect();
    SimulationStep::new(Timestep::new(raw.timestep.clone(), ordinal).unwrap(), raw.state.clone(), obs, acts).unwrap()
}

/// A single step over 1 to 4 agents, last-action tags included.
pub fn step() -> impl Strategy<Value = SimulationStep> {
    agents().prop_flat_map(|agents| {
        let n = agents.len();
        raw_step(n, true).prop_map(move |raw| build_step(&agents, &raw, 0))
    })
}

/// A trajectory of 1 to 6 steps whose first step carries no last-action
/// tag, so every observation resolves.
pub fn trajectory() -> impl Strategy<Value = Trajectory> {
    agents().prop_flat_map(|agents| {
        let n = agents.len();
        (raw_step(n, false), prop::collection::vec(raw_step(n, true), 0..6)).prop_map(move |(first, rest)| {
            let steps = std::iter::once(&first)
                .chain(&rest)
                .enumerate()
                .map(|(i, raw)| build_step(&agents, raw, i))
                .collect();
            Trajectory::from_steps(agents.clone(), steps).unwrap()
        })
    })
}
