use indexmap::IndexMap;

use super::sim::{simulate, WorldSnapshot};
use super::{OracleError, OracleScenario};
use crate::model::{AgentAction, AgentId, ObservationExpr, SimulationStep, Timestep, Trajectory};

fn list_names(names: &[&AgentId]) -> String {
    match names {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => {
            let init: Vec<_> = init.iter().map(|a| a.as_str()).collect();
            format!("{} and {last}", init.join(", "))
        }
    }
}

/// What an agent standing in `location` sees: who is there and where the
/// objects kept there are.
pub fn scene_text(scenario: &OracleScenario, snap: &WorldSnapshot, location: &str) -> String {
    let mut parts = Vec::new();
    let present = snap.agents_in(location);
    parts.push(match present.len() {
        0 => format!("Nobody is in the {location}."),
        1 => format!("{} is in the {location}.", present[0]),
        _ => format!("{} are in the {location}.", list_names(&present)),
    });
    for (object, container) in snap.placements() {
        if scenario.container_location(container) == Some(location) {
            parts.push(format!("The {object} is in the {container}."));
        }
    }
    parts.join(" ")
}

/// The full environment state: every location's scene, then who is outside.
pub fn state_text(scenario: &OracleScenario, snap: &WorldSnapshot) -> String {
    let mut parts: Vec<String> = scenario.locations.iter().map(|l| scene_text(scenario, snap, l)).collect();
    let outside = snap.agents_outside();
    match outside.len() {
        0 => {}
        1 => parts.push(format!("{} is outside.", outside[0])),
        _ => parts.push(format!("{} are outside.", list_names(&outside))),
    }
    parts.join(" ")
}

/// First-person statement of a belief held along `chain` (headed by the
/// speaker), e.g. "I believe Anne believes the marble is in the box".
pub fn belief_sentence(chain: &[AgentId], object: &str, container: &str) -> String {
    let mut s = String::from("I believe ");
    for a in chain.iter().skip(1) {
        s.push_str(a.as_str());
        s.push_str(" believes ");
    }
    s.push_str(&format!("the {object} is in the {container}"));
    s
}

fn observation(
    scenario: &OracleScenario,
    snaps: &[WorldSnapshot],
    k: usize,
    agent: &AgentId,
    agents: &[AgentId],
    state: &str,
) -> String {
    let snap = &snaps[k];
    let mut parts = Vec::new();
    if let Some(event) = &snap.event {
        if &event.actor != agent && snap.witnesses.contains(agent) {
            let x = agents.iter().position(|a| a == &event.actor).expect("actor is an agent") + 1;
            parts.push(format!("<same_as_last_action_{x} />"));
        }
    }
    if let Some(location) = snap.agent_location(agent) {
        let scene = scene_text(scenario, snap, location);
        parts.push(if scene == state { "<same_as_state />".to_string() } else { scene });
    }
    let before = k.checked_sub(1).map(|p| &snaps[p].beliefs);
    let changed: Vec<String> = snap
        .beliefs
        .changed_for(agent, before)
        .into_iter()
        .map(|(chain, object, container)| belief_sentence(&chain, object, container))
        .collect();
    if !changed.is_empty() {
        parts.push(format!("<mental_state>{}</mental_state>", changed.join("; ")));
    }
    if parts.is_empty() {
        "none".to_string()
    } else {
        parts.join(" ")
    }
}

/// The trajectory a faithful parse of the scenario's narrative should yield.
///
/// Step `k` carries the world before event `k` and that event as its
/// actor's action. A closing step holds the world after the last event with
/// every action `none`, so `n` events give `n + 1` steps. Each observation
/// combines, in order: the previous event when witnessed by a non-actor, the
/// scene at the agent's location (or `<same_as_state />` when that is the
/// whole state), and the agent's newly formed beliefs as mental state.
pub fn ground_truth_trajectory(scenario: &OracleScenario) -> Result<Trajectory, OracleError> {
    let snaps = simulate(scenario)?;
    let agents = scenario.agent_ids();
    let mut traj = Trajectory::new(agents.clone()).map_err(|e| OracleError::InvalidScenario(e.to_string()))?;
    for (k, snap) in snaps.iter().enumerate() {
        let state = state_text(scenario, snap);
        let next_event = scenario.events.get(k);
        let mut observations = IndexMap::new();
        let mut actions = IndexMap::new();
        for agent in &agents {
            observations.insert(
                agent.clone(),
                ObservationExpr::new(observation(scenario, &snaps, k, agent, &agents, &state)),
            );
            let action = match next_event {
                Some(e) if &e.actor == agent => AgentAction::new(e.action_text()),
                _ => AgentAction::none(),
            };
            actions.insert(agent.clone(), action);
        }
        let step = SimulationStep::new(Timestep::new(k.to_string(), k).expect("nonempty"), state, observations, actions)
            .expect("agent sets agree");
        traj.push_step(step).expect("agent sets agree");
    }
    Ok(traj)
}
