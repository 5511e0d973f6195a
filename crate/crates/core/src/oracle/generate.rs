use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Event, EventKind, OracleError, OracleScenario};
use crate::model::AgentId;

const AGENT_POOL: &[&str] = &["Alice", "Benjamin", "Chloe", "Daniel", "Emma", "Felix", "Grace", "Henry", "Isla", "Jack"];
const LOCATION_POOL: &[&str] = &[
    "kitchen", "garden", "hallway", "bedroom", "office", "cellar", "attic", "porch", "garage", "library",
];
const CONTAINER_POOL: &[&str] = &[
    "basket", "box", "drawer", "cupboard", "suitcase", "bucket", "crate", "bottle", "tub", "jar", "bag", "pantry",
];
const OBJECT_POOL: &[&str] = &["marble", "apple", "key", "scarf", "ball", "coin", "book", "hat", "spoon", "ticket"];

/// Shape of a generated scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub n_agents: usize,
    pub n_locations: usize,
    pub n_containers: usize,
    pub n_objects: usize,
    /// Number of random events. A forced false belief appends a short coda
    /// on top of these.
    pub n_events: usize,
    /// Guarantee that some agent ends with a first-order belief that differs
    /// from the true placement of an object.
    pub force_false_belief: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_agents: 3,
            n_locations: 2,
            n_containers: 4,
            n_objects: 2,
            n_events: 6,
            force_false_belief: false,
        }
    }
}

impl GenParams {
    fn check(&self) -> Result<(), OracleError> {
        let infeasible = |m: String| Err(OracleError::InfeasibleParams(m));
        for (name, n, pool) in [
            ("n_agents", self.n_agents, AGENT_POOL.len()),
            ("n_locations", self.n_locations, LOCATION_POOL.len()),
            ("n_containers", self.n_containers, CONTAINER_POOL.len()),
            ("n_objects", self.n_objects, OBJECT_POOL.len()),
        ] {
            if n == 0 || n > pool {
                return infeasible(format!("{name} must be between 1 and {pool}, got {n}"));
            }
        }
        if self.force_false_belief && self.n_agents < 2 {
            return infeasible("a false belief needs at least two agents".into());
        }
        if self.force_false_belief && self.n_containers < 2 {
            return infeasible("a false belief needs at least two containers".into());
        }
        Ok(())
    }
}

fn pick_names(rng: &mut ChaCha8Rng, pool: &[&str], n: usize) -> Vec<String> {
    sample(rng, pool.len(), n).into_iter().map(|i| pool[i].to_string()).collect()
}

/// Mutable world used while drawing events.
struct Draft {
    s: OracleScenario,
    agents: Vec<AgentId>,
    at: Vec<Option<String>>,
    placed: Vec<String>,
}

impl Draft {
    fn object_location(&self, o: usize) -> &str {
        self.s.object_location(self.s.objects.get_index(o).expect("object").0).expect("validated")
    }

    fn push(&mut self, actor: usize, kind: EventKind) {
        match &kind {
            EventKind::Enter { location } => self.at[actor] = Some(location.clone()),
            EventKind::Exit { .. } => self.at[actor] = None,
            EventKind::MoveObject { object, to } => {
                let o = self.s.objects.get_index_of(object).expect("object");
                self.placed[o] = to.clone();
            }
            _ => {}
        }
        self.s.events.push(Event::new(&self.agents[actor], kind));
    }

    fn random_event(&mut self, rng: &mut ChaCha8Rng) {
        let n_agents = self.agents.len();
        let mut moves = Vec::new();
        for a in 0..n_agents {
            for o in 0..self.placed.len() {
                let here = self.object_location(o).to_string();
                if self.at[a].as_deref() != Some(here.as_str()) {
                    continue;
                }
                for c in self.s.containers_in(&here) {
                    if c != self.placed[o] {
                        moves.push((a, o, c.to_string()));
                    }
                }
            }
        }
        let kinds = if moves.is_empty() { 2 } else { 3 };
        match rng.random_range(0..kinds) {
            0 => {
                let a = rng.random_range(0..n_agents);
                let kind = match self.at[a].clone() {
                    Some(location) => EventKind::Exit { location },
                    None => {
                        let l = rng.random_range(0..self.s.locations.len());
                        EventKind::Enter { location: self.s.locations[l].clone() }
                    }
                };
                self.push(a, kind);
            }
            1 => {
                let a = rng.random_range(0..n_agents);
                let o = rng.random_range(0..self.placed.len());
                let options: Vec<String> = self.s.containers_in(self.object_location(o)).map(str::to_string).collect();
                let container = options[rng.random_range(0..options.len())].clone();
                let object = self.s.objects.get_index(o).expect("object").0.clone();
                let kind = if n_agents > 1 && rng.random_bool(0.5) {
                    let mut r = rng.random_range(0..n_agents - 1);
                    if r >= a {
                        r += 1;
                    }
                    EventKind::PrivateTell { recipient: self.agents[r].clone(), object, container }
                } else {
                    EventKind::PublicClaim { object, container }
                };
                self.push(a, kind);
            }
            _ => {
                let (a, o, to) = moves[rng.random_range(0..moves.len())].clone();
                let object = self.s.objects.get_index(o).expect("object").0.clone();
                self.push(a, EventKind::MoveObject { object, to });
            }
        }
    }

    fn bring_to(&mut self, a: usize, location: &str) {
        match self.at[a].clone() {
            Some(l) if l == location => {}
            Some(l) => {
                self.push(a, EventKind::Exit { location: l });
                self.push(a, EventKind::Enter { location: location.to_string() });
            }
            None => self.push(a, EventKind::Enter { location: location.to_string() }),
        }
    }

    /// Victim and mover meet where the first object is kept, the victim
    /// leaves and the mover relocates the object.
    fn false_belief_coda(&mut self, rng: &mut ChaCha8Rng) {
        let pair = sample(rng, self.agents.len(), 2);
        let (victim, mover) = (pair.index(0), pair.index(1));
        let here = self.object_location(0).to_string();
        self.bring_to(victim, &here);
        self.bring_to(mover, &here);
        self.push(victim, EventKind::Exit { location: here.clone() });
        let options: Vec<String> = self
            .s
            .containers_in(&here)
            .filter(|c| *c != self.placed[0])
            .map(str::to_string)
            .collect();
        let to = options[rng.random_range(0..options.len())].clone();
        let object = self.s.objects.get_index(0).expect("object").0.clone();
        self.push(mover, EventKind::MoveObject { object, to });
    }
}

/// Draws a valid scenario deterministically from `seed`.
pub fn generate_scenario(seed: u64, params: &GenParams) -> Result<OracleScenario, OracleError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locations = pick_names(&mut rng, LOCATION_POOL, params.n_locations);
    let containers = pick_names(&mut rng, CONTAINER_POOL, params.n_containers);
    let objects = pick_names(&mut rng, OBJECT_POOL, params.n_objects);
    let agents: Vec<AgentId> = pick_names(&mut rng, AGENT_POOL, params.n_agents)
        .into_iter()
        .map(|n| AgentId::new(n).expect("pool names are valid"))
        .collect();

    // The first two containers share the first location, so a move is
    // always possible there.
    let container_loc: Vec<usize> = (0..containers.len()).map(|i| i.saturating_sub(1) % locations.len()).collect();
    let mut s = OracleScenario {
        locations: locations.clone(),
        containers: containers.iter().cloned().zip(container_loc.iter().map(|&l| locations[l].clone())).collect(),
        ..Default::default()
    };
    for (i, o) in objects.iter().enumerate() {
        let c = if i == 0 && params.force_false_belief {
            rng.random_range(0..2)
        } else {
            rng.random_range(0..containers.len())
        };
        s.objects.insert(o.clone(), containers[c].clone());
    }
    let mut at = Vec::new();
    for a in &agents {
        let l = rng.random_range(0..=locations.len());
        let l = locations.get(l).cloned();
        s.agents.insert(a.clone(), l.clone());
        at.push(l);
    }
    let placed = s.objects.values().cloned().collect();
    let mut draft = Draft { s, agents, at, placed };
    for _ in 0..params.n_events {
        draft.random_event(&mut rng);
    }
    if params.force_false_belief {
        draft.false_belief_coda(&mut rng);
    }
    Ok(draft.s)
}
