use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use super::{Event, EventKind, OracleError, OracleScenario};
use crate::model::AgentId;

/// Highest belief order tracked: "A thinks B thinks C thinks D thinks".
pub const MAX_ORDER: usize = 4;

/// A belief chain `[a1, .., ak]` reads "a1 believes a2 believes .. ak
/// believes". The empty chain denotes the true world state.
pub type Chain = Vec<AgentId>;

/// Name tables shared by every snapshot of one simulation.
#[derive(Debug)]
pub(crate) struct Index {
    pub agents: Vec<AgentId>,
    pub locations: Vec<String>,
    pub containers: Vec<String>,
    pub container_loc: Vec<usize>,
    pub objects: Vec<String>,
    pub object_loc: Vec<usize>,
    pub chains: Arc<Vec<Vec<usize>>>,
    pub max_order: usize,
}

impl Index {
    fn build(s: &OracleScenario, max_order: usize) -> Self {
        let locations = s.locations.clone();
        let loc_idx = |l: &str| locations.iter().position(|x| x == l).expect("validated");
        let containers: Vec<String> = s.containers.keys().cloned().collect();
        let container_loc = s.containers.values().map(|l| loc_idx(l)).collect::<Vec<_>>();
        let objects: Vec<String> = s.objects.keys().cloned().collect();
        let object_loc = s
            .objects
            .values()
            .map(|c| container_loc[s.containers.get_index_of(c).expect("validated")])
            .collect();
        let chains = chain_table(s.agents.len(), max_order);
        Self {
            agents: s.agent_ids(),
            locations,
            containers,
            container_loc,
            objects,
            object_loc,
            chains,
            max_order,
        }
    }

    fn agent(&self, a: &AgentId) -> Result<usize, OracleError> {
        self.agents
            .iter()
            .position(|x| x == a)
            .ok_or_else(|| OracleError::UnknownEntity(a.to_string()))
    }

    pub(crate) fn object(&self, o: &str) -> Result<usize, OracleError> {
        self.objects
            .iter()
            .position(|x| x == o)
            .ok_or_else(|| OracleError::UnknownEntity(o.to_string()))
    }

    /// Position of `chain` in `chains`. Chains of one length follow the
    /// shorter ones; within a length each member after the first picks one
    /// of the `n - 1` agents that differ from its predecessor.
    fn chain_position(&self, chain: &[usize]) -> usize {
        let n = self.agents.len();
        let k = chain.len();
        let shorter: usize = (1..k).map(|len| n * (n - 1).pow(len as u32 - 1)).sum();
        let mut rank = chain[0];
        for w in chain.windows(2) {
            rank = rank * (n - 1) + if w[1] < w[0] { w[1] } else { w[1] - 1 };
        }
        shorter + rank
    }

    fn slot(&self, chain: usize, object: usize) -> usize {
        chain * self.objects.len() + object
    }
}

/// Every chain over `n` agents of length 1..=max_order without immediate
/// repetition, shortest first and lexicographic within a length.
fn index_chains(n: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0..n).map(|a| vec![a]).collect();
    let mut frontier = out.clone();
    for _ in 1..max_order {
        let mut next = Vec::new();
        for chain in &frontier {
            for a in 0..n {
                if chain.last() != Some(&a) {
                    let mut c = chain.clone();
                    c.push(a);
                    next.push(c);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

type ChainTable = Arc<Vec<Vec<usize>>>;

static CHAIN_TABLES: LazyLock<Mutex<HashMap<(usize, usize), ChainTable>>> = LazyLock::new(Default::default);

/// [`index_chains`], built once per agent count and order.
fn chain_table(n: usize, max_order: usize) -> ChainTable {
    let mut tables = CHAIN_TABLES.lock().unwrap_or_else(|e| e.into_inner());
    tables.entry((n, max_order)).or_insert_with(|| Arc::new(index_chains(n, max_order))).clone()
}

/// All belief chains over `agents` up to `max_order`, in canonical order.
pub fn all_chains(agents: &[AgentId], max_order: usize) -> Vec<Chain> {
    index_chains(agents.len(), max_order)
        .into_iter()
        .map(|c| c.into_iter().map(|i| agents[i].clone()).collect())
        .collect()
}

fn collapse(chain: &[AgentId]) -> Chain {
    let mut out: Chain = Vec::with_capacity(chain.len());
    for a in chain {
        if out.last() != Some(a) {
            out.push(a.clone());
        }
    }
    out
}

/// Nested beliefs at one point in time: for every chain and object, the
/// container the chain's innermost agent is believed to think holds the
/// object, or nothing when no grounds for a belief exist yet.
#[derive(Debug, Clone)]
pub struct BeliefStore {
    index: Arc<Index>,
    values: Vec<Option<u16>>,
}

impl PartialEq for BeliefStore {
    fn eq(&self, other: &Self) -> bool {
        self.entries() == other.entries()
    }
}

impl BeliefStore {
    /// The belief held along `chain` about `object`; `None` means unknown.
    /// Immediate repetitions in the chain are collapsed.
    pub fn get(&self, chain: &[AgentId], object: &str) -> Result<Option<&str>, OracleError> {
        let chain = collapse(chain);
        if chain.is_empty() {
            return Err(OracleError::InvalidScenario("the belief store holds no order-0 entries".into()));
        }
        if chain.len() > self.index.max_order {
            return Err(OracleError::ChainTooLong { order: chain.len(), max: self.index.max_order });
        }
        let ids = chain.iter().map(|a| self.index.agent(a)).collect::<Result<Vec<_>, _>>()?;
        let o = self.index.object(object)?;
        let c = self.index.chain_position(&ids);
        Ok(self.values[self.index.slot(c, o)].map(|k| self.index.containers[k as usize].as_str()))
    }

    /// Known entries as `(chain, object, container)`, chain-major.
    pub fn entries(&self) -> Vec<(Chain, &str, &str)> {
        let idx = &self.index;
        let mut out = Vec::new();
        for (ci, chain) in idx.chains.iter().enumerate() {
            for (oi, object) in idx.objects.iter().enumerate() {
                if let Some(k) = self.values[idx.slot(ci, oi)] {
                    let names = chain.iter().map(|&a| idx.agents[a].clone()).collect();
                    out.push((names, object.as_str(), idx.containers[k as usize].as_str()));
                }
            }
        }
        out
    }

    /// Entries for chains headed by `agent` whose value differs from
    /// `before`. With no `before`, every known entry counts as changed.
    pub fn changed_for(&self, agent: &AgentId, before: Option<&BeliefStore>) -> Vec<(Chain, &str, &str)> {
        let idx = &self.index;
        let Ok(head) = idx.agent(agent) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (ci, chain) in idx.chains.iter().enumerate() {
            if chain[0] != head {
                continue;
            }
            for oi in 0..idx.objects.len() {
                let slot = idx.slot(ci, oi);
                let now = self.values[slot];
                let prev = before.and_then(|b| b.values[slot]);
                if let Some(k) = now {
                    if now != prev {
                        let names = chain.iter().map(|&a| idx.agents[a].clone()).collect();
                        out.push((names, idx.objects[oi].as_str(), idx.containers[k as usize].as_str()));
                    }
                }
            }
        }
        out
    }
}

/// The world after a given number of events.
#[derive(Debug, Clone)]
pub struct WorldSnapshot {
    pub time: usize,
    index: Arc<Index>,
    locations: Vec<Option<usize>>,
    placements: Vec<usize>,
    pub beliefs: BeliefStore,
    /// The event that produced this snapshot; `None` at time 0.
    pub event: Option<Event>,
    /// Agents that perceived `event`, in agent order.
    pub witnesses: Vec<AgentId>,
}

impl WorldSnapshot {
    pub fn agent_location(&self, agent: &AgentId) -> Option<&str> {
        let a = self.index.agent(agent).ok()?;
        self.locations[a].map(|l| self.index.locations[l].as_str())
    }

    /// Agents currently in `location`, in agent order.
    pub fn agents_in(&self, location: &str) -> Vec<&AgentId> {
        self.index
            .agents
            .iter()
            .zip(&self.locations)
            .filter(|(_, l)| l.is_some_and(|l| self.index.locations[l] == location))
            .map(|(a, _)| a)
            .collect()
    }

    /// Agents outside every location.
    pub fn agents_outside(&self) -> Vec<&AgentId> {
        self.index
            .agents
            .iter()
            .zip(&self.locations)
            .filter(|(_, l)| l.is_none())
            .map(|(a, _)| a)
            .collect()
    }

    /// Container currently holding `object`.
    pub fn placement(&self, object: &str) -> Option<&str> {
        let o = self.index.object(object).ok()?;
        Some(self.index.containers[self.placements[o]].as_str())
    }

    /// Objects with their current containers, in declaration order.
    pub fn placements(&self) -> impl Iterator<Item = (&str, &str)> {
        self.index
            .objects
            .iter()
            .zip(&self.placements)
            .map(|(o, &c)| (o.as_str(), self.index.containers[c].as_str()))
    }
}

struct Engine {
    index: Arc<Index>,
    locations: Vec<Option<usize>>,
    placements: Vec<usize>,
    values: Vec<Option<u16>>,
}

impl Engine {
    fn new(scenario: &OracleScenario, max_order: usize) -> Self {
        let index = Arc::new(Index::build(scenario, max_order));
        let locations = scenario
            .agents
            .values()
            .map(|l| l.as_ref().map(|l| index.locations.iter().position(|x| x == l).expect("validated")))
            .collect();
        let placements = scenario
            .objects
            .values()
            .map(|c| scenario.containers.get_index_of(c).expect("validated"))
            .collect();
        let values = vec![None; index.chains.len() * index.objects.len()];
        let mut engine = Self { index, locations, placements, values };
        engine.refresh();
        engine
    }

    fn snapshot(&self, time: usize, event: Option<Event>, witnesses: Vec<AgentId>) -> WorldSnapshot {
        WorldSnapshot {
            time,
            index: self.index.clone(),
            locations: self.locations.clone(),
            placements: self.placements.clone(),
            beliefs: BeliefStore { index: self.index.clone(), values: self.values.clone() },
            event,
            witnesses,
        }
    }

    /// Every chain whose members all share the object's location sees the
    /// true placement.
    fn refresh(&mut self) {
        let idx = &self.index;
        for (ci, chain) in idx.chains.iter().enumerate() {
            for oi in 0..idx.objects.len() {
                let here = idx.object_loc[oi];
                if chain.iter().all(|&a| self.locations[a] == Some(here)) {
                    self.values[ci * idx.objects.len() + oi] = Some(self.placements[oi] as u16);
                }
            }
        }
    }

    /// A claim by `speaker` that `object` is in `container`, heard by
    /// `aware`. Listeners update what they think the speaker believes, at
    /// every nesting depth whose members all heard the claim. Chains headed
    /// by the speaker never change.
    fn claim(&mut self, speaker: usize, object: usize, container: usize, aware: &[bool]) {
        let idx = &self.index;
        for (ci, chain) in idx.chains.iter().enumerate() {
            if chain.len() >= 2
                && chain[chain.len() - 1] == speaker
                && chain[0] != speaker
                && chain.iter().all(|&a| aware[a])
            {
                self.values[ci * idx.objects.len() + object] = Some(container as u16);
            }
        }
    }

    fn apply(&mut self, i: usize, event: &Event) -> Result<Vec<AgentId>, OracleError> {
        let bad = |reason: String| OracleError::InvalidEvent { index: i, reason };
        let idx = self.index.clone();
        let n = idx.agents.len();
        let actor = idx.agent(&event.actor).map_err(|e| bad(e.to_string()))?;
        let loc_of = |l: &str| idx.locations.iter().position(|x| x == l);
        let container_of = |c: &str| idx.containers.iter().position(|x| x == c);
        let object_of = |o: &str| idx.objects.iter().position(|x| x == o);
        let where_now = self.locations[actor];
        let witnesses: Vec<usize> = match &event.kind {
            EventKind::Enter { location } => {
                let l = loc_of(location).ok_or_else(|| bad(format!("unknown location '{location}'")))?;
                if let Some(cur) = where_now {
                    return Err(bad(format!(
                        "{} cannot enter the {location} while in the {}",
                        event.actor, idx.locations[cur]
                    )));
                }
                self.locations[actor] = Some(l);
                (0..n).filter(|&a| self.locations[a] == Some(l)).collect()
            }
            EventKind::Exit { location } => {
                let l = loc_of(location).ok_or_else(|| bad(format!("unknown location '{location}'")))?;
                if where_now != Some(l) {
                    return Err(bad(format!("{} is not in the {location}", event.actor)));
                }
                let seen = (0..n).filter(|&a| self.locations[a] == Some(l)).collect();
                self.locations[actor] = None;
                seen
            }
            EventKind::MoveObject { object, to } => {
                let o = object_of(object).ok_or_else(|| bad(format!("unknown object '{object}'")))?;
                let c = container_of(to).ok_or_else(|| bad(format!("unknown container '{to}'")))?;
                let here = idx.object_loc[o];
                if where_now != Some(here) {
                    return Err(bad(format!("{} is not where the {object} is", event.actor)));
                }
                if idx.container_loc[c] != here {
                    return Err(bad(format!("the {to} is not in the {}", idx.locations[here])));
                }
                if self.placements[o] == c {
                    return Err(bad(format!("the {object} is already in the {to}")));
                }
                self.placements[o] = c;
                (0..n).filter(|&a| self.locations[a] == Some(here)).collect()
            }
            EventKind::PublicClaim { object, container } | EventKind::PrivateTell { object, container, .. } => {
                let o = object_of(object).ok_or_else(|| bad(format!("unknown object '{object}'")))?;
                let c = container_of(container).ok_or_else(|| bad(format!("unknown container '{container}'")))?;
                if idx.container_loc[c] != idx.object_loc[o] {
                    return Err(bad(format!("the {container} is not where the {object} is kept")));
                }
                let aware: Vec<bool> = match &event.kind {
                    EventKind::PrivateTell { recipient, .. } => {
                        let r = idx.agent(recipient).map_err(|e| bad(e.to_string()))?;
                        if r == actor {
                            return Err(bad(format!("{} cannot privately tell themself", event.actor)));
                        }
                        (0..n).map(|a| a == actor || a == r).collect()
                    }
                    _ => vec![true; n],
                };
                self.claim(actor, o, c, &aware);
                (0..n).filter(|&a| aware[a]).collect()
            }
        };
        self.refresh();
        Ok(witnesses.into_iter().map(|a| idx.agents[a].clone()).collect())
    }
}

/// Replays the scenario, returning one snapshot for the initial world and
/// one after each event.
pub fn simulate(scenario: &OracleScenario) -> Result<Vec<WorldSnapshot>, OracleError> {
    simulate_with_order(scenario, MAX_ORDER)
}

/// [`simulate`] tracking beliefs only up to `max_order`.
pub fn simulate_with_order(scenario: &OracleScenario, max_order: usize) -> Result<Vec<WorldSnapshot>, OracleError> {
    if max_order == 0 || max_order > MAX_ORDER {
        return Err(OracleError::ChainTooLong { order: max_order, max: MAX_ORDER });
    }
    scenario.validate()?;
    let mut engine = Engine::new(scenario, max_order);
    let mut out = Vec::with_capacity(scenario.events.len() + 1);
    out.push(engine.snapshot(0, None, Vec::new()));
    for (i, event) in scenario.events.iter().enumerate() {
        let witnesses = engine.apply(i, event)?;
        out.push(engine.snapshot(i + 1, Some(event.clone()), witnesses));
    }
    Ok(out)
}

/// The belief held along `chain` about `object` after `t` events. An empty
/// chain yields the true placement; `None` means unknown.
pub fn query_belief(
    snapshots: &[WorldSnapshot],
    chain: &[AgentId],
    object: &str,
    t: usize,
) -> Result<Option<String>, OracleError> {
    let snap = snapshots
        .get(t)
        .ok_or(OracleError::TimeOutOfRange { t, len: snapshots.len() })?;
    for a in chain {
        snap.index.agent(a)?;
    }
    if chain.is_empty() {
        return snap
            .placement(object)
            .map(|c| Some(c.to_string()))
            .ok_or_else(|| OracleError::UnknownEntity(object.to_string()));
    }
    Ok(snap.beliefs.get(chain, object)?.map(str::to_string))
}
