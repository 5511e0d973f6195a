//! A cooperative game: two players each know a private list of friends and
//! try to name the friends they have in common. Sharing reveals one of your
//! friends to the partner; guessing a name that both lists contain marks it
//! found. Both players score the fraction of mutual friends found.

use std::sync::LazyLock;

use indexmap::IndexMap;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ActionSpace, AgentError, Environment, Goal, GoalScore, Policy, Refiner};
use crate::model::{AgentAction, AgentId, ObservationExpr, SimulationStep, Timestep, Trajectory};

const NAME_POOL: &[&str] = &["Kim", "Lee", "Max", "Noor", "Omar", "Pia", "Quinn", "Rosa", "Sam", "Tara", "Uma", "Vic"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FriendsPlayer {
    pub name: String,
    pub friends: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FriendsConfig {
    pub players: [FriendsPlayer; 2],
    pub max_rounds: usize,
}

impl Default for FriendsConfig {
    fn default() -> Self {
        let player = |name: &str, friends: &[&str]| FriendsPlayer {
            name: name.into(),
            friends: friends.iter().map(|f| f.to_string()).collect(),
        };
        Self {
            players: [player("Ada", &["Kim", "Lee", "Max"]), player("Bert", &["Noor", "Max", "Kim"])],
            max_rounds: 2,
        }
    }
}

impl FriendsConfig {
    /// Random lists of three to five friends with one to three in common.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mutual = rng.random_range(1..=3);
        let sizes = [rng.random_range(mutual.max(3)..=5), rng.random_range(mutual.max(3)..=5)];
        let total = mutual + sizes[0] - mutual + sizes[1] - mutual;
        let names: Vec<String> = sample(&mut rng, NAME_POOL.len(), total).into_iter().map(|i| NAME_POOL[i].into()).collect();
        let (common, rest) = names.split_at(mutual);
        let (own_a, own_b) = rest.split_at(sizes[0] - mutual);
        let mut lists = [common.to_vec(), common.to_vec()];
        lists[0].extend_from_slice(own_a);
        lists[1].extend_from_slice(own_b);
        for l in &mut lists {
            l.shuffle(&mut rng);
        }
        let [a, b] = lists;
        Self {
            players: [FriendsPlayer { name: "Ada".into(), friends: a }, FriendsPlayer { name: "Bert".into(), friends: b }],
            max_rounds: rng.random_range(2..=4),
        }
    }

    /// Names on both lists, in the first player's order.
    pub fn mutual(&self) -> Vec<String> {
        self.players[0].friends.iter().filter(|f| self.players[1].friends.contains(f)).cloned().collect()
    }
}

/// Public state at the start of a step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FriendsState {
    pub shared: [Vec<String>; 2],
    pub found: Vec<String>,
    pub round: usize,
    pub over: bool,
}

static SHARE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^share (\S+)$").expect("regex"));
static GUESS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^guess (\S+)$").expect("regex"));

fn arg<'a>(re: &Regex, action: &'a AgentAction) -> Option<&'a str> {
    re.captures(action.raw.trim()).map(|c| c.get(1).expect("group").as_str())
}

#[derive(Debug, Clone)]
pub struct FriendsEnv {
    cfg: FriendsConfig,
    ids: [AgentId; 2],
    mutual: Vec<String>,
}

impl FriendsEnv {
    pub fn new(cfg: FriendsConfig) -> Result<Self, AgentError> {
        let ids = [AgentId::new(&cfg.players[0].name)?, AgentId::new(&cfg.players[1].name)?];
        if ids[0] == ids[1] {
            return Err(AgentError::InvalidConfig("players must have different names".into()));
        }
        for p in &cfg.players {
            if p.friends.is_empty() || p.friends.iter().any(|f| f.is_empty() || f.contains(char::is_whitespace)) {
                return Err(AgentError::InvalidConfig(format!("{} needs a list of single-word names", p.name)));
            }
        }
        let mutual = cfg.mutual();
        if mutual.is_empty() {
            return Err(AgentError::InvalidConfig("the players have no friend in common".into()));
        }
        if cfg.max_rounds == 0 {
            return Err(AgentError::InvalidConfig("max_rounds must be at least 1".into()));
        }
        Ok(Self { cfg, ids, mutual })
    }

    pub fn config(&self) -> &FriendsConfig {
        &self.cfg
    }

    pub fn player(&self, i: usize) -> &AgentId {
        &self.ids[i]
    }

    fn index(&self, agent: &AgentId) -> Option<usize> {
        self.ids.iter().position(|a| a == agent)
    }

    fn advance(&self, mut st: FriendsState, step: &SimulationStep) -> FriendsState {
        if !st.over {
            for (i, id) in self.ids.iter().enumerate() {
                let action = &step.actions[id];
                if let Some(name) = arg(&SHARE, action) {
                    if self.cfg.players[i].friends.iter().any(|f| f == name) && !st.shared[i].iter().any(|s| s == name) {
                        st.shared[i].push(name.to_string());
                    }
                } else if let Some(name) = arg(&GUESS, action) {
                    if self.mutual.iter().any(|m| m == name) && !st.found.iter().any(|f| f == name) {
                        st.found.push(name.to_string());
                    }
                }
            }
        }
        st.round += 1;
        st.over = st.over || st.found.len() == self.mutual.len() || st.round >= self.cfg.max_rounds;
        st
    }

    /// The state at the start of step `k`.
    pub fn state_at(&self, traj: &Trajectory, k: usize) -> FriendsState {
        traj.steps()[..k.min(traj.len())].iter().fold(FriendsState::default(), |st, s| self.advance(st, s))
    }

    pub fn current(&self, traj: &Trajectory) -> FriendsState {
        self.state_at(traj, traj.len().saturating_sub(1))
    }

    fn state_text(&self, st: &FriendsState) -> String {
        let list = |names: &[String]| if names.is_empty() { "nothing".to_string() } else { names.join(", ") };
        let left = self.mutual.len() - st.found.len();
        let mut text = String::new();
        if st.over {
            text.push_str("The game is over. ");
        }
        for (i, id) in self.ids.iter().enumerate() {
            text.push_str(&format!("Shared by {id}: {}. ", list(&st.shared[i])));
        }
        let found = if st.found.is_empty() { "none".to_string() } else { st.found.join(", ") };
        text.push_str(&format!("Found mutual friends: {found}. "));
        text.push_str(&format!("{left} mutual friend{} left to find.", if left == 1 { "" } else { "s" }));
        text
    }

    fn render(&self, st: &FriendsState, previous: Option<&SimulationStep>) -> SimulationStep {
        let acted = previous.is_some_and(|p| p.actions.values().any(|a| !a.is_none));
        let obs = if acted { "<same_as_last_action /> <same_as_state />" } else { "<same_as_state />" };
        SimulationStep::new(
            Timestep::new(st.round.to_string(), st.round).expect("non-empty"),
            self.state_text(st),
            self.ids.iter().map(|a| (a.clone(), ObservationExpr::new(obs))).collect(),
            self.ids.iter().map(|a| (a.clone(), AgentAction::none())).collect(),
        )
        .expect("agent sets match")
    }
}

impl Environment for FriendsEnv {
    fn name(&self) -> &str {
        "friends"
    }

    fn agents(&self) -> Vec<AgentId> {
        self.ids.to_vec()
    }

    fn initial_step(&self) -> SimulationStep {
        self.render(&FriendsState::default(), None)
    }

    fn action_space(&self, _: &AgentId) -> ActionSpace {
        ActionSpace::free_text("One of 'share <name>', 'guess <name>' or 'pass'.", r"pass|share \S+|guess \S+")
            .expect("valid pattern")
    }

    fn goal(&self, agent: &AgentId) -> Goal {
        let i = self.index(agent).unwrap_or(0);
        Goal {
            description: format!(
                "Find every friend you have in common with {}. Your friends are {}.",
                self.ids[1 - i],
                self.cfg.players[i].friends.join(", ")
            ),
            scorer: "friends.mutual".into(),
        }
    }

    fn check_action(&self, _: &Trajectory, agent: &AgentId, action: &AgentAction) -> Result<(), String> {
        let Some(i) = self.index(agent) else { return Err(format!("{agent} does not play")) };
        let name = arg(&SHARE, action).or_else(|| arg(&GUESS, action));
        match name {
            Some(n) if !self.cfg.players[i].friends.iter().any(|f| f == n) => {
                Err(format!("{n} is not one of {agent}'s friends"))
            }
            _ => Ok(()),
        }
    }

    fn transition(&self, state: &Trajectory) -> Result<SimulationStep, AgentError> {
        let last = state.last_step().ok_or_else(|| AgentError::EnvRule("the episode has not started".into()))?;
        Ok(self.render(&self.state_at(state, state.len()), Some(last)))
    }

    fn is_terminal(&self, state: &Trajectory) -> bool {
        self.current(state).over
    }

    fn scores(&self, state: &Trajectory) -> IndexMap<AgentId, GoalScore> {
        let found = self.state_at(state, state.len()).found.len();
        let score = GoalScore::clamped(10.0 * found as f64 / self.mutual.len() as f64);
        self.ids.iter().map(|a| (a.clone(), score)).collect()
    }

    fn scripted_policy(&self, agent: &AgentId) -> Box<dyn Policy> {
        Box::new(MyopicFriendPolicy::new(self.clone(), agent).expect("agent of this environment"))
    }

    fn scripted_refiner(&self, agent: &AgentId) -> Box<dyn Refiner> {
        Box::new(FriendsRefiner::new(self.clone(), agent).expect("agent of this environment"))
    }
}

/// Guesses a name the partner has shared that is also on its own list,
/// otherwise shares its next unshared friend.
#[derive(Debug, Clone)]
pub struct MyopicFriendPolicy {
    env: FriendsEnv,
    me: usize,
}

impl MyopicFriendPolicy {
    pub fn new(env: FriendsEnv, agent: &AgentId) -> Result<Self, AgentError> {
        let me = env.index(agent).ok_or_else(|| AgentError::InvalidConfig(format!("{agent} does not play")))?;
        Ok(Self { env, me })
    }
}

impl Policy for MyopicFriendPolicy {
    fn agent(&self) -> &AgentId {
        &self.env.ids[self.me]
    }

    fn sample_action(&self, _: &ActionSpace, state: &Trajectory, _: &Goal) -> Result<AgentAction, AgentError> {
        let st = self.env.current(state);
        if st.over {
            return Ok(AgentAction::new("pass"));
        }
        let mine = &self.env.cfg.players[self.me].friends;
        let partner = 1 - self.me;
        let mut partner_shared = st.shared[partner].clone();
        let mut found = st.found.clone();
        if let Some(action) = state.last_step().map(|s| &s.actions[&self.env.ids[partner]]) {
            if let Some(n) = arg(&SHARE, action) {
                partner_shared.push(n.to_string());
            }
            if let Some(n) = arg(&GUESS, action).filter(|n| mine.iter().any(|m| m == n)) {
                found.push(n.to_string());
            }
        }
        if let Some(n) = partner_shared.iter().find(|n| mine.contains(n) && !found.contains(n)) {
            return Ok(AgentAction::new(format!("guess {n}")));
        }
        match mine.iter().find(|f| !st.shared[self.me].contains(f) && !found.contains(f)) {
            Some(f) => Ok(AgentAction::new(format!("share {f}"))),
            None => Ok(AgentAction::new("pass")),
        }
    }
}

/// Guesses a name the simulated partner is about to share when it is on
/// its own list and not yet found. Otherwise keeps an intended guess, or
/// falls back to what the myopic policy would do now: the intended action
/// was sampled on a simulated future and may skip a friend.
#[derive(Debug, Clone)]
pub struct FriendsRefiner {
    env: FriendsEnv,
    me: usize,
    now: MyopicFriendPolicy,
}

impl FriendsRefiner {
    pub fn new(env: FriendsEnv, agent: &AgentId) -> Result<Self, AgentError> {
        let now = MyopicFriendPolicy::new(env.clone(), agent)?;
        Ok(Self { me: now.me, now, env })
    }

    fn shared_in(&self, state_text: &str, who: &AgentId) -> Vec<String> {
        let needle = format!("Shared by {who}: ");
        state_text
            .split_once(&needle)
            .and_then(|(_, rest)| rest.split_once('.'))
            .map(|(names, _)| {
                if names == "nothing" {
                    Vec::new()
                } else {
                    names.split(", ").map(str::to_string).collect()
                }
            })
            .unwrap_or_default()
    }
}

impl Refiner for FriendsRefiner {
    fn refine(
        &self,
        space: &ActionSpace,
        sim_states: &[SimulationStep],
        original_state: &Trajectory,
        goal: &Goal,
        intended: &AgentAction,
    ) -> Result<AgentAction, AgentError> {
        let st = self.env.current(original_state);
        let partner = &self.env.ids[1 - self.me];
        let mine = &self.env.cfg.players[self.me].friends;
        let revealed = sim_states.iter().flat_map(|s| self.shared_in(&s.state, partner));
        for name in revealed {
            if mine.contains(&name) && !st.found.contains(&name) {
                return Ok(AgentAction::new(format!("guess {name}")));
            }
        }
        if arg(&GUESS, intended).is_some() {
            return Ok(intended.clone());
        }
        self.now.sample_action(space, original_state, goal)
    }
}
