use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::sim::{all_chains, query_belief, simulate, Chain};
use super::{OracleError, OracleScenario};
use crate::memory::reconstruct_memory;
use crate::model::{AgentId, CoreError, Trajectory};

/// Answer option for a belief that has no grounds.
pub const UNKNOWN_ANSWER: &str = "unknown";

/// A multiple-choice question about where someone thinks an object is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefQuestion {
    /// Empty for a question about the true placement.
    pub chain: Chain,
    pub object: String,
    pub options: Vec<String>,
    pub gold: usize,
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

impl BeliefQuestion {
    /// The question sentence, e.g. "Where does Anne think Sally thinks the
    /// marble is?".
    pub fn question(&self) -> String {
        match self.chain.split_first() {
            None => format!("Where is the {} really?", self.object),
            Some((head, rest)) => {
                let mut q = format!("Where does {head} think ");
                for a in rest {
                    q.push_str(&format!("{a} thinks "));
                }
                q.push_str(&format!("the {} is?", self.object));
                q
            }
        }
    }

    /// Question, lettered options and the answer instruction.
    pub fn prompt_text(&self) -> String {
        let mut text = self.question();
        text.push_str("\nOptions:");
        for (i, o) in self.options.iter().enumerate() {
            text.push_str(&format!("\n{}. {o}", letter(i)));
        }
        text.push_str("\nAnswer with the letter of the correct option.");
        text
    }

    pub fn gold_answer(&self) -> &str {
        &self.options[self.gold]
    }

    pub fn order(&self) -> usize {
        self.chain.len()
    }
}

/// Questions about the final world of `scenario`: the true placement of
/// every object, then every belief chain up to `max_order`. Options are the
/// containers where the object is kept, plus "unknown".
pub fn belief_questions(scenario: &OracleScenario, max_order: usize) -> Result<Vec<BeliefQuestion>, OracleError> {
    let snaps = simulate(scenario)?;
    let t = snaps.len() - 1;
    let mut chains = vec![Vec::new()];
    chains.extend(all_chains(&scenario.agent_ids(), max_order));
    let mut out = Vec::new();
    for chain in &chains {
        for object in scenario.objects.keys() {
            let here = scenario.object_location(object).expect("validated");
            let mut options: Vec<String> = scenario.containers_in(here).map(str::to_string).collect();
            options.push(UNKNOWN_ANSWER.to_string());
            let answer = query_belief(&snaps, chain, object, t)?.unwrap_or_else(|| UNKNOWN_ANSWER.to_string());
            let gold = options.iter().position(|o| *o == answer).expect("answers are among the options");
            out.push(BeliefQuestion { chain: chain.clone(), object: object.clone(), options, gold });
        }
    }
    Ok(out)
}

static REALITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^Where is the (\S+) really\?$").expect("regex"));
static NESTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^Where does (\S+) think ((?:\S+ thinks )*)the (\S+) is\?$").expect("regex"));
static OPTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([A-Z])\. (.+)$").expect("regex"));

/// Recovers chain, object and options from a question rendered by
/// [`BeliefQuestion::prompt_text`]. Lines that match neither form are
/// ignored.
pub fn parse_belief_question(text: &str) -> Option<(Chain, String, Vec<String>)> {
    let mut found = None;
    let mut options = Vec::new();
    for line in text.lines().map(str::trim) {
        if found.is_none() {
            if let Some(c) = REALITY.captures(line) {
                found = Some((Vec::new(), c[1].to_string()));
                continue;
            }
            if let Some(c) = NESTED.captures(line) {
                let mut chain = vec![AgentId::new(&c[1]).ok()?];
                for name in c[2].split(" thinks ").map(str::trim).filter(|s| !s.is_empty()) {
                    chain.push(AgentId::new(name).ok()?);
                }
                found = Some((chain, c[3].to_string()));
                continue;
            }
        }
        if let Some(c) = OPTION.captures(line) {
            options.push(c[2].trim().to_string());
        }
    }
    found.map(|(chain, object)| (chain, object, options))
}

static BELIEF: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^I believe ((?:\S+ believes )*)the (\S+) is in the (\S+)$").expect("regex")
});

/// Beliefs `agent` has voiced in its mental state, oldest first, as
/// `(chain tail, object, container)`. The tail omits `agent` itself.
pub fn read_mental_beliefs(traj: &Trajectory, agent: &AgentId) -> Result<Vec<(Chain, String, String)>, CoreError> {
    let memory = reconstruct_memory(traj, agent, traj.len())?;
    let mut out = Vec::new();
    for (_, obs) in memory.observations() {
        let Some(mental) = &obs.mental else { continue };
        for sentence in mental.split(';').map(str::trim) {
            let Some(c) = BELIEF.captures(sentence) else { continue };
            let tail = c[1]
                .split(" believes ")
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .filter_map(|n| AgentId::new(n).ok())
                .collect();
            out.push((tail, c[2].to_string(), c[3].to_string()));
        }
    }
    Ok(out)
}

/// Answers a belief question by reading the trajectory alone: the true
/// placement from the last state, nested beliefs from the chain head's
/// remembered mental states (latest wins).
pub fn answer_from_trajectory(traj: &Trajectory, chain: &[AgentId], object: &str) -> Result<String, CoreError> {
    let mut collapsed: Chain = Vec::new();
    for a in chain {
        if collapsed.last() != Some(a) {
            collapsed.push(a.clone());
        }
    }
    let Some((head, tail)) = collapsed.split_first() else {
        let Some(last) = traj.len().checked_sub(1) else {
            return Ok(UNKNOWN_ANSWER.to_string());
        };
        let state = traj.resolved_state(last)?;
        let needle = format!("The {object} is in the ");
        return Ok(state
            .split_once(&needle)
            .and_then(|(_, rest)| rest.split('.').next())
            .map(str::to_string)
            .unwrap_or_else(|| UNKNOWN_ANSWER.to_string()));
    };
    if !traj.contains_agent(head) {
        return Err(CoreError::UnknownAgent(head.to_string()));
    }
    Ok(read_mental_beliefs(traj, head)?
        .into_iter()
        .rev()
        .find(|(t, o, _)| t.as_slice() == tail && o == object)
        .map(|(_, _, c)| c)
        .unwrap_or_else(|| UNKNOWN_ANSWER.to_string()))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::ground_truth_trajectory;
    use super::*;

    #[test]
    fn questions_and_gold() {
        let qs = belief_questions(&sally_anne(), 2).unwrap();
        assert_eq!(qs.len(), 1 + 2 + 2);
        assert_eq!(qs[0].question(), "Where is the marble really?");
        assert_eq!(qs[0].gold_answer(), "box");
        assert_eq!(qs[1].question(), "Where does Sally think the marble is?");
        assert_eq!(qs[1].gold_answer(), "basket");
        assert_eq!(qs[4].question(), "Where does Anne think Sally thinks the marble is?");
        assert_eq!(qs[4].options, ["basket", "box", "unknown"]);
    }

    #[test]
    fn prompt_text_parses_back() {
        for q in belief_questions(&sally_anne(), 3).unwrap() {
            let (chain, object, options) = parse_belief_question(&q.prompt_text()).unwrap();
            assert_eq!((chain, object, options), (q.chain.clone(), q.object.clone(), q.options.clone()));
        }
        assert!(parse_belief_question("What is the capital of France?").is_none());
    }

    #[test]
    fn reader_matches_gold_on_sally_anne() {
        let s = sally_anne();
        let traj = ground_truth_trajectory(&s).unwrap();
        for q in belief_questions(&s, 4).unwrap() {
            assert_eq!(answer_from_trajectory(&traj, &q.chain, &q.object).unwrap(), q.gold_answer(), "{}", q.question());
        }
    }
}
