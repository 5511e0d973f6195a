//! Special-tag grammar and resolution.
//!
//! Grammar, whitespace-tolerant inside the brackets:
//!
//! ```text
//! <same_as_state />
//! <same_as_last_action />
//! <same_as_last_action_X />      X a positive decimal integer, 1-based agent index
//! <mental_state>TEXT</mental_state>
//! ```
//!
//! Tags may be mixed with free text. Segments are resolved left to right
//! and the external pieces are joined with single spaces.

use std::sync::LazyLock;

use regex::Regex;

use crate::model::{is_none_text, AgentId, CoreError, ResolvedObservation, SimulationStep};

static SAME_AS_STATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^<\s*same_as_state\s*/\s*>").unwrap());
static SAME_AS_LAST_ACTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^<\s*same_as_last_action(?:_([0-9]+))?\s*/\s*>").unwrap());
static MENTAL_OPEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^<\s*mental_state\s*>").unwrap());
static MENTAL_CLOSE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<\s*/\s*mental_state\s*>").unwrap());
static TAG_LIKE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^<\s*/?\s*(same_as|mental_state)").unwrap());
static ANY_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<\s*/?\s*(same_as|mental_state)").unwrap());

/// One lexical piece of an observation expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    SameAsState,
    /// `None` is the bare form covering every agent.
    SameAsLastAction(Option<usize>),
    Mental(String),
    Text(String),
}

/// True when `text` contains anything that looks like a special tag.
pub fn contains_special_tag(text: &str) -> bool {
    ANY_TAG.is_match(text)
}

fn malformed(text: &str, reason: impl Into<String>) -> CoreError {
    CoreError::MalformedTag {
        text: text.to_string(),
        reason: reason.into(),
    }
}

/// Splits an observation expression into tag and text segments.
pub fn parse_segments(raw: &str) -> Result<Vec<Segment>, CoreError> {
    let mut segments = Vec::new();
    let mut text = String::new();
    let mut rest = raw;

    fn flush(text: &mut String, segments: &mut Vec<Segment>) {
        let t = text.trim();
        if !t.is_empty() {
            segments.push(Segment::Text(t.to_string()));
        }
        text.clear();
    }

    while let Some(pos) = rest.find('<') {
        text.push_str(&rest[..pos]);
        let at = &rest[pos..];
        if let Some(m) = SAME_AS_STATE.find(at) {
            flush(&mut text, &mut segments);
            segments.push(Segment::SameAsState);
            rest = &at[m.end()..];
        } else if let Some(caps) = SAME_AS_LAST_ACTION.captures(at) {
            flush(&mut text, &mut segments);
            let index = match caps.get(1) {
                None => None,
                Some(d) => {
                    let n: usize = d
                        .as_str()
                        .parse()
                        .map_err(|_| malformed(raw, format!("agent index {:?} is not a number", d.as_str())))?;
                    if n == 0 {
                        return Err(malformed(raw, "agent index must be a positive integer"));
                    }
                    Some(n)
                }
            };
            segments.push(Segment::SameAsLastAction(index));
            rest = &at[caps.get(0).unwrap().end()..];
        } else if let Some(open) = MENTAL_OPEN.find(at) {
            flush(&mut text, &mut segments);
            let body = &at[open.end()..];
            let close = MENTAL_CLOSE
                .find(body)
                .ok_or_else(|| malformed(raw, "unclosed <mental_state> tag"))?;
            let content = body[..close.start()].trim();
            if content.is_empty() {
                return Err(malformed(raw, "empty <mental_state> content"));
            }
            if contains_special_tag(content) {
                return Err(malformed(raw, "tags nested inside <mental_state>"));
            }
            segments.push(Segment::Mental(content.to_string()));
            rest = &body[close.end()..];
        } else if TAG_LIKE.is_match(at) {
            let snippet: String = at.chars().take(40).collect();
            return Err(malformed(raw, format!("unrecognized tag near {snippet:?}")));
        } else {
            text.push('<');
            rest = &at[1..];
        }
    }
    text.push_str(rest);
    flush(&mut text, &mut segments);
    Ok(segments)
}

fn render_action(agent: &AgentId, action: &str) -> String {
    format!("{agent}: {action}")
}

fn substitute_last_action(
    index: Option<usize>,
    previous: Option<&SimulationStep>,
    agents: &[AgentId],
    observer: &AgentId,
    raw: &str,
) -> Result<Option<String>, CoreError> {
    let previous = previous.ok_or_else(|| CoreError::TagAtOrigin {
        agent: observer.to_string(),
    })?;
    let text = match index {
        Some(i) => {
            let actor = agents.get(i - 1).ok_or(CoreError::UnknownAgentIndex {
                index: i,
                count: agents.len(),
            })?;
            let action = previous
                .actions
                .get(actor)
                .ok_or_else(|| CoreError::UnknownAgent(actor.to_string()))?;
            Some(render_action(actor, &action.raw))
        }
        None => {
            let parts: Vec<String> = agents
                .iter()
                .filter_map(|a| previous.actions.get(a).filter(|x| !x.is_none).map(|x| render_action(a, &x.raw)))
                .collect();
            (!parts.is_empty()).then(|| parts.join("; "))
        }
    };
    if let Some(t) = &text {
        if contains_special_tag(t) {
            return Err(malformed(raw, "substituted action text contains a special tag"));
        }
    }
    Ok(text)
}

/// Resolves last-action tags inside a state text. States may only use the
/// last-action forms; other tags are rejected.
pub fn resolve_state(step: &SimulationStep, history: &[SimulationStep], agents: &[AgentId]) -> Result<String, CoreError> {
    if !contains_special_tag(&step.state) {
        return Ok(step.state.clone());
    }
    let system = AgentId::new("state").expect("valid literal");
    let mut pieces = Vec::new();
    for seg in parse_segments(&step.state)? {
        match seg {
            Segment::Text(t) => pieces.push(t),
            Segment::SameAsLastAction(i) => {
                if let Some(t) = substitute_last_action(i, history.last(), agents, &system, &step.state)? {
                    pieces.push(t);
                }
            }
            Segment::SameAsState | Segment::Mental(_) => {
                return Err(malformed(&step.state, "only last-action tags are allowed in a state"));
            }
        }
    }
    Ok(pieces.join(" "))
}

/// Resolves `agent`'s observation in `step`.
///
/// `history` holds every step before `step`, in order. Only the current
/// state and the actions of the immediately preceding step are read.
pub fn resolve_tags(
    step: &SimulationStep,
    history: &[SimulationStep],
    agents: &[AgentId],
    agent: &AgentId,
) -> Result<ResolvedObservation, CoreError> {
    let obs = step
        .observations
        .get(agent)
        .ok_or_else(|| CoreError::UnknownAgent(agent.to_string()))?;
    if is_none_text(&obs.raw) {
        return Ok(ResolvedObservation::none());
    }
    let mut external = Vec::new();
    let mut mental = Vec::new();
    for seg in parse_segments(&obs.raw)? {
        match seg {
            Segment::SameAsState => external.push(resolve_state(step, history, agents)?),
            Segment::SameAsLastAction(i) => {
                if let Some(t) = substitute_last_action(i, history.last(), agents, agent, &obs.raw)? {
                    external.push(t);
                }
            }
            Segment::Mental(m) => mental.push(m),
            Segment::Text(t) => external.push(t),
        }
    }
    Ok(ResolvedObservation {
        external: external.join(" "),
        mental: (!mental.is_empty()).then(|| mental.join(" ")),
        is_none: false,
    })
}
