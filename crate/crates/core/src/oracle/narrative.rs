use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use thiserror::Error;

use super::{Event, EventKind, OracleScenario};
use crate::model::AgentId;

/// Surface form of a rendered narrative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RenderStyle {
    /// One fixed template per sentence kind.
    #[default]
    Plain,
    /// Each sentence draws from the plain template and its paraphrases.
    Paraphrase { seed: u64 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("sentence {index} does not match the narrative grammar: {sentence:?}")]
pub struct TemplateMismatchError {
    pub index: usize,
    pub sentence: String,
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

struct Picker(Option<ChaCha8Rng>);

impl Picker {
    fn pick(&mut self, variants: usize) -> usize {
        match &mut self.0 {
            Some(rng) => rng.random_range(0..variants),
            None => 0,
        }
    }
}

fn placement_sentences(s: &OracleScenario, p: &mut Picker) -> Vec<String> {
    let mut out = Vec::new();
    for l in &s.locations {
        out.push(match p.pick(2) {
            0 => format!("There is {} {l}.", article(l)),
            _ => format!("One of the places is the {l}."),
        });
    }
    for (c, l) in &s.containers {
        out.push(match p.pick(2) {
            0 => format!("The {l} has {} {c}.", article(c)),
            _ => format!("There is {} {c} in the {l}.", article(c)),
        });
    }
    for (o, c) in &s.objects {
        out.push(match p.pick(2) {
            0 => format!("The {o} is in the {c}."),
            _ => format!("The {o} sits inside the {c}."),
        });
    }
    for (agent, l) in &s.agents {
        out.push(match (l, p.pick(2)) {
            (Some(l), 0) => format!("{agent} is in the {l}."),
            (Some(l), _) => format!("{agent} is standing in the {l}."),
            (None, 0) => format!("{agent} is outside."),
            (None, _) => format!("{agent} is waiting outside."),
        });
    }
    out
}

fn event_sentence(e: &Event, p: &mut Picker) -> String {
    let a = &e.actor;
    match &e.kind {
        EventKind::Enter { location } => match p.pick(3) {
            0 => format!("{a} entered the {location}."),
            1 => format!("{a} walked into the {location}."),
            _ => format!("{a} came into the {location}."),
        },
        EventKind::Exit { location } => match p.pick(3) {
            0 => format!("{a} exited the {location}."),
            1 => format!("{a} left the {location}."),
            _ => format!("{a} walked out of the {location}."),
        },
        EventKind::MoveObject { object, to } => match p.pick(3) {
            0 => format!("{a} moved the {object} to the {to}."),
            1 => format!("{a} put the {object} in the {to}."),
            _ => format!("{a} transferred the {object} to the {to}."),
        },
        EventKind::PublicClaim { object, container } => match p.pick(3) {
            0 => format!("{a} said publicly that the {object} is in the {container}."),
            1 => format!("{a} announced to everyone that the {object} is in the {container}."),
            _ => format!("{a} told everyone the {object} is in the {container}."),
        },
        EventKind::PrivateTell { recipient, object, container } => match p.pick(3) {
            0 => format!("{a} privately told {recipient} that the {object} is in the {container}."),
            1 => format!("{a} whispered to {recipient} that the {object} is in the {container}."),
            _ => format!("In private, {a} told {recipient} the {object} is in the {container}."),
        },
    }
}

/// Renders the scenario with the plain templates.
pub fn render_narrative(scenario: &OracleScenario) -> String {
    render_narrative_with(scenario, RenderStyle::Plain)
}

/// Renders a placement paragraph followed by one sentence per event.
pub fn render_narrative_with(scenario: &OracleScenario, style: RenderStyle) -> String {
    let mut picker = Picker(match style {
        RenderStyle::Plain => None,
        RenderStyle::Paraphrase { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
    });
    let mut text = placement_sentences(scenario, &mut picker).join(" ");
    if !scenario.events.is_empty() {
        let events: Vec<String> = scenario.events.iter().map(|e| event_sentence(e, &mut picker)).collect();
        text.push_str("\n\n");
        text.push_str(&events.join(" "));
    }
    text
}

#[derive(Clone, Copy)]
enum Form {
    Location,
    Container,
    Object,
    AgentAt,
    AgentOutside,
    Enter,
    Exit,
    Move,
    Public,
    Private,
}

static GRAMMAR: LazyLock<Vec<(Regex, Form)>> = LazyLock::new(|| {
    const W: &str = "([A-Za-z][A-Za-z0-9_-]*)";
    let rules: &[(&str, Form)] = &[
        ("There is an? W", Form::Location),
        ("One of the places is the W", Form::Location),
        ("The W has an? W", Form::Container),
        ("There is an? W in the W", Form::Container),
        ("The W is in the W", Form::Object),
        ("The W sits inside the W", Form::Object),
        ("W is in the W", Form::AgentAt),
        ("W is standing in the W", Form::AgentAt),
        ("W is outside", Form::AgentOutside),
        ("W is waiting outside", Form::AgentOutside),
        ("W entered the W", Form::Enter),
        ("W walked into the W", Form::Enter),
        ("W came into the W", Form::Enter),
        ("W exited the W", Form::Exit),
        ("W left the W", Form::Exit),
        ("W walked out of the W", Form::Exit),
        ("W moved the W to the W", Form::Move),
        ("W put the W in the W", Form::Move),
        ("W transferred the W to the W", Form::Move),
        ("W said publicly that the W is in the W", Form::Public),
        ("W announced to everyone that the W is in the W", Form::Public),
        ("W told everyone the W is in the W", Form::Public),
        ("W privately told W that the W is in the W", Form::Private),
        ("W whispered to W that the W is in the W", Form::Private),
        ("In private, W told W the W is in the W", Form::Private),
    ];
    rules
        .iter()
        .map(|(p, f)| (Regex::new(&format!("^{}$", p.replace('W', W))).expect("valid grammar"), *f))
        .collect()
});

/// Recovers the scenario from a narrative in either rendering style.
///
/// Sentences may appear in any order; events keep their relative order.
/// The result is not validated.
pub fn parse_scenario_narrative(narrative: &str) -> Result<OracleScenario, TemplateMismatchError> {
    let mut s = OracleScenario::default();
    let mut rest = narrative.trim();
    let mut index = 0;
    while !rest.is_empty() {
        let mismatch = |sentence: &str| TemplateMismatchError { index, sentence: sentence.to_string() };
        let Some(end) = rest.find('.') else {
            return Err(mismatch(rest));
        };
        let sentence = rest[..end].trim();
        rest = rest[end + 1..].trim_start();
        let (caps, form) = GRAMMAR
            .iter()
            .find_map(|(re, form)| re.captures(sentence).map(|c| (c, *form)))
            .ok_or_else(|| mismatch(sentence))?;
        let g = |i: usize| caps[i].to_string();
        let agent = |i: usize| AgentId::new(&caps[i]).map_err(|_| mismatch(sentence));
        match form {
            Form::Location => s.locations.push(g(1)),
            Form::Container => {
                // "The kitchen has a box" names the location first.
                let (c, l) = if sentence.starts_with("The ") { (g(2), g(1)) } else { (g(1), g(2)) };
                s.containers.insert(c, l);
            }
            Form::Object => {
                s.objects.insert(g(1), g(2));
            }
            Form::AgentAt => {
                s.agents.insert(agent(1)?, Some(g(2)));
            }
            Form::AgentOutside => {
                s.agents.insert(agent(1)?, None);
            }
            Form::Enter => s.events.push(Event { actor: agent(1)?, kind: EventKind::Enter { location: g(2) } }),
            Form::Exit => s.events.push(Event { actor: agent(1)?, kind: EventKind::Exit { location: g(2) } }),
            Form::Move => s.events.push(Event {
                actor: agent(1)?,
                kind: EventKind::MoveObject { object: g(2), to: g(3) },
            }),
            Form::Public => s.events.push(Event {
                actor: agent(1)?,
                kind: EventKind::PublicClaim { object: g(2), container: g(3) },
            }),
            Form::Private => s.events.push(Event {
                actor: agent(1)?,
                kind: EventKind::PrivateTell { recipient: agent(2)?, object: g(3), container: g(4) },
            }),
        }
        index += 1;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use indexmap::IndexMap;

    fn agents_from(pairs: &[(&str, Option<&str>)]) -> IndexMap<AgentId, Option<String>> {
        pairs.iter().map(|(n, l)| (a(n), l.map(str::to_string))).collect()
    }

    #[test]
    fn plain_rendering() {
        let text = render_narrative(&sally_anne());
        assert_eq!(
            text,
            "There is a room. The room has a basket. The room has a box. The marble is in the basket. \
             Sally is in the room. Anne is in the room.\n\nSally exited the room. Anne moved the marble to the box."
        );
        let mut enter = sally_anne();
        enter.agents = agents_from(&[("Sally", None)]);
        enter.events = vec![Event::new(&a("Sally"), EventKind::Enter { location: "room".into() })];
        assert!(render_narrative(&enter).ends_with("\n\nSally entered the room."));
    }

    #[test]
    fn empty_events_render_only_the_placement() {
        let mut s = sally_anne();
        s.events.clear();
        assert!(!render_narrative(&s).contains('\n'));
    }

    #[test]
    fn both_styles_parse_back() {
        let mut s = sally_anne();
        s.events.push(Event::new(
            &a("Anne"),
            EventKind::PrivateTell { recipient: a("Sally"), object: "marble".into(), container: "basket".into() },
        ));
        s.events.push(Event::new(&a("Sally"), EventKind::Enter { location: "room".into() }));
        s.events.push(Event::new(&a("Sally"), EventKind::PublicClaim { object: "marble".into(), container: "box".into() }));
        assert_eq!(parse_scenario_narrative(&render_narrative(&s)).unwrap(), s);
        let mut distinct = std::collections::HashSet::new();
        for seed in 0..20 {
            let text = render_narrative_with(&s, RenderStyle::Paraphrase { seed });
            assert_eq!(parse_scenario_narrative(&text).unwrap(), s, "{text}");
            distinct.insert(text);
        }
        assert!(distinct.len() > 10);
    }

    #[test]
    fn vowel_names_take_an() {
        let mut s = sally_anne();
        s.containers = [("envelope".to_string(), "room".to_string())].into_iter().collect();
        s.objects = [("apple".to_string(), "envelope".to_string())].into_iter().collect();
        s.events.clear();
        let text = render_narrative(&s);
        assert!(text.contains("has an envelope"));
        assert_eq!(parse_scenario_narrative(&text).unwrap(), s);
    }

    #[test]
    fn unknown_sentence_is_reported() {
        let err = parse_scenario_narrative("There is a room. Sally sneezed loudly. Anne left the room.").unwrap_err();
        assert_eq!(err, TemplateMismatchError { index: 1, sentence: "Sally sneezed loudly".into() });
        assert!(parse_scenario_narrative("There is a room. Trailing words").is_err());
    }
}
