use super::{BackendError, BackendKind, CompletionBackend, CompletionRequest};
use crate::oracle::{
    answer_from_trajectory, parse_belief_question, parse_scenario_narrative, simulate, UNKNOWN_ANSWER,
};
use crate::parser::reference_parse;
use crate::schema::{decode_trajectory, encode_trajectory, WireForm};

const CONTEXT_OPEN: &str = "#### Context: ";
const CONTEXT_CLOSE: &str = "\n\n#### Task specific instructions:";
const EXTRA_OPEN: &str = "(to help you better understand the meeting)\n";
const TASK_OPEN: &str = "\n## Task\n";

/// A deterministic stand-in for a model, for narratives rendered from
/// oracle scenarios.
///
/// Parse prompts are answered with the reference parse of the context.
/// Question prompts are answered by a rule-based reader: with a trajectory
/// in the extra information it reads beliefs from agents' remembered mental
/// states; without one it falls back to the true final placement, the way a
/// reader blind to perception would.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    identity: String,
}

impl Default for OracleBackend {
    fn default() -> Self {
        Self { identity: "oracle".to_string() }
    }
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = text[start..].find(close)? + start;
    Some(&text[start..end])
}

fn option_answer(options: &[String], answer: &str) -> String {
    match options.iter().position(|o| o.eq_ignore_ascii_case(answer)) {
        Some(i) => format!("{}. {}", (b'A' + i as u8) as char, options[i]),
        None => answer.to_string(),
    }
}

impl OracleBackend {
    pub fn new() -> Self {
        Self::default()
    }

    fn answer_parse(&self, prompt: &str) -> Result<String, BackendError> {
        let context = between(prompt, CONTEXT_OPEN, CONTEXT_CLOSE)
            .ok_or_else(|| BackendError::BadRequest("parse prompt has no context section".into()))?;
        let traj = reference_parse(context).map_err(|e| BackendError::BadRequest(e.to_string()))?;
        Ok(encode_trajectory(&traj, WireForm::ObjectMap))
    }

    fn answer_question(&self, prompt: &str) -> Result<String, BackendError> {
        let context = between(prompt, "## Context\n", "\n## Extra Info\n").unwrap_or_default();
        let extra = between(prompt, EXTRA_OPEN, TASK_OPEN).unwrap_or_default().trim();
        let task = prompt.split_once(TASK_OPEN).map(|(_, t)| t).unwrap_or_default();
        let Some((chain, object, options)) = parse_belief_question(task) else {
            return Ok(UNKNOWN_ANSWER.to_string());
        };
        let answer = if extra.is_empty() || extra == "(none)" {
            parse_scenario_narrative(context)
                .ok()
                .and_then(|s| {
                    let snaps = simulate(&s).ok()?;
                    snaps.last()?.placement(&object).map(str::to_string)
                })
                .unwrap_or_else(|| UNKNOWN_ANSWER.to_string())
        } else {
            match decode_trajectory(extra, None).trajectory {
                Some(traj) => answer_from_trajectory(&traj, &chain, &object).unwrap_or_else(|_| UNKNOWN_ANSWER.to_string()),
                None => UNKNOWN_ANSWER.to_string(),
            }
        };
        Ok(option_answer(&options, &answer))
    }
}

impl CompletionBackend for OracleBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn kind(&self) -> BackendKind {
        BackendKind::OracleBacked
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.check()?;
        let prompt = request.last_user_content().unwrap_or_default();
        if prompt.contains(CONTEXT_OPEN) && prompt.contains(CONTEXT_CLOSE) {
            self.answer_parse(prompt)
        } else if prompt.starts_with("## Context\n") {
            self.answer_question(prompt)
        } else {
            Err(BackendError::BadRequest("the oracle answers only parse and question prompts".into()))
        }
    }
}
