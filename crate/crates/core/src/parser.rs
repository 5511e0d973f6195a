//! Narrative to trajectory: prompt assembly, the completion backend and a
//! validate, feedback and retry loop.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend, CompletionRequest};
use crate::model::Trajectory;
use crate::oracle::{ground_truth_trajectory, parse_scenario_narrative, OracleError, TemplateMismatchError};
use crate::schema::{decode_trajectory_value, embedded_schema, issues_to_feedback, IssueCode, ValidationIssue};
use crate::template::Template;

pub const PARSE_TEMPLATE: Template = Template::new("parse", 1, include_str!("../assets/prompts/parse_v1.txt"));

const FEEDBACK_START: &str = "Previous attempt had these issues.";
const FEEDBACK_END: &str = "Follow these format instructions:";

/// The parse template with the retry section removed, used on first
/// attempts.
static PARSE_TEMPLATE_FIRST: LazyLock<String> = LazyLock::new(|| {
    let text = PARSE_TEMPLATE.text;
    let start = text.find(FEEDBACK_START).expect("template has a feedback section");
    let end = text.find(FEEDBACK_END).expect("template has a format section");
    format!("{}{}", &text[..start], &text[end..])
});

/// Sent ahead of the schema so the model emits a whole trajectory.
pub const FORMAT_PREAMBLE: &str = "Return a JSON array of simulation step objects, one per timestep, in \
chronological order. Every step must follow the schema below. A single step object is also accepted. \
Use the same agent names in every step.\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskName {
    ToMi,
    ParaToMi,
    HiToM,
    FANToM,
    MMToMQA,
    ConfAIde,
    Generic,
}

impl TaskName {
    pub const ALL: [TaskName; 7] = [
        TaskName::ToMi,
        TaskName::ParaToMi,
        TaskName::HiToM,
        TaskName::FANToM,
        TaskName::MMToMQA,
        TaskName::ConfAIde,
        TaskName::Generic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::ToMi => "tomi",
            TaskName::ParaToMi => "paratomi",
            TaskName::HiToM => "hitom",
            TaskName::FANToM => "fantom",
            TaskName::MMToMQA => "mmtomqa",
            TaskName::ConfAIde => "confaide",
            TaskName::Generic => "generic",
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        TaskName::ALL
            .into_iter()
            .find(|t| t.as_str() == key)
            .ok_or_else(|| format!("unknown task '{s}'"))
    }
}

const EXEMPLAR_PHYSICAL: &str = include_str!("../assets/exemplars/physical.txt");
const EXEMPLAR_CONVERSATION: &str = include_str!("../assets/exemplars/conversation.txt");

/// Task-specific guidance for the parser.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseTask {
    pub name: TaskName,
    pub instructions: String,
    /// A worked example. Never taken from an evaluation set.
    pub exemplar: String,
}

impl ParseTask {
    /// The shipped instructions and exemplar for `name`.
    pub fn builtin(name: TaskName) -> Self {
        let (instructions, exemplar) = match name {
            // The paraphrased variant shares the perception rules.
            TaskName::ToMi | TaskName::ParaToMi => {
                (include_str!("../assets/prompts/instructions_tomi.txt"), EXEMPLAR_PHYSICAL)
            }
            TaskName::HiToM => (include_str!("../assets/prompts/instructions_hitom.txt"), EXEMPLAR_PHYSICAL),
            TaskName::MMToMQA => (include_str!("../assets/prompts/instructions_mmtomqa.txt"), EXEMPLAR_PHYSICAL),
            TaskName::FANToM => (include_str!("../assets/prompts/instructions_fantom.txt"), EXEMPLAR_CONVERSATION),
            TaskName::ConfAIde => {
                (include_str!("../assets/prompts/instructions_confaide.txt"), EXEMPLAR_CONVERSATION)
            }
            TaskName::Generic => ("", EXEMPLAR_PHYSICAL),
        };
        Self { name, instructions: instructions.to_string(), exemplar: exemplar.to_string() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name != TaskName::Generic && self.instructions.trim().is_empty() {
            return Err(format!("task {} needs instructions", self.name));
        }
        Ok(())
    }
}

/// Fills the parse template. Without feedback the retry section is left
/// out entirely.
pub fn build_parse_prompt(narrative: &str, task: &ParseTask, feedback: Option<&str>) -> String {
    let format_instructions = format!("{FORMAT_PREAMBLE}{}", embedded_schema());
    let template = match feedback {
        Some(_) => PARSE_TEMPLATE,
        None => Template::new(PARSE_TEMPLATE.name, PARSE_TEMPLATE.version, &PARSE_TEMPLATE_FIRST),
    };
    template
        .render(&[
            ("context", narrative),
            ("task_specific_instructions", &task.instructions),
            ("example_analysis", &task.exemplar),
            ("feedback", feedback.unwrap_or_default()),
            ("format_instructions", &format_instructions),
        ])
        .expect("all slots supplied")
}

/// One round of the retry loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseAttempt {
    pub attempt_index: usize,
    pub prompt: String,
    pub raw_response: String,
    /// Empty iff the attempt produced a valid trajectory.
    pub issues: Vec<ValidationIssue>,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("parsing failed after {} attempts", attempts.len())]
    Failed { attempts: Vec<ParseAttempt> },
    #[error("backend failed on attempt {attempt_index}: {source}")]
    Backend {
        attempt_index: usize,
        attempts: Vec<ParseAttempt>,
        #[source]
        source: BackendError,
    },
    #[error("empty narrative")]
    EmptyNarrative,
    #[error("{0}")]
    InvalidTask(String),
}

impl ParseError {
    /// Attempts made before the error, in order.
    pub fn attempts(&self) -> &[ParseAttempt] {
        match self {
            ParseError::Failed { attempts } | ParseError::Backend { attempts, .. } => attempts,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOptions {
    pub max_retries: usize,
    pub model_id: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { max_retries: 2, model_id: String::new() }
    }
}

/// Finds the JSON payload in a model response: the first fenced block that
/// parses, else the first parseable JSON value starting at a `[` or `{`.
pub fn extract_json(response: &str) -> Option<Value> {
    let mut rest = response;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        let Some(close) = after[body_start..].find("```") else { break };
        if let Ok(v) = serde_json::from_str(after[body_start..body_start + close].trim()) {
            return Some(v);
        }
        rest = &after[body_start + close + 3..];
    }
    for (i, c) in response.char_indices() {
        if c == '[' || c == '{' {
            let mut stream = serde_json::Deserializer::from_str(&response[i..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                return Some(v);
            }
        }
    }
    None
}

fn attempt_issues(raw: &str) -> Result<Trajectory, Vec<ValidationIssue>> {
    let Some(value) = extract_json(raw) else {
        return Err(vec![ValidationIssue {
            path: "$".into(),
            code: IssueCode::ParseError,
            message: "the response contains no JSON value; reply with a JSON array of steps".into(),
        }]);
    };
    let decoded = decode_trajectory_value(&value, None);
    match decoded.trajectory {
        Some(t) if decoded.issues.is_empty() => Ok(t),
        _ => Err(decoded.issues),
    }
}

/// Runs the parse loop: prompt, complete, validate, and on issues retry
/// with the latest issues as feedback, up to `max_retries` times.
///
/// The prompt depends only on the narrative, the task and prior attempts,
/// never on any downstream question.
pub fn parse_narrative<B: CompletionBackend + ?Sized>(
    narrative: &str,
    task: &ParseTask,
    backend: &B,
    opts: &ParseOptions,
) -> Result<(Trajectory, Vec<ParseAttempt>), ParseError> {
    if narrative.trim().is_empty() {
        return Err(ParseError::EmptyNarrative);
    }
    task.validate().map_err(ParseError::InvalidTask)?;
    let mut attempts: Vec<ParseAttempt> = Vec::new();
    for attempt_index in 0..=opts.max_retries {
        let feedback = attempts.last().map(|a| issues_to_feedback(&a.issues).expect("failed attempts have issues"));
        let prompt = build_parse_prompt(narrative, task, feedback.as_deref());
        let mut request = CompletionRequest::user(opts.model_id.clone(), prompt.clone());
        if backend.supports_constrained_output() {
            request.constrained_schema = Some(embedded_schema().to_string());
        }
        let raw_response = match backend.complete(&request) {
            Ok(r) => r,
            Err(source) => return Err(ParseError::Backend { attempt_index, attempts, source }),
        };
        match attempt_issues(&raw_response) {
            Ok(traj) => {
                attempts.push(ParseAttempt { attempt_index, prompt, raw_response, issues: Vec::new() });
                let traj = traj
                    .with_metadata("source_narrative", narrative)
                    .with_metadata("task", task.name.as_str())
                    .with_metadata("backend", backend.identity())
                    .with_metadata("attempts", attempts.len());
                return Ok((traj, attempts));
            }
            Err(issues) => attempts.push(ParseAttempt { attempt_index, prompt, raw_response, issues }),
        }
    }
    Err(ParseError::Failed { attempts })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReferenceParseError {
    #[error(transparent)]
    TemplateMismatch(#[from] TemplateMismatchError),
    #[error("the narrative describes an impossible world: {0}")]
    Oracle(#[from] OracleError),
}

/// Deterministic parser for narratives rendered from oracle scenarios.
///
/// The scenario is recovered from the text alone and replayed, so the
/// result equals the scenario's ground-truth trajectory exactly when the
/// rendering was faithful.
pub fn reference_parse(narrative: &str) -> Result<Trajectory, ReferenceParseError> {
    let scenario = parse_scenario_narrative(narrative)?;
    Ok(ground_truth_trajectory(&scenario)?)
}
