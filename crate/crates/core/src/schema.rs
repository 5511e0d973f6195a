//! Wire forms for simulation steps and trajectories, validation and retry
//! feedback.
//!
//! Two step encodings are accepted: the object form, where `observations`
//! and `actions` map agent names to text, and the list form, where both are
//! arrays of `"agent_name: text"` entries. Trajectory files
//! (`*.s3ap.json`) wrap steps as `{"agents": [...], "steps": [...],
//! "metadata": {...}}`.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::model::{AgentAction, AgentId, ObservationExpr, SimulationStep, Timestep, Trajectory};
use crate::tags;

const SCHEMA: &str = include_str!("../assets/socialized_structure.schema.json");

/// File extension of trajectory documents.
pub const TRAJECTORY_EXTENSION: &str = ".s3ap.json";

const REQUIRED: [&str; 4] = ["timestep", "state", "observations", "actions"];

/// The step JSON schema document, verbatim. Used as the format
/// instructions of parser prompts.
pub fn embedded_schema() -> &'static str {
    SCHEMA
}

/// Schema text for one wire form: the top-level document minus its
/// `definitions` for the object form, the list-form definition otherwise.
pub fn form_schema(form: WireForm) -> String {
    let doc: Value = serde_json::from_str(SCHEMA).expect("embedded schema is valid JSON");
    let value = match form {
        WireForm::ObjectMap => {
            let mut doc = doc;
            doc.as_object_mut().expect("object").shift_remove("definitions");
            doc
        }
        WireForm::StringList => doc["definitions"]["SocializedStructureForModel"].clone(),
    };
    serde_json::to_string_pretty(&value).expect("serializable")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireForm {
    /// `observations` / `actions` are objects keyed by agent name.
    ObjectMap,
    /// `observations` / `actions` are arrays of `"agent_name: text"`.
    StringList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IssueCode {
    ParseError,
    MissingField,
    WrongType,
    BadEntryFormat,
    DuplicateAgent,
    AgentSetMismatch,
    MalformedTag,
    EmptyValue,
    NonObjectStep,
}

/// A single validation finding, phrased so it can be shown to a model in a
/// retry prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub path: String,
    pub code: IssueCode,
    pub message: String,
}

impl ValidationIssue {
    fn new(path: impl Into<String>, code: IssueCode, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("feedback requires at least one issue")]
    NoIssues,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trajectory document is invalid ({} issues): {}", .0.len(), .0.first().map(|i| i.to_string()).unwrap_or_default())]
    Invalid(Vec<ValidationIssue>),
}

/// Result of decoding a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedStep {
    /// Present only when `issues` is empty.
    pub step: Option<SimulationStep>,
    pub issues: Vec<ValidationIssue>,
    /// Unknown top-level fields of the step object.
    pub extra: Map<String, Value>,
}

/// Result of decoding a trajectory document.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedTrajectory {
    pub trajectory: Option<Trajectory>,
    pub issues: Vec<ValidationIssue>,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

#[derive(Clone, Copy)]
enum Field {
    Observations,
    Actions,
}

impl Field {
    fn name(self) -> &'static str {
        match self {
            Field::Observations => "observations",
            Field::Actions => "actions",
        }
    }

    fn payload(self) -> &'static str {
        match self {
            Field::Observations => "observation",
            Field::Actions => "action",
        }
    }
}

fn decode_entries(
    value: &Value,
    field: Field,
    form: Option<WireForm>,
    base: &str,
    issues: &mut Vec<ValidationIssue>,
) -> Option<IndexMap<AgentId, String>> {
    let path = format!("{base}.{}", field.name());
    let detected = match value {
        Value::Object(_) => WireForm::ObjectMap,
        Value::Array(_) => WireForm::StringList,
        other => {
            issues.push(ValidationIssue::new(
                &path,
                IssueCode::WrongType,
                format!("'{}' must be an object or an array of strings, got {}", field.name(), type_name(other)),
            ));
            return None;
        }
    };
    if let Some(expected) = form {
        if expected != detected {
            let want = match expected {
                WireForm::ObjectMap => "an object mapping agent names to strings",
                WireForm::StringList => "an array of 'agent_name: text' strings",
            };
            issues.push(ValidationIssue::new(
                &path,
                IssueCode::WrongType,
                format!("'{}' must be {want}", field.name()),
            ));
            return None;
        }
    }
    let start = issues.len();
    let mut out = IndexMap::new();
    let mut insert = |name: &str, payload: &str, entry_path: String, issues: &mut Vec<ValidationIssue>| {
        let agent = match AgentId::new(name) {
            Ok(a) => a,
            Err(e) => {
                issues.push(ValidationIssue::new(entry_path, IssueCode::BadEntryFormat, e.to_string()));
                return;
            }
        };
        if out.contains_key(&agent) {
            issues.push(ValidationIssue::new(
                entry_path,
                IssueCode::DuplicateAgent,
                format!("agent '{agent}' appears more than once in '{}'", field.name()),
            ));
            return;
        }
        if payload.trim().is_empty() {
            issues.push(ValidationIssue::new(
                &entry_path,
                IssueCode::EmptyValue,
                format!("{} of '{agent}' is empty; use 'none' instead", field.payload()),
            ));
        } else {
            let tag_check = match field {
                Field::Observations => ObservationExpr::new(payload).check_tags().map_err(|e| e.to_string()),
                Field::Actions if tags::contains_special_tag(payload) => {
                    Err(format!("action of '{agent}' contains a special tag; tags are only allowed in observations"))
                }
                Field::Actions => Ok(()),
            };
            if let Err(msg) = tag_check {
                issues.push(ValidationIssue::new(&entry_path, IssueCode::MalformedTag, msg));
            }
        }
        out.insert(agent, payload.to_string());
    };
    match value {
        Value::Object(map) => {
            for (name, v) in map {
                let entry_path = format!("{path}.{name}");
                match v {
                    Value::String(s) => insert(name, s, entry_path, issues),
                    other => issues.push(ValidationIssue::new(
                        entry_path,
                        IssueCode::WrongType,
                        format!("{} of '{name}' must be a string, got {}", field.payload(), type_name(other)),
                    )),
                }
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                let entry_path = format!("{path}[{i}]");
                let Value::String(s) = v else {
                    issues.push(ValidationIssue::new(
                        entry_path,
                        IssueCode::WrongType,
                        format!("entry must be a string, got {}", type_name(v)),
                    ));
                    continue;
                };
                match s.split_once(": ") {
                    Some((name, payload)) => insert(name, payload, entry_path, issues),
                    None => issues.push(ValidationIssue::new(
                        entry_path,
                        IssueCode::BadEntryFormat,
                        format!("entry {s:?} is not in 'agent_name: {}' form", field.payload()),
                    )),
                }
            }
        }
        _ => unreachable!(),
    }
    (issues.len() == start).then_some(out)
}

fn decode_step_value(
    value: &Value,
    index: usize,
    form: Option<WireForm>,
) -> (Option<SimulationStep>, Vec<ValidationIssue>, Map<String, Value>) {
    let base = format!("steps[{index}]");
    let mut issues = Vec::new();
    let Value::Object(obj) = value else {
        issues.push(ValidationIssue::new(
            &base,
            IssueCode::NonObjectStep,
            format!("a simulation step must be a JSON object, got {}", type_name(value)),
        ));
        return (None, issues, Map::new());
    };
    for field in REQUIRED {
        if !obj.contains_key(field) {
            issues.push(ValidationIssue::new(
                &base,
                IssueCode::MissingField,
                format!("missing required field '{field}'"),
            ));
        }
    }
    let extra: Map<String, Value> = obj
        .iter()
        .filter(|(k, _)| !REQUIRED.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    let timestep = obj.get("timestep").and_then(|v| {
        let raw = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            other => {
                issues.push(ValidationIssue::new(
                    format!("{base}.timestep"),
                    IssueCode::WrongType,
                    format!("'timestep' must be a string, got {}", type_name(other)),
                ));
                return None;
            }
        };
        match Timestep::new(raw, index) {
            Ok(t) => Some(t),
            Err(_) => {
                issues.push(ValidationIssue::new(
                    format!("{base}.timestep"),
                    IssueCode::EmptyValue,
                    "'timestep' is empty",
                ));
                None
            }
        }
    });
    let state = obj.get("state").and_then(|v| match v {
        Value::String(s) if s.trim().is_empty() => {
            issues.push(ValidationIssue::new(
                format!("{base}.state"),
                IssueCode::EmptyValue,
                "'state' is empty; use 'none' when there is no prior context",
            ));
            None
        }
        Value::String(s) => {
            if let Err(e) = tags::parse_segments(s) {
                issues.push(ValidationIssue::new(format!("{base}.state"), IssueCode::MalformedTag, e.to_string()));
            }
            Some(s.clone())
        }
        other => {
            issues.push(ValidationIssue::new(
                format!("{base}.state"),
                IssueCode::WrongType,
                format!("'state' must be a string, got {}", type_name(other)),
            ));
            None
        }
    });
    let observations = obj
        .get("observations")
        .and_then(|v| decode_entries(v, Field::Observations, form, &base, &mut issues));
    let actions = obj
        .get("actions")
        .and_then(|v| decode_entries(v, Field::Actions, form, &base, &mut issues));

    if let (Some(obs), Some(acts)) = (&observations, &actions) {
        let missing: Vec<&str> = obs.keys().filter(|k| !acts.contains_key(*k)).map(AgentId::as_str).collect();
        let surplus: Vec<&str> = acts.keys().filter(|k| !obs.contains_key(*k)).map(AgentId::as_str).collect();
        if !missing.is_empty() || !surplus.is_empty() {
            let mut parts = Vec::new();
            if !missing.is_empty() {
                parts.push(format!("agents without an action: {}", missing.join(", ")));
            }
            if !surplus.is_empty() {
                parts.push(format!("agents without an observation: {}", surplus.join(", ")));
            }
            issues.push(ValidationIssue::new(
                &base,
                IssueCode::AgentSetMismatch,
                format!("observations and actions must name the same agents ({})", parts.join("; ")),
            ));
        }
    }

    if !issues.is_empty() {
        return (None, issues, extra);
    }
    let (Some(timestep), Some(state), Some(obs), Some(acts)) = (timestep, state, observations, actions) else {
        unreachable!("every field decoded without issues");
    };
    let obs = obs.into_iter().map(|(k, v)| (k, ObservationExpr::new(v))).collect();
    let acts = acts.into_iter().map(|(k, v)| (k, AgentAction::new(v))).collect();
    let step = SimulationStep::new(timestep, state, obs, acts).expect("invariants checked above");
    (Some(step), issues, extra)
}

/// Decodes one step document. `form = None` auto-detects the wire form
/// from the shape of `observations`. All issues are reported together.
pub fn decode_step(document: &str, form: Option<WireForm>) -> DecodedStep {
    match serde_json::from_str::<Value>(document) {
        Ok(value) => {
            let (step, issues, extra) = decode_step_value(&value, 0, form);
            DecodedStep { step, issues, extra }
        }
        Err(e) => DecodedStep {
            step: None,
            issues: vec![ValidationIssue::new("document", IssueCode::ParseError, format!("not valid JSON: {e}"))],
            extra: Map::new(),
        },
    }
}

/// JSON value of a step in the given wire form. Entries follow the step's
/// agent order.
pub fn step_to_value(step: &SimulationStep, form: WireForm) -> Value {
    let (observations, actions) = match form {
        WireForm::ObjectMap => (
            Value::Object(step.observations.iter().map(|(k, v)| (k.to_string(), json!(v.raw))).collect()),
            Value::Object(step.actions.iter().map(|(k, v)| (k.to_string(), json!(v.raw))).collect()),
        ),
        WireForm::StringList => (
            Value::Array(step.observations.iter().map(|(k, v)| json!(format!("{k}: {}", v.raw))).collect()),
            Value::Array(step.actions.iter().map(|(k, v)| json!(format!("{k}: {}", v.raw))).collect()),
        ),
    };
    json!({
        "timestep": step.timestep.raw,
        "state": step.state,
        "observations": observations,
        "actions": actions,
    })
}

/// Canonical pretty-printed encoding of a step.
pub fn encode_step(step: &SimulationStep, form: WireForm) -> String {
    serde_json::to_string_pretty(&step_to_value(step, form)).expect("serializable")
}

/// JSON value of a trajectory document.
pub fn trajectory_to_value(traj: &Trajectory, form: WireForm) -> Value {
    let mut doc = Map::new();
    doc.insert("agents".into(), json!(traj.agents().iter().map(AgentId::as_str).collect::<Vec<_>>()));
    doc.insert(
        "steps".into(),
        Value::Array(traj.steps().iter().map(|s| step_to_value(s, form)).collect()),
    );
    if !traj.metadata.is_empty() {
        doc.insert("metadata".into(), Value::Object(traj.metadata.clone()));
    }
    Value::Object(doc)
}

/// Canonical pretty-printed trajectory document.
pub fn encode_trajectory(traj: &Trajectory, form: WireForm) -> String {
    serde_json::to_string_pretty(&trajectory_to_value(traj, form)).expect("serializable")
}

fn looks_like_step(obj: &Map<String, Value>) -> bool {
    REQUIRED.iter().any(|k| obj.contains_key(*k)) && !obj.contains_key("steps")
}

/// Decodes a trajectory from an already-parsed JSON value.
///
/// Accepted shapes: a trajectory document, a bare array of steps, or a
/// single step object (wrapped into a one-step trajectory). Unknown fields
/// are kept in the trajectory metadata.
pub fn decode_trajectory_value(value: &Value, form: Option<WireForm>) -> DecodedTrajectory {
    let mut issues = Vec::new();
    let mut metadata = Map::new();
    let mut declared_agents: Option<Vec<AgentId>> = None;

    let step_values: Vec<Value> = match value {
        Value::Array(items) => items.clone(),
        Value::Object(obj) if looks_like_step(obj) => vec![value.clone()],
        Value::Object(obj) => {
            for (k, v) in obj {
                match k.as_str() {
                    "steps" | "agents" => {}
                    "metadata" => match v {
                        Value::Object(m) => metadata.extend(m.clone()),
                        other => {
                            metadata.insert("metadata".into(), other.clone());
                        }
                    },
                    _ => {
                        metadata.insert(k.clone(), v.clone());
                    }
                }
            }
            if let Some(agents) = obj.get("agents") {
                match agents {
                    Value::Array(names) => {
                        let mut list = Vec::new();
                        for (i, n) in names.iter().enumerate() {
                            let parsed = n
                                .as_str()
                                .ok_or_else(|| format!("agent name must be a string, got {}", type_name(n)))
                                .and_then(|s| AgentId::new(s).map_err(|e| e.to_string()));
                            match parsed {
                                Ok(a) if list.contains(&a) => issues.push(ValidationIssue::new(
                                    format!("agents[{i}]"),
                                    IssueCode::DuplicateAgent,
                                    format!("agent '{a}' is listed twice"),
                                )),
                                Ok(a) => list.push(a),
                                Err(msg) => issues.push(ValidationIssue::new(
                                    format!("agents[{i}]"),
                                    IssueCode::BadEntryFormat,
                                    msg,
                                )),
                            }
                        }
                        declared_agents = Some(list);
                    }
                    other => issues.push(ValidationIssue::new(
                        "agents",
                        IssueCode::WrongType,
                        format!("'agents' must be an array of names, got {}", type_name(other)),
                    )),
                }
            }
            match obj.get("steps") {
                Some(Value::Array(items)) => items.clone(),
                Some(other) => {
                    issues.push(ValidationIssue::new(
                        "steps",
                        IssueCode::WrongType,
                        format!("'steps' must be an array, got {}", type_name(other)),
                    ));
                    Vec::new()
                }
                None => {
                    issues.push(ValidationIssue::new("document", IssueCode::MissingField, "missing required field 'steps'"));
                    Vec::new()
                }
            }
        }
        other => {
            issues.push(ValidationIssue::new(
                "document",
                IssueCode::NonObjectStep,
                format!("expected a trajectory object, a step object or an array of steps, got {}", type_name(other)),
            ));
            Vec::new()
        }
    };

    let mut steps = Vec::new();
    let mut step_extras = Map::new();
    for (i, v) in step_values.iter().enumerate() {
        let (step, mut step_issues, extra) = decode_step_value(v, i, form);
        issues.append(&mut step_issues);
        if !extra.is_empty() {
            step_extras.insert(i.to_string(), Value::Object(extra));
        }
        steps.push(step);
    }
    if !step_extras.is_empty() {
        metadata.insert("step_extras".into(), Value::Object(step_extras));
    }

    let agents = declared_agents.or_else(|| steps.iter().flatten().next().map(|s| s.agents().cloned().collect()));
    if let Some(agents) = &agents {
        for (i, step) in steps.iter().enumerate() {
            let Some(step) = step else { continue };
            let same = step.observations.len() == agents.len() && agents.iter().all(|a| step.observations.contains_key(a));
            if !same {
                let names = |it: &mut dyn Iterator<Item = &AgentId>| it.map(AgentId::as_str).collect::<Vec<_>>().join(", ");
                issues.push(ValidationIssue::new(
                    format!("steps[{i}]"),
                    IssueCode::AgentSetMismatch,
                    format!(
                        "step names agents [{}] but the trajectory agents are [{}]",
                        names(&mut step.agents()),
                        names(&mut agents.iter())
                    ),
                ));
            }
        }
    }

    if !issues.is_empty() {
        return DecodedTrajectory { trajectory: None, issues };
    }
    let steps: Vec<SimulationStep> = steps.into_iter().map(|s| s.expect("no issues")).collect();
    let mut traj = Trajectory::from_steps(agents.unwrap_or_default(), steps).expect("validated");
    traj.metadata = metadata;
    DecodedTrajectory {
        trajectory: Some(traj),
        issues,
    }
}

/// Decodes a trajectory document from text.
pub fn decode_trajectory(document: &str, form: Option<WireForm>) -> DecodedTrajectory {
    match serde_json::from_str::<Value>(document) {
        Ok(v) => decode_trajectory_value(&v, form),
        Err(e) => DecodedTrajectory {
            trajectory: None,
            issues: vec![ValidationIssue::new("document", IssueCode::ParseError, format!("not valid JSON: {e}"))],
        },
    }
}

/// Reads and validates a `.s3ap.json` file.
pub fn load_trajectory(path: &Path) -> Result<Trajectory, SchemaError> {
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let decoded = decode_trajectory(&text, None);
    decoded.trajectory.ok_or(SchemaError::Invalid(decoded.issues))
}

/// Writes a trajectory document.
pub fn save_trajectory(path: &Path, traj: &Trajectory, form: WireForm) -> Result<(), SchemaError> {
    let mut text = encode_trajectory(traj, form);
    text.push('\n');
    std::fs::write(path, text).map_err(|source| SchemaError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum PathPart<'a> {
    Num(u64),
    Text(&'a str),
}

fn path_parts(path: &str) -> Vec<PathPart<'_>> {
    let mut parts = Vec::new();
    let bytes = path.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let digit = bytes[i].is_ascii_digit();
        while i < bytes.len() && bytes[i].is_ascii_digit() == digit {
            i += 1;
        }
        let piece = &path[start..i];
        parts.push(if digit {
            PathPart::Num(piece.parse().unwrap_or(u64::MAX))
        } else {
            PathPart::Text(piece)
        });
    }
    parts
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    path_parts(a).cmp(&path_parts(b))
}

/// Formats issues as a numbered, path-annotated block for the `{feedback}`
/// slot of the retry prompt. Issues are listed in natural path order.
pub fn issues_to_feedback(issues: &[ValidationIssue]) -> Result<String, SchemaError> {
    if issues.is_empty() {
        return Err(SchemaError::NoIssues);
    }
    let mut sorted: Vec<&ValidationIssue> = issues.iter().collect();
    sorted.sort_by(|a, b| natural_cmp(&a.path, &b.path));
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, issue)| format!("{}. {}: {}", i + 1, issue.path, issue.message))
        .collect::<Vec<_>>()
        .join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = r#"{
        "timestep": "1",
        "state": "Sally and Anne are in the room.",
        "observations": {"Sally": "<same_as_state />", "Anne": "none"},
        "actions": {"Sally": "put the marble in the basket", "Anne": "none"}
    }"#;

    #[test]
    fn schema_required_and_tag_note() {
        let doc: Value = serde_json::from_str(embedded_schema()).unwrap();
        assert_eq!(doc["required"], json!(["timestep", "state", "observations", "actions"]));
        assert!(embedded_schema().contains("<same_as_state />"));
        assert!(form_schema(WireForm::StringList).contains("agent_name: observation"));
        assert!(!form_schema(WireForm::ObjectMap).contains("SocializedStructureForModel"));
    }

    #[test]
    fn decodes_object_form() {
        let d = decode_step(VALID, None);
        assert!(d.issues.is_empty(), "{:?}", d.issues);
        let step = d.step.unwrap();
        assert_eq!(step.observations.len(), 2);
        assert!(step.actions[1].is_none);
    }

    #[test]
    fn list_entry_without_prefix() {
        let doc = r#"{"timestep": "0", "state": "s",
            "observations": ["Sally observes the marble"],
            "actions": ["Sally: none"]}"#;
        let d = decode_step(doc, None);
        assert!(d.step.is_none());
        assert_eq!(d.issues[0].code, IssueCode::BadEntryFormat);
        assert_eq!(d.issues[0].path, "steps[0].observations[0]");
        assert!(d.issues[0].message.contains("Sally observes the marble"));
    }

    #[test]
    fn list_split_at_first_colon_space() {
        let doc = r#"{"timestep": "0", "state": "s",
            "observations": ["Sally: Anne said: 'hi'"],
            "actions": ["Sally: none"]}"#;
        let step = decode_step(doc, Some(WireForm::StringList)).step.unwrap();
        assert_eq!(step.observations[0].raw, "Anne said: 'hi'");
    }

    #[test]
    fn agent_set_mismatch() {
        let doc = r#"{"timestep": "0", "state": "s",
            "observations": {"Sally": "none", "Anne": "none"},
            "actions": {"Sally": "none"}}"#;
        let d = decode_step(doc, None);
        assert_eq!(d.issues.len(), 1);
        assert_eq!(d.issues[0].code, IssueCode::AgentSetMismatch);
        assert!(d.issues[0].message.contains("Anne"));
    }

    #[test]
    fn collects_all_issues() {
        let doc = r#"{"timestep": "", "observations": {"Sally": "<same_as_sate />"}, "actions": {"Sally": ""}}"#;
        let d = decode_step(doc, None);
        let codes: Vec<_> = d.issues.iter().map(|i| i.code).collect();
        assert_eq!(
            codes,
            vec![IssueCode::MissingField, IssueCode::EmptyValue, IssueCode::MalformedTag, IssueCode::EmptyValue]
        );
        assert_eq!(decode_step(doc, None).issues, d.issues);
    }

    #[test]
    fn not_json_and_not_object() {
        let d = decode_step("{oops", None);
        assert_eq!(d.issues.len(), 1);
        assert_eq!(d.issues[0].code, IssueCode::ParseError);
        let d = decode_step("[1, 2]", None);
        assert_eq!(d.issues[0].code, IssueCode::NonObjectStep);
    }

    #[test]
    fn wrong_form_requested() {
        let d = decode_step(VALID, Some(WireForm::StringList));
        assert!(d.issues.iter().all(|i| i.code == IssueCode::WrongType));
        assert_eq!(d.issues.len(), 2);
    }

    #[test]
    fn extra_fields_preserved() {
        let doc = r#"{"timestep": 3, "state": "s", "observations": {"A": "none"}, "actions": {"A": "none"}, "note": "x"}"#;
        let d = decode_step(doc, None);
        assert_eq!(d.step.unwrap().timestep.raw, "3");
        assert_eq!(d.extra["note"], json!("x"));
        let t = decode_trajectory(&format!("[{doc}]"), None).trajectory.unwrap();
        assert_eq!(t.metadata["step_extras"]["0"]["note"], json!("x"));
    }

    #[test]
    fn encode_is_canonical() {
        let step = decode_step(VALID, None).step.unwrap();
        let expected = "{\n  \"timestep\": \"1\",\n  \"state\": \"Sally and Anne are in the room.\",\n  \"observations\": [\n    \"Sally: <same_as_state />\",\n    \"Anne: none\"\n  ],\n  \"actions\": [\n    \"Sally: put the marble in the basket\",\n    \"Anne: none\"\n  ]\n}";
        assert_eq!(encode_step(&step, WireForm::StringList), expected);
    }

    #[test]
    fn feedback_lines() {
        let one = vec![ValidationIssue::new("steps[0]", IssueCode::MissingField, "missing required field 'actions'")];
        assert_eq!(issues_to_feedback(&one).unwrap(), "1. steps[0]: missing required field 'actions'");
        let three = vec![
            ValidationIssue::new("steps[10]", IssueCode::EmptyValue, "c"),
            ValidationIssue::new("steps[2].state", IssueCode::EmptyValue, "b"),
            ValidationIssue::new("steps[2]", IssueCode::MissingField, "a"),
        ];
        assert_eq!(
            issues_to_feedback(&three).unwrap(),
            "1. steps[2]: a\n2. steps[2].state: b\n3. steps[10]: c"
        );
        assert!(matches!(issues_to_feedback(&[]), Err(SchemaError::NoIssues)));
    }

    #[test]
    fn trajectory_document_and_mismatch() {
        let doc = json!({
            "agents": ["Sally", "Anne"],
            "steps": [
                {"timestep": "0", "state": "s", "observations": {"Sally": "none", "Anne": "none"}, "actions": {"Sally": "none", "Anne": "none"}},
                {"timestep": "1", "state": "s", "observations": {"Sally": "none"}, "actions": {"Sally": "none"}}
            ],
            "metadata": {"source": "test"},
            "task": "ToMi"
        });
        let d = decode_trajectory_value(&doc, None);
        assert_eq!(d.issues.len(), 1);
        assert_eq!(d.issues[0].path, "steps[1]");
        assert_eq!(d.issues[0].code, IssueCode::AgentSetMismatch);

        let mut ok = doc.clone();
        ok["steps"].as_array_mut().unwrap().pop();
        let t = decode_trajectory_value(&ok, None).trajectory.unwrap();
        assert_eq!(t.metadata["source"], json!("test"));
        assert_eq!(t.metadata["task"], json!("ToMi"));
    }

    #[test]
    fn single_step_is_wrapped() {
        let t = decode_trajectory(VALID, None).trajectory.unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.agents().len(), 2);
    }
}
