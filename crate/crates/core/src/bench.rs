//! Question-answering benchmarks with and without structured extra
//! information: dataset loading, prompt assembly, scoring and reports.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{CompletionBackend, CompletionRequest};
use crate::oracle::{
    belief_questions, generate_scenario, ground_truth_trajectory, render_narrative_with, BeliefQuestion, GenParams,
    OracleError, OracleScenario, RenderStyle,
};
use crate::parser::{parse_narrative, ParseOptions, ParseTask, TaskName};
use crate::schema::{encode_trajectory, trajectory_to_value, WireForm};
use crate::template::Template;

pub const QA_TEMPLATE: Template = Template::new("qa", 1, include_str!("../assets/prompts/qa_v1.txt"));

/// Extra-info body used when no structured representation is supplied.
pub const NO_EXTRA_INFO: &str = "(none)";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("dataset line {line}: {message}")]
    DatasetFormat { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record {index} has no group id")]
    MissingGroup { index: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnswerSpec {
    MultipleChoice { options: Vec<String>, gold_index: usize },
    ListAnswer { gold: Vec<String> },
    ExactText { gold: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub context_id: String,
    pub context: String,
    pub question: String,
    #[serde(rename = "answer")]
    pub answer_spec: AnswerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
}

impl QAItem {
    pub fn validate(&self) -> Result<(), String> {
        if self.context_id.trim().is_empty() {
            return Err("context_id is empty".into());
        }
        if self.context.trim().is_empty() || self.question.trim().is_empty() {
            return Err("context and question must be non-empty".into());
        }
        match &self.answer_spec {
            AnswerSpec::MultipleChoice { options, gold_index } if *gold_index >= options.len() => {
                Err(format!("gold_index {gold_index} is out of range for {} options", options.len()))
            }
            AnswerSpec::ListAnswer { gold } if gold.is_empty() => Err("the gold list is empty".into()),
            _ => Ok(()),
        }
    }
}

/// One generated scenario with everything needed to ask and grade
/// questions about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub id: String,
    pub seed: u64,
    pub scenario: OracleScenario,
    pub narrative: String,
    pub questions: Vec<BeliefQuestion>,
    /// The ground-truth trajectory document.
    pub ground_truth: Value,
}

impl SyntheticRecord {
    pub fn items(&self) -> Vec<QAItem> {
        self.questions
            .iter()
            .map(|q| QAItem {
                context_id: self.id.clone(),
                context: self.narrative.clone(),
                question: q.prompt_text(),
                answer_spec: AnswerSpec::MultipleChoice { options: q.options.clone(), gold_index: q.gold },
                group_id: Some(self.id.clone()),
            })
            .collect()
    }
}

/// Generates `count` scenarios from consecutive seeds starting at `seed`,
/// with questions up to `max_order`.
pub fn generate_synthetic(
    seed: u64,
    count: usize,
    params: &GenParams,
    max_order: usize,
    paraphrase: bool,
) -> Result<Vec<SyntheticRecord>, BenchError> {
    (0..count as u64)
        .map(|i| {
            let s = seed.wrapping_add(i);
            let scenario = generate_scenario(s, params)?;
            let style = if paraphrase { RenderStyle::Paraphrase { seed: s } } else { RenderStyle::Plain };
            let truth = ground_truth_trajectory(&scenario)?;
            Ok(SyntheticRecord {
                id: format!("scenario-{s}"),
                seed: s,
                narrative: render_narrative_with(&scenario, style),
                questions: belief_questions(&scenario, max_order)?,
                ground_truth: trajectory_to_value(&truth, WireForm::ObjectMap),
                scenario,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// One [`SyntheticRecord`] per line.
    S3apSynthetic,
    /// One [`QAItem`] per line.
    GenericJsonl,
}

/// Parses dataset text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<Vec<QAItem>, BenchError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| BenchError::DatasetFormat { line: i + 1, message };
        match format {
            DatasetFormat::GenericJsonl => {
                let item: QAItem = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
                item.validate().map_err(bad)?;
                items.push(item);
            }
            DatasetFormat::S3apSynthetic => {
                let record: SyntheticRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
                for item in record.items() {
                    item.validate().map_err(bad)?;
                    items.push(item);
                }
            }
        }
    }
    Ok(items)
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<QAItem>, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
    parse_dataset(&text, format)
}

/// Fills the question-answering template. Without extra information the
/// section body reads "(none)".
pub fn build_qa_prompt(context: &str, extra_info: Option<&str>, question: &str) -> String {
    QA_TEMPLATE
        .render(&[
            ("context", context),
            ("extra_info", extra_info.unwrap_or(NO_EXTRA_INFO)),
            ("question", question),
        ])
        .expect("all slots filled")
}

fn normalize(text: &str) -> String {
    let kept: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalized_set(text: &str) -> std::collections::BTreeSet<String> {
    text.split([',', '\n']).map(normalize).filter(|s| !s.is_empty()).collect()
}

/// The option picked by a response: the first standalone letter or
/// 1-based number that names an option.
pub fn chosen_option(response: &str, n_options: usize) -> Option<usize> {
    for token in response.split(|c: char| !c.is_ascii_alphanumeric()).filter(|t| !t.is_empty()) {
        let mut chars = token.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.is_ascii_alphabetic() {
                let i = (c.to_ascii_uppercase() as u8 - b'A') as usize;
                if i < n_options {
                    return Some(i);
                }
                continue;
            }
        }
        if let Ok(k) = token.parse::<usize>() {
            if (1..=n_options).contains(&k) {
                return Some(k - 1);
            }
        }
    }
    None
}

pub fn score_answer(item: &QAItem, response: &str) -> bool {
    match &item.answer_spec {
        AnswerSpec::MultipleChoice { options, gold_index } => chosen_option(response, options.len()) == Some(*gold_index),
        AnswerSpec::ListAnswer { gold } => {
            let gold: std::collections::BTreeSet<String> = gold.iter().map(|g| normalize(g)).collect();
            !gold.is_empty() && normalized_set(response) == gold
        }
        AnswerSpec::ExactText { gold } => {
            let g = normalize(gold);
            !g.is_empty() && normalize(response) == g
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub index: usize,
    pub context_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    pub prompt_digest: String,
    pub answer: Option<String>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Fraction of groups whose every record is correct.
pub fn all_qs(records: &[ItemRecord]) -> Result<f64, BenchError> {
    let mut groups: BTreeMap<&str, bool> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let g = r.group_id.as_deref().ok_or(BenchError::MissingGroup { index: i })?;
        *groups.entry(g).or_insert(true) &= r.correct;
    }
    if groups.is_empty() {
        return Ok(0.0);
    }
    Ok(groups.values().filter(|ok| **ok).count() as f64 / groups.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    WithS3ap,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::WithS3ap => "with_s3ap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub task: TaskName,
    pub condition: Condition,
    pub parallelism: usize,
    pub model_id: String,
    pub max_retries: usize,
    /// The run fails its threshold when accuracy is below this.
    pub min_accuracy: Option<f64>,
}

impl BenchConfig {
    pub fn new(task: TaskName, condition: Condition) -> Self {
        Self { task, condition, parallelism: 4, model_id: String::new(), max_retries: 2, min_accuracy: None }
    }
}

/// Configuration as recorded in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub task: String,
    pub condition: Condition,
    pub parallelism: usize,
    pub model_id: String,
    pub max_retries: usize,
    pub answer_backend: String,
    pub parser_backend: Option<String>,
    pub min_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub condition: Condition,
    pub accuracy: f64,
    pub all_qs: Option<f64>,
    pub item_count: usize,
    pub correct_count: usize,
    pub config: ConfigSnapshot,
    pub records: Vec<ItemRecord>,
}

impl RunReport {
    pub fn meets_threshold(&self) -> bool {
        self.config.min_accuracy.is_none_or(|m| self.accuracy >= m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut md = format!("# {} ({})\n\n", self.task, self.condition.label());
        md.push_str("| Metric | Value |\n|---|---|\n");
        md.push_str(&format!("| Items | {} |\n", self.item_count));
        md.push_str(&format!("| Correct | {} |\n", self.correct_count));
        md.push_str(&format!("| Accuracy | {:.3} |\n", self.accuracy));
        if let Some(a) = self.all_qs {
            md.push_str(&format!("| All Qs | {a:.3} |\n"));
        }
        md.push_str(&format!("\nAnswer backend: `{}`", self.config.answer_backend));
        if let Some(p) = &self.config.parser_backend {
            md.push_str(&format!(", parser backend: `{p}`"));
        }
        md.push('\n');
        md
    }

    /// Writes `report.json` and `report.md` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), BenchError> {
        let io = |source| BenchError::Io { path: dir.to_path_buf(), source };
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join("report.json"), self.to_json()).map_err(io)?;
        fs::write(dir.join("report.md"), self.to_markdown()).map_err(io)?;
        Ok(())
    }
}

/// A side-by-side table of a baseline and a structured run of one task.
pub fn comparison_markdown(baseline: &RunReport, with_s3ap: &RunReport) -> String {
    let mut md = String::from("| Task | Backend | Baseline | With S3AP |\n|---|---|---|---|\n");
    md.push_str(&format!(
        "| {} | {} | {:.3} | {:.3} |\n",
        baseline.task, baseline.config.answer_backend, baseline.accuracy, with_s3ap.accuracy
    ));
    if let (Some(a), Some(b)) = (baseline.all_qs, with_s3ap.all_qs) {
        md.push_str(&format!("| {} (All Qs) | {} | {a:.3} | {b:.3} |\n", baseline.task, baseline.config.answer_backend));
    }
    md
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Runs every item and collects a report. Under [`Condition::WithS3ap`]
/// each distinct context is parsed once, whatever the number of questions
/// about it; the baseline never touches the parser. Item failures are
/// recorded as incorrect and never abort the run.
pub fn run_benchmark(
    items: &[QAItem],
    cfg: &BenchConfig,
    parser: Option<&dyn CompletionBackend>,
    answer: &dyn CompletionBackend,
) -> Result<RunReport, BenchError> {
    if cfg.parallelism == 0 {
        return Err(BenchError::InvalidConfig("parallelism must be at least 1".into()));
    }
    let parser = match (cfg.condition, parser) {
        (Condition::WithS3ap, None) => {
            return Err(BenchError::InvalidConfig("the structured condition needs a parser backend".into()))
        }
        (Condition::WithS3ap, Some(p)) => Some(p),
        (Condition::Baseline, _) => None,
    };
    let task = ParseTask::builtin(cfg.task);
    let opts = ParseOptions { max_retries: cfg.max_retries, model_id: cfg.model_id.clone() };
    let parses: HashMap<&str, OnceLock<Result<String, String>>> =
        items.iter().map(|i| (i.context_id.as_str(), OnceLock::new())).collect();
    let slots: Vec<Mutex<Option<ItemRecord>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);

    let run_item = |index: usize| -> ItemRecord {
        let item = &items[index];
        let extra = parser.map(|p| {
            parses[item.context_id.as_str()]
                .get_or_init(|| {
                    parse_narrative(&item.context, &task, p, &opts)
                        .map(|(traj, _)| encode_trajectory(&traj, WireForm::StringList))
                        .map_err(|e| format!("parse failed: {e}"))
                })
                .clone()
        });
        let mut record = ItemRecord {
            index,
            context_id: item.context_id.clone(),
            group_id: item.group_id.clone(),
            prompt_digest: String::new(),
            answer: None,
            correct: false,
            error: None,
        };
        let extra = match extra {
            Some(Err(e)) => {
                record.error = Some(e);
                return record;
            }
            Some(Ok(text)) => Some(text),
            None => None,
        };
        let prompt = build_qa_prompt(&item.context, extra.as_deref(), &item.question);
        record.prompt_digest = digest(&prompt);
        match answer.complete(&CompletionRequest::user(cfg.model_id.clone(), prompt)) {
            Ok(response) => {
                record.correct = score_answer(item, &response);
                record.answer = Some(response);
            }
            Err(e) => record.error = Some(format!("answer failed: {e}")),
        }
        record
    };

    std::thread::scope(|scope| {
        for _ in 0..cfg.parallelism.min(items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let record = run_item(i);
                *slots[i].lock().expect("no poisoned slot") = Some(record);
            });
        }
    });

    let records: Vec<ItemRecord> =
        slots.into_iter().map(|s| s.into_inner().expect("no poisoned slot").expect("every item ran")).collect();
    let correct_count = records.iter().filter(|r| r.correct).count();
    let accuracy = if records.is_empty() { 0.0 } else { correct_count as f64 / records.len() as f64 };
    let all_qs = if !records.is_empty() && records.iter().all(|r| r.group_id.is_some()) {
        Some(all_qs(&records)?)
    } else {
        None
    };
    Ok(RunReport {
        task: cfg.task.to_string(),
        condition: cfg.condition,
        accuracy,
        all_qs,
        item_count: records.len(),
        correct_count,
        config: ConfigSnapshot {
            task: cfg.task.to_string(),
            condition: cfg.condition,
            parallelism: cfg.parallelism,
            model_id: cfg.model_id.clone(),
            max_retries: cfg.max_retries,
            answer_backend: answer.identity().to_string(),
            parser_backend: parser.map(|p| p.identity().to_string()),
            min_accuracy: cfg.min_accuracy,
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, FnBackend, OracleBackend};

    fn mc(gold: usize) -> QAItem {
        QAItem {
            context_id: "c".into(),
            context: "ctx".into(),
            question: "q".into(),
            answer_spec: AnswerSpec::MultipleChoice { options: vec!["basket".into(), "box".into(), "unknown".into()], gold_index: gold },
            group_id: None,
        }
    }

    #[test]
    fn scoring_rules() {
        assert!(score_answer(&mc(1), "The answer is (B) basket."));
        assert!(score_answer(&mc(1), "2"));
        assert!(!score_answer(&mc(1), ""));
        assert!(!score_answer(&mc(1), "basket"));
        let list = QAItem { answer_spec: AnswerSpec::ListAnswer { gold: vec!["kate".into(), "david".into()] }, ..mc(0) };
        assert!(score_answer(&list, "David, Kate"));
        assert!(score_answer(&list, "david\nKate."));
        assert!(!score_answer(&list, "David"));
        let exact = QAItem { answer_spec: AnswerSpec::ExactText { gold: "The red box".into() }, ..mc(0) };
        assert!(score_answer(&exact, "  the RED box! "));
        assert!(!score_answer(&exact, "box"));
    }

    #[test]
    fn all_qs_metric() {
        let rec = |g: &str, ok: bool| ItemRecord {
            index: 0,
            context_id: "c".into(),
            group_id: Some(g.into()),
            prompt_digest: String::new(),
            answer: None,
            correct: ok,
            error: None,
        };
        assert_eq!(all_qs(&[rec("a", true), rec("a", true), rec("a", false)]).unwrap(), 0.0);
        assert_eq!(all_qs(&[rec("a", true), rec("b", true)]).unwrap(), 1.0);
        assert_eq!(all_qs(&[rec("a", true), rec("b", false)]).unwrap(), 0.5);
        let mut orphan = rec("a", true);
        orphan.group_id = None;
        assert!(matches!(all_qs(&[rec("a", true), orphan]), Err(BenchError::MissingGroup { index: 1 })));
    }

    #[test]
    fn prompts() {
        let with = build_qa_prompt("A story.", Some("[steps]"), "Where?");
        assert_eq!(
            with,
            "## Context\nA story.\n## Extra Info\n(to help you better understand the meeting)\n[steps]\n## Task\nWhere?\n"
        );
        let without = build_qa_prompt("A story.", None, "Where?");
        assert_eq!(without, with.replace("[steps]", "(none)"));
    }

    #[test]
    fn dataset_errors_carry_line_numbers() {
        let good = serde_json::to_string(&mc(0)).unwrap();
        let text = format!("{good}\n\n{good}\n{{\"context_id\": 3}}\n");
        match parse_dataset(&text, DatasetFormat::GenericJsonl) {
            Err(BenchError::DatasetFormat { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let bad_gold = serde_json::to_string(&mc(7)).unwrap();
        assert!(matches!(parse_dataset(&bad_gold, DatasetFormat::GenericJsonl), Err(BenchError::DatasetFormat { line: 1, .. })));
        let grouped = QAItem { group_id: Some("g1".into()), ..mc(0) };
        let items = parse_dataset(&serde_json::to_string(&grouped).unwrap(), DatasetFormat::GenericJsonl).unwrap();
        assert_eq!(items[0].group_id.as_deref(), Some("g1"));
    }

    #[test]
    fn synthetic_round_trip_and_one_parse_per_context() {
        let records = generate_synthetic(3, 4, &GenParams { force_false_belief: true, ..GenParams::default() }, 2, false).unwrap();
        let text: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        let items = parse_dataset(&text, DatasetFormat::S3apSynthetic).unwrap();
        let per = records[0].questions.len();
        assert_eq!(items.len(), records.iter().map(|r| r.questions.len()).sum::<usize>());
        assert!(per > 1);

        let parser = FnBackend::new("counting-parser", {
            let oracle = OracleBackend::new();
            move |r| oracle.complete(r)
        });
        let answer = OracleBackend::new();
        let cfg = BenchConfig::new(TaskName::ToMi, Condition::WithS3ap);
        let report = run_benchmark(&items, &cfg, Some(&parser), &answer).unwrap();
        assert_eq!(parser.calls(), records.len());
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.all_qs, Some(1.0));
        let again = run_benchmark(&items, &cfg, Some(&parser), &answer).unwrap();
        assert_eq!(report.to_json(), again.to_json());

        let base_cfg = BenchConfig::new(TaskName::ToMi, Condition::Baseline);
        let before = parser.calls();
        let base = run_benchmark(&items, &base_cfg, Some(&parser), &answer).unwrap();
        assert_eq!(parser.calls(), before);
        assert!(base.accuracy < 1.0);
        let recount = base.records.iter().filter(|r| r.correct).count() as f64 / base.item_count as f64;
        assert_eq!(recount, base.accuracy);
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let broken = FnBackend::new("broken", |_| Err(BackendError::Transport("down".into())));
        let cfg = BenchConfig { min_accuracy: Some(0.5), ..BenchConfig::new(TaskName::ToMi, Condition::Baseline) };
        let report = run_benchmark(&[mc(0), mc(1)], &cfg, None, &broken).unwrap();
        assert_eq!(report.accuracy, 0.0);
        assert!(report.records.iter().all(|r| r.error.as_deref().is_some_and(|e| e.contains("down"))));
        assert!(!report.meets_threshold());
        let needs_parser = BenchConfig::new(TaskName::ToMi, Condition::WithS3ap);
        assert!(run_benchmark(&[mc(0)], &needs_parser, None, &broken).is_err());
    }
}
