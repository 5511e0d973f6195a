//! The `s3ap` command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 pipeline failure
//! (validation, parsing, a missed threshold), 3 backend failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{
    foresee_and_act, run_episode, ActionSpace, Actor, AgentError, EnvConfig, Environment, ForeseeActor, ForeseeConfig,
    FriendsConfig, Goal, LlmPolicy, LlmRefiner, NegotiationConfig, Policy, PolicyActor, Refiner,
};
use crate::backend::{
    BackendError, CachedBackend, CompletionBackend, HttpChatBackend, OracleBackend, ProfileSet, ScriptedBackend,
    ENV_CACHE_DIR,
};
use crate::bench::{generate_synthetic, load_dataset, run_benchmark, BenchConfig, BenchError, Condition, DatasetFormat};
use crate::model::{AgentAction, AgentId, SimulationStep, Trajectory};
use crate::oracle::{belief_questions, ground_truth_trajectory, GenParams, OracleScenario};
use crate::parser::{parse_narrative, ParseError, ParseOptions, ParseTask, TaskName};
use crate::schema::{decode_trajectory, encode_trajectory, save_trajectory, step_to_value, WireForm};
use crate::swm::{rollout, LlmSwm, NextStepPrediction, OracleSwm, SocialWorldModel, SwmError, SwmQuery};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Pipeline(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Pipeline(_) => EXIT_PIPELINE,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Backend(_) | AgentError::Swm(SwmError::Backend(_)) => CliError::Backend(e.to_string()),
            AgentError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Pipeline(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "s3ap", version, about = "Structured social world states from the command line")]
struct Cli {
    /// TOML settings file (keys: cache_dir, parallelism, [profiles.NAME]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Synthetic,
    Generic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConditionArg {
    Baseline,
    WithS3ap,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Negotiation,
    Friends,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Myopic,
    Foresee,
    Compare,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a narrative into a trajectory file.
    Parse {
        #[arg(long)]
        task: String,
        #[arg(long)]
        input: PathBuf,
        /// oracle, mock:<responses.json> or http:<profile>.
        #[arg(long, default_value = "oracle")]
        backend: String,
        #[arg(long, default_value_t = 2)]
        max_retries: usize,
        #[arg(long, default_value = "")]
        model: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a trajectory file and list its issues.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Simulate an oracle scenario and print its ground-truth trajectory.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print belief questions up to this order with their answers.
        #[arg(long)]
        questions: Option<usize>,
    },
    /// Roll a world model forward from an environment's first step.
    Rollout {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value = "oracle")]
        backend: String,
        #[arg(long, default_value = "")]
        model: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Make one foresee-and-act decision at an environment's first step.
    Foresee {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value = "oracle")]
        backend: String,
        #[arg(long, default_value = "")]
        model: String,
    },
    /// Play episodes and report goal scores.
    Episode {
        /// Environment JSON file; alternatively use --suite.
        #[arg(long, conflicts_with = "suite")]
        env: Option<PathBuf>,
        #[arg(long)]
        suite: Option<SuiteArg>,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, value_enum, default_value = "compare")]
        agents: ModeArg,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        max_turns: usize,
        #[arg(long, default_value = "oracle")]
        backend: String,
        #[arg(long, default_value = "")]
        model: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with ground truth.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// JSON file with generator parameters.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        force_false_belief: bool,
        #[arg(long, default_value_t = 2)]
        max_order: usize,
        #[arg(long)]
        paraphrase: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a question-answering benchmark.
    Bench {
        #[arg(long)]
        task: String,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "synthetic")]
        format: FormatArg,
        #[arg(long, value_enum, default_value = "with-s3ap")]
        condition: ConditionArg,
        #[arg(long, default_value = "oracle")]
        backend: String,
        /// Defaults to --backend.
        #[arg(long)]
        parser_backend: Option<String>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long, default_value = "")]
        model: String,
        #[arg(long, default_value_t = 2)]
        max_retries: usize,
        #[arg(long)]
        min_accuracy: Option<f64>,
        #[arg(long)]
        report: PathBuf,
    },
}

/// Settings from the config file with environment overrides applied.
#[derive(Debug, Clone)]
pub struct Settings {
    pub profiles: ProfileSet,
    pub cache_dir: Option<PathBuf>,
    pub parallelism: usize,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut settings = Settings { profiles: ProfileSet::builtin(), cache_dir: None, parallelism: 4 };
        if let Some(path) = path {
            let text = read(path)?;
            let table: toml::Table =
                text.parse().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            settings.profiles = settings.profiles.merge_toml(&text).map_err(CliError::Usage)?;
            if let Some(dir) = table.get("cache_dir") {
                let dir = dir.as_str().ok_or_else(|| CliError::Usage("cache_dir must be a string".into()))?;
                settings.cache_dir = Some(PathBuf::from(dir));
            }
            if let Some(p) = table.get("parallelism") {
                let p = p.as_integer().filter(|p| *p > 0).ok_or_else(|| {
                    CliError::Usage("parallelism must be a positive integer".into())
                })?;
                settings.parallelism = p as usize;
            }
        }
        if let Ok(dir) = std::env::var(ENV_CACHE_DIR) {
            if !dir.is_empty() {
                settings.cache_dir = Some(PathBuf::from(dir));
            }
        }
        Ok(settings)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Pipeline(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Pipeline(format!("cannot write {}: {e}", path.display())))
}

/// Builds a completion backend from `oracle`, `mock:<file>` (a JSON array
/// of responses) or `http:<profile>`.
pub fn make_backend(spec: &str, settings: &Settings) -> Result<Arc<dyn CompletionBackend>, CliError> {
    if spec == "oracle" {
        return Ok(Arc::new(OracleBackend::new()));
    }
    if let Some(path) = spec.strip_prefix("mock:") {
        let text = read(Path::new(path))?;
        let responses: Vec<String> = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{path} must hold a JSON array of strings: {e}")))?;
        return Ok(Arc::new(ScriptedBackend::new(format!("mock:{path}"), responses)));
    }
    if let Some(name) = spec.strip_prefix("http:") {
        let profile = settings.profiles.get(name).ok_or_else(|| {
            let known: Vec<&str> = settings.profiles.names().collect();
            CliError::Usage(format!("unknown profile '{name}'; known profiles: {}", known.join(", ")))
        })?;
        let http = HttpChatBackend::from_env(profile.clone());
        return Ok(match &settings.cache_dir {
            Some(dir) => Arc::new(CachedBackend::new(http, dir).map_err(|e| CliError::Backend(e.to_string()))?),
            None => Arc::new(http),
        });
    }
    Err(CliError::Usage(format!("unknown backend '{spec}'; use oracle, mock:<file> or http:<profile>")))
}

fn task(name: &str) -> Result<TaskName, CliError> {
    name.parse().map_err(CliError::Usage)
}

fn load_env(path: &Path) -> Result<Arc<dyn Environment>, CliError> {
    let cfg: EnvConfig = serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: not an environment definition: {e}", path.display())))?;
    cfg.build().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn pick_agent(env: &dyn Environment, name: Option<&str>) -> Result<AgentId, CliError> {
    match name {
        None => Ok(env.default_learners().into_iter().next().expect("environments have agents")),
        Some(n) => env
            .agents()
            .into_iter()
            .find(|a| a.as_str() == n)
            .ok_or_else(|| CliError::Usage(format!("{n} does not play in {}", env.name()))),
    }
}

fn start(env: &dyn Environment) -> Result<Trajectory, CliError> {
    let mut t = Trajectory::new(env.agents()).map_err(|e| CliError::Pipeline(e.to_string()))?;
    t.push_step(env.initial_step()).map_err(|e| CliError::Pipeline(e.to_string()))?;
    Ok(t)
}

/// Policy, world model and refiner for `agent`: the environment's scripted
/// ones under the oracle backend, model-backed ones otherwise.
type Components = (Box<dyn Policy>, Box<dyn SocialWorldModel>, Box<dyn Refiner>);

fn components(
    env: &Arc<dyn Environment>,
    agent: &AgentId,
    backend: &str,
    model: &str,
    settings: &Settings,
) -> Result<Components, CliError> {
    if backend == "oracle" {
        return Ok((env.scripted_policy(agent), Box::new(OracleSwm::new(env.clone())), env.scripted_refiner(agent)));
    }
    let b = make_backend(backend, settings)?;
    Ok((
        Box::new(LlmPolicy::new(b.clone(), agent.clone(), model)),
        Box::new(LlmSwm::new(b.clone(), model)),
        Box::new(LlmRefiner::new(b, agent.clone(), model)),
    ))
}

struct Counted<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T> Counted<T> {
    fn new(inner: T) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Policy for Counted<Box<dyn Policy>> {
    fn agent(&self) -> &AgentId {
        self.inner.agent()
    }
    fn sample_action(&self, space: &ActionSpace, state: &Trajectory, goal: &Goal) -> Result<AgentAction, AgentError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.sample_action(space, state, goal)
    }
}

impl SocialWorldModel for Counted<Box<dyn SocialWorldModel>> {
    fn predict_others_actions(&self, q: &SwmQuery) -> Result<IndexMap<AgentId, AgentAction>, SwmError> {
        self.inner.predict_others_actions(q)
    }
    fn predict_next_step_given(
        &self,
        q: &SwmQuery,
        others: &IndexMap<AgentId, AgentAction>,
    ) -> Result<NextStepPrediction, SwmError> {
        self.inner.predict_next_step_given(q, others)
    }
    fn predict_next_step(&self, q: &SwmQuery) -> Result<NextStepPrediction, SwmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.predict_next_step(q)
    }
}

impl Refiner for Counted<Box<dyn Refiner>> {
    fn refine(
        &self,
        space: &ActionSpace,
        sim: &[SimulationStep],
        original: &Trajectory,
        goal: &Goal,
        intended: &AgentAction,
    ) -> Result<AgentAction, AgentError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.refine(space, sim, original, goal, intended)
    }
}

fn steps_json(steps: &[SimulationStep]) -> Value {
    Value::Array(steps.iter().map(|s| step_to_value(s, WireForm::ObjectMap)).collect())
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn cmd_parse(
    settings: &Settings,
    task_name: &str,
    input: &Path,
    backend: &str,
    max_retries: usize,
    model: &str,
    out_path: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let task = ParseTask::builtin(task(task_name)?);
    let narrative = read(input)?;
    let backend = make_backend(backend, settings)?;
    let opts = ParseOptions { max_retries, model_id: model.to_string() };
    match parse_narrative(&narrative, &task, &backend, &opts) {
        Ok((traj, attempts)) => {
            if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .map_err(|e| CliError::Pipeline(format!("cannot create {}: {e}", dir.display())))?;
            }
            save_trajectory(out_path, &traj, WireForm::ObjectMap).map_err(|e| CliError::Pipeline(e.to_string()))?;
            writeln!(out, "wrote {} after {} attempt(s)", out_path.display(), attempts.len()).ok();
            Ok(())
        }
        Err(e) => {
            let dump = PathBuf::from(format!("{}.attempts.json", out_path.display()));
            write_file(&dump, &pretty(&e.attempts()))?;
            writeln!(err, "attempts written to {}", dump.display()).ok();
            Err(match e {
                ParseError::Backend { .. } => CliError::Backend(e.to_string()),
                ParseError::EmptyNarrative | ParseError::InvalidTask(_) => CliError::Usage(e.to_string()),
                ParseError::Failed { .. } => CliError::Pipeline(e.to_string()),
            })
        }
    }
}

fn cmd_validate(input: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let decoded = decode_trajectory(&read(input)?, None);
    match decoded.trajectory {
        Some(t) if decoded.issues.is_empty() => {
            writeln!(out, "valid: {} steps, {} agents", t.len(), t.agents().len()).ok();
            Ok(())
        }
        _ => {
            for issue in &decoded.issues {
                writeln!(out, "{issue}").ok();
            }
            Err(CliError::Pipeline(format!("{} issue(s) found", decoded.issues.len())))
        }
    }
}

fn cmd_simulate(scenario: &Path, out_path: Option<&Path>, questions: Option<usize>, out: &mut dyn Write) -> Result<(), CliError> {
    let s: OracleScenario = serde_json::from_str(&read(scenario)?)
        .map_err(|e| CliError::Usage(format!("{}: not a scenario: {e}", scenario.display())))?;
    let traj = ground_truth_trajectory(&s).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let doc = encode_trajectory(&traj, WireForm::ObjectMap);
    match out_path {
        Some(p) => {
            write_file(p, &(doc + "\n"))?;
            writeln!(out, "wrote {} ({} steps)", p.display(), traj.len()).ok();
        }
        None => {
            writeln!(out, "{doc}").ok();
        }
    }
    if let Some(order) = questions {
        for q in belief_questions(&s, order).map_err(|e| CliError::Pipeline(e.to_string()))? {
            writeln!(out, "{} {}", q.question(), q.gold_answer()).ok();
        }
    }
    Ok(())
}

fn cmd_rollout(
    settings: &Settings,
    env_path: &Path,
    agent: Option<&str>,
    n: usize,
    backend: &str,
    model: &str,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let env = load_env(env_path)?;
    let ego = pick_agent(env.as_ref(), agent)?;
    let (policy, swm, _) = components(&env, &ego, backend, model, settings)?;
    let state = start(env.as_ref())?;
    let space = env.action_space(&ego);
    let goal = env.goal(&ego);
    let run = rollout(swm.as_ref(), &state, &ego, |s| crate::agent::sample_action(policy.as_ref(), &space, s, &goal), n)?;
    let last = run.states.last().cloned().unwrap_or(state);
    let doc = encode_trajectory(&last, WireForm::ObjectMap);
    match out_path {
        Some(p) => {
            write_file(p, &(doc + "\n"))?;
            writeln!(out, "wrote {} ({} predicted steps)", p.display(), run.steps.len()).ok();
        }
        None => {
            writeln!(out, "{doc}").ok();
        }
    }
    Ok(())
}

fn cmd_foresee(
    settings: &Settings,
    env_path: &Path,
    agent: Option<&str>,
    n: usize,
    backend: &str,
    model: &str,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = ForeseeConfig::new(n)?;
    let env = load_env(env_path)?;
    let ego = pick_agent(env.as_ref(), agent)?;
    let (policy, swm, refiner) = components(&env, &ego, backend, model, settings)?;
    let (policy, swm, refiner) = (Counted::new(policy), Counted::new(swm), Counted::new(refiner));
    let state = start(env.as_ref())?;
    let outcome = foresee_and_act(&env.action_space(&ego), &env.goal(&ego), &state, &cfg, &swm, &policy, &refiner)?;
    let summary = json!({
        "agent": ego.as_str(),
        "initial_action": outcome.initial_action.raw,
        "intended_action": outcome.intended_action.raw,
        "action": outcome.action.raw,
        "sim_states": steps_json(&outcome.sim_states),
        "calls": {
            "world_model": swm.calls(),
            "sample_action": policy.calls(),
            "act_from_sim": refiner.calls(),
        },
    });
    write!(out, "{}", pretty(&summary)).ok();
    Ok(())
}

#[derive(Debug, Serialize)]
struct EpisodeRow {
    seed: Option<u64>,
    mode: &'static str,
    scores: IndexMap<String, f64>,
    steps: usize,
    forfeits: usize,
}

#[derive(Debug, Serialize)]
struct EpisodeReport {
    environment: String,
    foresight_iterations: usize,
    max_turns: usize,
    learners: Vec<String>,
    episodes: Vec<EpisodeRow>,
    /// Mean learner score per mode.
    means: BTreeMap<&'static str, f64>,
    /// Episodes where foresight scored strictly higher than the myopic run.
    strict_improvements: Option<usize>,
}

impl EpisodeReport {
    fn markdown(&self) -> String {
        let mut md = format!("# {} episodes\n\n| Mode | Mean learner score |\n|---|---|\n", self.environment);
        for (mode, mean) in &self.means {
            md.push_str(&format!("| {mode} | {mean:.3} |\n"));
        }
        if let Some(k) = self.strict_improvements {
            md.push_str(&format!("\nForesight improved on {k} of {} episodes.\n", self.episodes.len() / 2));
        }
        md
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_episode(
    settings: &Settings,
    env_path: Option<&Path>,
    suite: Option<SuiteArg>,
    seeds: u64,
    mode: ModeArg,
    n: usize,
    max_turns: usize,
    backend: &str,
    model: &str,
    report: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = ForeseeConfig::new(n)?;
    let envs: Vec<(Option<u64>, Arc<dyn Environment>)> = match (env_path, suite) {
        (Some(p), _) => vec![(None, load_env(p)?)],
        (None, Some(s)) => (0..seeds)
            .map(|seed| {
                let c = match s {
                    SuiteArg::Negotiation => EnvConfig::Negotiation(NegotiationConfig::from_seed(seed)),
                    SuiteArg::Friends => EnvConfig::Friends(FriendsConfig::from_seed(seed)),
                };
                Ok((Some(seed), c.build()?))
            })
            .collect::<Result<_, AgentError>>()?,
        (None, None) => return Err(CliError::Usage("give --env <file> or --suite <name>".into())),
    };
    let modes: Vec<(&'static str, bool)> = match mode {
        ModeArg::Myopic => vec![("myopic", false)],
        ModeArg::Foresee => vec![("foresee", true)],
        ModeArg::Compare => vec![("myopic", false), ("foresee", true)],
    };
    let mut rows = Vec::new();
    let mut totals: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut improvements = 0;
    let learners: Vec<AgentId> = envs[0].1.default_learners();
    for (seed, env) in &envs {
        let learners = env.default_learners();
        let mut per_mode = Vec::new();
        for &(label, foresee) in &modes {
            let mut actors: IndexMap<AgentId, Box<dyn Actor>> = IndexMap::new();
            for agent in env.agents() {
                let actor: Box<dyn Actor> = if learners.contains(&agent) {
                    let (policy, swm, refiner) = components(env, &agent, backend, model, settings)?;
                    if foresee {
                        Box::new(ForeseeActor { policy, swm, refiner, cfg })
                    } else {
                        Box::new(PolicyActor(policy))
                    }
                } else {
                    Box::new(PolicyActor(env.scripted_policy(&agent)))
                };
                actors.insert(agent, actor);
            }
            let result = run_episode(env.as_ref(), &actors, max_turns)?;
            let learner_score =
                learners.iter().map(|a| result.scores[a].value()).sum::<f64>() / learners.len() as f64;
            *totals.entry(label).or_default() += learner_score;
            per_mode.push(learner_score);
            rows.push(EpisodeRow {
                seed: *seed,
                mode: label,
                scores: result.scores.iter().map(|(a, s)| (a.to_string(), s.value())).collect(),
                steps: result.trajectory.len(),
                forfeits: result.forfeits.len(),
            });
        }
        if let [myopic, foresee] = per_mode.as_slice() {
            if foresee > myopic {
                improvements += 1;
            }
        }
    }
    let count = envs.len() as f64;
    let means: BTreeMap<&'static str, f64> = totals.into_iter().map(|(k, v)| (k, v / count)).collect();
    let report_data = EpisodeReport {
        environment: envs[0].1.name().to_string(),
        foresight_iterations: n,
        max_turns,
        learners: learners.iter().map(|a| a.to_string()).collect(),
        episodes: rows,
        means,
        strict_improvements: (mode == ModeArg::Compare).then_some(improvements),
    };
    for (mode, mean) in &report_data.means {
        writeln!(out, "{mode}: mean learner score {mean:.3} over {} episode(s)", envs.len()).ok();
    }
    if let Some(k) = report_data.strict_improvements {
        writeln!(out, "foresight improved on {k} of {} episode(s)", envs.len()).ok();
    }
    if let Some(dir) = report {
        write_file(&dir.join("report.json"), &pretty(&report_data))?;
        write_file(&dir.join("report.md"), &report_data.markdown())?;
    }
    Ok(())
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    seed: u64,
    count: usize,
    params: Option<&Path>,
    force_false_belief: bool,
    max_order: usize,
    paraphrase: bool,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut p: GenParams = match params {
        Some(path) => serde_json::from_str(&read(path)?)
            .map_err(|e| CliError::Usage(format!("{}: bad generator parameters: {e}", path.display())))?,
        None => GenParams::default(),
    };
    p.force_false_belief |= force_false_belief;
    let records = generate_synthetic(seed, count, &p, max_order, paraphrase).map_err(|e| match e {
        BenchError::Oracle(o) => CliError::Usage(o.to_string()),
        other => CliError::Pipeline(other.to_string()),
    })?;
    let mut files = BTreeMap::new();
    let mut put = |rel: String, text: String| -> Result<(), CliError> {
        write_file(&out_dir.join(&rel), &text)?;
        files.insert(rel, sha256_hex(&text));
        Ok(())
    };
    let mut scenarios = String::new();
    let mut qa = String::new();
    for r in &records {
        scenarios.push_str(&serde_json::to_string(r).expect("serializable"));
        scenarios.push('\n');
        for item in r.items() {
            qa.push_str(&serde_json::to_string(&item).expect("serializable"));
            qa.push('\n');
        }
        put(format!("narratives/{}.txt", r.id), r.narrative.clone() + "\n")?;
        put(format!("trajectories/{}.s3ap.json", r.id), pretty(&r.ground_truth))?;
    }
    put("scenarios.jsonl".into(), scenarios)?;
    put("qa.jsonl".into(), qa)?;
    let manifest = json!({
        "seed": seed,
        "count": count,
        "params": p,
        "max_order": max_order,
        "paraphrase": paraphrase,
        "scenarios": records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
        "files": files,
    });
    write_file(&out_dir.join("manifest.json"), &pretty(&manifest))?;
    writeln!(out, "wrote {} scenario(s) to {}", records.len(), out_dir.display()).ok();
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    settings: &Settings,
    task_name: &str,
    dataset: &Path,
    format: FormatArg,
    condition: ConditionArg,
    backend: &str,
    parser_backend: Option<&str>,
    parallelism: Option<usize>,
    model: &str,
    max_retries: usize,
    min_accuracy: Option<f64>,
    report_dir: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let task = task(task_name)?;
    let format = match format {
        FormatArg::Synthetic => DatasetFormat::S3apSynthetic,
        FormatArg::Generic => DatasetFormat::GenericJsonl,
    };
    let condition = match condition {
        ConditionArg::Baseline => Condition::Baseline,
        ConditionArg::WithS3ap => Condition::WithS3ap,
    };
    let parallelism = parallelism.unwrap_or(settings.parallelism);
    if parallelism == 0 {
        return Err(CliError::Usage("--parallelism must be at least 1".into()));
    }
    if !dataset.exists() {
        return Err(CliError::Usage(format!("dataset {} does not exist", dataset.display())));
    }
    let items = load_dataset(dataset, format).map_err(|e| match e {
        BenchError::Io { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Pipeline(e.to_string()),
    })?;
    let answer = make_backend(backend, settings)?;
    let parser = match condition {
        Condition::WithS3ap => Some(make_backend(parser_backend.unwrap_or(backend), settings)?),
        Condition::Baseline => None,
    };
    let cfg = BenchConfig { parallelism, model_id: model.to_string(), max_retries, min_accuracy, ..BenchConfig::new(task, condition) };
    let report = run_benchmark(&items, &cfg, parser.as_deref(), answer.as_ref()).map_err(|e| CliError::Usage(e.to_string()))?;
    report.write(report_dir).map_err(|e| CliError::Pipeline(e.to_string()))?;
    writeln!(out, "{} {}: accuracy {:.3} on {} item(s)", report.task, condition.label(), report.accuracy, report.item_count)
        .ok();
    if let Some(a) = report.all_qs {
        writeln!(out, "all questions per group: {a:.3}").ok();
    }
    if !report.meets_threshold() {
        return Err(CliError::Pipeline(format!(
            "accuracy {:.3} is below the required {:.3}",
            report.accuracy,
            min_accuracy.unwrap_or_default()
        )));
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Parse { task, input, backend, max_retries, model, out: path } => {
            cmd_parse(&settings, &task, &input, &backend, max_retries, &model, &path, out, err)
        }
        Command::Validate { input } => cmd_validate(&input, out),
        Command::Simulate { scenario, out: path, questions } => cmd_simulate(&scenario, path.as_deref(), questions, out),
        Command::Rollout { env, agent, n, backend, model, out: path } => {
            cmd_rollout(&settings, &env, agent.as_deref(), n, &backend, &model, path.as_deref(), out)
        }
        Command::Foresee { env, agent, n, backend, model } => {
            cmd_foresee(&settings, &env, agent.as_deref(), n, &backend, &model, out)
        }
        Command::Episode { env, suite, seeds, agents, n, max_turns, backend, model, report } => cmd_episode(
            &settings,
            env.as_deref(),
            suite,
            seeds,
            agents,
            n,
            max_turns,
            &backend,
            &model,
            report.as_deref(),
            out,
        ),
        Command::Gen { seed, count, params, force_false_belief, max_order, paraphrase, out_dir } => {
            cmd_gen(seed, count, params.as_deref(), force_false_belief, max_order, paraphrase, &out_dir, out)
        }
        Command::Bench {
            task,
            dataset,
            format,
            condition,
            backend,
            parser_backend,
            parallelism,
            model,
            max_retries,
            min_accuracy,
            report,
        } => cmd_bench(
            &settings,
            &task,
            &dataset,
            format,
            condition,
            &backend,
            parser_backend.as_deref(),
            parallelism,
            &model,
            max_retries,
            min_accuracy,
            &report,
            out,
        ),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    write!(out, "{e}").ok();
                    EXIT_OK
                }
                _ => {
                    write!(err, "{e}").ok();
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            writeln!(err, "error: {e}").ok();
            e.exit_code()
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        CliError::Backend(e.to_string())
    }
}
