//! Acceptance checks. Each criterion prints one PASS, FAIL or SKIP line;
//! the process exits nonzero when any criterion fails.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use serde_json::Value;

use s3ap::agent::{
    foresee_and_act, run_episode, ActionSpace, Actor, AgentError, Environment, ForeseeActor, ForeseeConfig,
    FriendsConfig, FriendsEnv, FriendsRefiner, Goal, GreedyBuyerPolicy, MyopicFriendPolicy, NegotiationConfig,
    NegotiationEnv, NegotiationRefiner, Policy, PolicyActor, Refiner, ScriptedSellerPolicy,
};
use s3ap::backend::{
    BackendError, BackendKind, CachedBackend, CompletionBackend, CompletionRequest, HttpChatBackend, OracleBackend,
    ProfileSet,
};
use s3ap::bench::{
    generate_synthetic, load_dataset, parse_dataset, run_benchmark, BenchConfig, Condition, DatasetFormat, QAItem,
    SyntheticRecord,
};
use s3ap::oracle::{
    answer_from_trajectory, query_belief, render_narrative, simulate, Event, EventKind, GenParams, OracleScenario,
    UNKNOWN_ANSWER,
};
use s3ap::parser::{reference_parse, TaskName};
use s3ap::schema::{decode_step, embedded_schema, encode_step, WireForm};
use s3ap::swm::{NextStepPrediction, SocialWorldModel, SwmError, SwmQuery};
use s3ap::{reconstruct_memory, agent_view, AgentAction, AgentId, CoreError, ObservationExpr, SimulationStep, Trajectory};

enum Verdict {
    Pass(String),
    Skip(String),
}

type Check = fn() -> Result<Verdict, String>;

fn main() {
    let criteria: [(u8, &str, Option<Duration>, Check); 9] = [
        (1, "schema fidelity", Some(Duration::from_secs(5)), schema_fidelity),
        (2, "tag semantics", Some(Duration::from_secs(5)), tag_semantics),
        (3, "memory law", Some(Duration::from_secs(5)), memory_law),
        (4, "oracle equivalence", Some(Duration::from_secs(60)), oracle_equivalence),
        (5, "pipeline closure without a model", Some(Duration::from_secs(60)), pipeline_closure),
        (6, "foresee-and-act shape", Some(Duration::from_secs(1)), foresee_shape),
        (7, "foresight dominance", Some(Duration::from_secs(120)), foresight_dominance),
        (8, "determinism", None, determinism),
        (9, "live directional check", None, live_directional),
    ];
    let mut failed = 0;
    for (n, title, budget, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let line = match result {
            Ok(Ok(Verdict::Pass(detail))) => match budget {
                Some(b) if elapsed > b => {
                    failed += 1;
                    format!("FAIL {title}: {detail}; took {elapsed:.2?}, over the {b:?} budget")
                }
                _ => format!("PASS {title}: {detail} ({elapsed:.2?})"),
            },
            Ok(Ok(Verdict::Skip(why))) => format!("SKIP {title}: {why}"),
            Ok(Err(why)) => {
                failed += 1;
                format!("FAIL {title}: {why} ({elapsed:.2?})")
            }
            Err(_) => {
                failed += 1;
                format!("FAIL {title}: panicked ({elapsed:.2?})")
            }
        };
        println!("criterion {n}: {line}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_property<S: proptest::strategy::Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

// ---------------------------------------------------------------- 1

fn canonical(text: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&v).expect("serializable"))
}

fn schema_fidelity() -> Result<Verdict, String> {
    let fixture = include_str!("fixtures/socialized_structure.schema.json");
    ensure(canonical(embedded_schema())? == canonical(fixture)?, || {
        "the embedded schema differs from the checked-in fixture".into()
    })?;
    for form in [WireForm::ObjectMap, WireForm::StringList] {
        run_property(1000, common::step(), |step| {
            let text = encode_step(&step, form);
            for hint in [Some(form), None] {
                let decoded = decode_step(&text, hint);
                if !decoded.issues.is_empty() {
                    return Err(fail(format!("{text}: {:?}", decoded.issues)));
                }
                if decoded.step.as_ref() != Some(&step) {
                    return Err(fail(format!("{text} decoded to {:?}", decoded.step)));
                }
            }
            Ok(())
        })?;
    }
    Ok(Verdict::Pass("fixture matches; 1000 steps round-trip in each wire form".into()))
}

// ---------------------------------------------------------------- 2

fn with_observation(traj: &Trajectory, t: usize, agent: &AgentId, raw: &str) -> Trajectory {
    let mut steps = traj.steps().to_vec();
    steps[t].observations[agent] = ObservationExpr::new(raw);
    Trajectory::from_steps(traj.agents().to_vec(), steps).unwrap()
}

fn tag_semantics() -> Result<Verdict, String> {
    let strategy = (common::trajectory(), 0usize..4, 0usize..4);
    run_property(1000, strategy, |(traj, pick_agent, pick_index)| {
        let agents = traj.agents().to_vec();
        let n = agents.len();

        for t in 0..traj.len() {
            for a in &agents {
                let r = traj.resolve_observation(t, a).map_err(|e| fail(e.to_string()))?;
                for text in std::iter::once(r.external.as_str()).chain(r.mental.as_deref()) {
                    if text.contains("<same_as_") || text.contains("<mental_state>") {
                        return Err(fail(format!("tag survived resolution at {t}/{a}: {text}")));
                    }
                }
            }
        }

        let who = &agents[pick_agent % n];
        let x = pick_index % n + 1;
        for tag in [format!("<same_as_last_action_{x} />"), "<same_as_last_action />".to_string()] {
            let bad = with_observation(&traj, 0, who, &format!("{tag} <same_as_state />"));
            match bad.resolve_observation(0, who) {
                Err(CoreError::TagAtOrigin { .. }) => {}
                other => return Err(fail(format!("{tag} at ordinal 0 gave {other:?}"))),
            }
        }

        for t in 1..traj.len() {
            let actor = &agents[x - 1];
            let expected = format!("{actor}: {}", traj.steps()[t - 1].actions[actor].raw);
            let probe = with_observation(&traj, t, who, &format!("<same_as_last_action_{x} />"));
            let got = probe.resolve_observation(t, who).map_err(|e| fail(e.to_string()))?;
            if got.external != expected {
                return Err(fail(format!("index {x} at {t}: {:?} != {expected:?}", got.external)));
            }
            let beyond = with_observation(&traj, t, who, &format!("<same_as_last_action_{} />", n + 1));
            if !matches!(beyond.resolve_observation(t, who), Err(CoreError::UnknownAgentIndex { .. })) {
                return Err(fail(format!("index {} accepted over {n} agents", n + 1)));
            }
            // Actions recorded at t never feed the observation at t.
            let mut steps = traj.steps().to_vec();
            for act in steps[t].actions.values_mut() {
                *act = AgentAction::new("something else entirely");
            }
            let shuffled = Trajectory::from_steps(agents.clone(), steps).unwrap();
            for a in &agents {
                if shuffled.resolve_observation(t, a) != traj.resolve_observation(t, a) {
                    return Err(fail(format!("resolution at {t} read actions of {t}")));
                }
            }
        }
        Ok(())
    })?;
    Ok(Verdict::Pass("1000 trajectories: closure, origin error, index law".into()))
}

// ---------------------------------------------------------------- 3

fn memory_law() -> Result<Verdict, String> {
    run_property(500, common::trajectory(), |traj| {
        for agent in traj.agents() {
            let mut previous = Vec::new();
            for t in 0..=traj.len() {
                let m = reconstruct_memory(&traj, agent, t).map_err(|e| fail(e.to_string()))?;
                if m.entries.len() != 2 * t {
                    return Err(fail(format!("{agent} at {t}: {} entries", m.entries.len())));
                }
                if t > 0 && (m.entries.len() <= previous.len() || m.entries[..previous.len()] != previous[..]) {
                    return Err(fail(format!("{agent}: memory at {} is not a strict prefix of memory at {t}", t - 1)));
                }
                if t < traj.len() {
                    let (view, _) = agent_view(&traj, agent, t).map_err(|e| fail(e.to_string()))?;
                    if view != m {
                        return Err(fail(format!("agent_view disagrees with reconstruct_memory at {t}")));
                    }
                }
                previous = m.entries;
            }
        }
        Ok(())
    })?;
    Ok(Verdict::Pass("500 trajectories: 2t entries, strict prefixes".into()))
}

// ---------------------------------------------------------------- 4

const OBJECT: &str = "marble";

struct World {
    locations: Vec<&'static str>,
    containers: Vec<(&'static str, &'static str)>,
    start: &'static str,
}

/// First-order beliefs about the object by replaying, for each agent, only
/// what it witnessed: the scene when it is present, moves made in front of
/// it. Claims never change what the listener itself believes.
fn witnessed_replay(s: &OracleScenario) -> Vec<Vec<Option<String>>> {
    let container_loc: HashMap<&str, &str> = s.containers.iter().map(|(c, l)| (c.as_str(), l.as_str())).collect();
    let mut placement = s.objects[OBJECT].clone();
    let here = container_loc[placement.as_str()].to_string();
    let mut loc: Vec<Option<String>> = s.agents.values().cloned().collect();
    let names: Vec<&AgentId> = s.agents.keys().collect();
    let mut belief: Vec<Option<String>> =
        loc.iter().map(|l| (l.as_deref() == Some(here.as_str())).then(|| placement.clone())).collect();
    let mut out = vec![belief.clone()];
    for e in &s.events {
        let i = names.iter().position(|n| **n == e.actor).unwrap();
        match &e.kind {
            EventKind::Enter { location } => {
                loc[i] = Some(location.clone());
                if *location == here {
                    belief[i] = Some(placement.clone());
                }
            }
            EventKind::Exit { .. } => loc[i] = None,
            EventKind::MoveObject { to, .. } => {
                placement = to.clone();
                for (j, l) in loc.iter().enumerate() {
                    if l.as_deref() == Some(here.as_str()) {
                        belief[j] = Some(placement.clone());
                    }
                }
            }
            EventKind::PublicClaim { .. } | EventKind::PrivateTell { .. } => {}
        }
        out.push(belief.clone());
    }
    out
}

fn legal_events(s: &OracleScenario, loc: &[Option<String>], placement: &str) -> Vec<Event> {
    let here = &s.containers[placement];
    let kept: Vec<&String> = s.containers.iter().filter(|(_, l)| *l == here).map(|(c, _)| c).collect();
    let names: Vec<&AgentId> = s.agents.keys().collect();
    let mut out = Vec::new();
    for (i, actor) in names.iter().enumerate() {
        match &loc[i] {
            None => {
                for l in &s.locations {
                    out.push(Event::new(actor, EventKind::Enter { location: l.clone() }));
                }
            }
            Some(l) => out.push(Event::new(actor, EventKind::Exit { location: l.clone() })),
        }
        if loc[i].as_ref() == Some(here) {
            for c in kept.iter().filter(|c| c.as_str() != placement) {
                out.push(Event::new(actor, EventKind::MoveObject { object: OBJECT.into(), to: (*c).clone() }));
            }
        }
        for c in &kept {
            out.push(Event::new(actor, EventKind::PublicClaim { object: OBJECT.into(), container: (*c).clone() }));
            for r in names.iter().filter(|r| *r != actor) {
                out.push(Event::new(
                    actor,
                    EventKind::PrivateTell { recipient: (*r).clone(), object: OBJECT.into(), container: (*c).clone() },
                ));
            }
        }
    }
    out
}

/// Extends `events` to every legal sequence of length `depth`, checking
/// each complete sequence. Claims are always legal, so every shorter
/// scenario is a prefix of some complete one and is checked through the
/// per-time comparison.
fn sweep(s: &mut OracleScenario, loc: &mut Vec<Option<String>>, placement: &str, depth: usize, count: &mut usize) -> Result<(), String> {
    if depth == 0 {
        *count += 1;
        let snaps = simulate(s).map_err(|e| format!("{e} in {:?}", s.events))?;
        let naive = witnessed_replay(s);
        for (t, beliefs) in naive.iter().enumerate() {
            for (a, expected) in s.agents.keys().zip(beliefs) {
                let got = query_belief(&snaps, std::slice::from_ref(a), OBJECT, t).map_err(|e| e.to_string())?;
                if got != *expected {
                    return Err(format!("{a} at {t}: simulate {got:?}, replay {expected:?}, events {:?}", s.events));
                }
            }
        }
        return Ok(());
    }
    for e in legal_events(s, loc, placement) {
        let i = s.agents.get_index_of(&e.actor).unwrap();
        let saved = loc[i].clone();
        let mut next_placement = placement.to_string();
        match &e.kind {
            EventKind::Enter { location } => loc[i] = Some(location.clone()),
            EventKind::Exit { .. } => loc[i] = None,
            EventKind::MoveObject { to, .. } => next_placement = to.clone(),
            _ => {}
        }
        s.events.push(e);
        sweep(s, loc, &next_placement, depth - 1, count)?;
        s.events.pop();
        loc[i] = saved;
    }
    Ok(())
}

fn oracle_equivalence() -> Result<Verdict, String> {
    let worlds = [
        World { locations: vec!["room"], containers: vec![("basket", "room"), ("box", "room")], start: "basket" },
        World { locations: vec!["room"], containers: vec![("basket", "room"), ("box", "room")], start: "box" },
        World { locations: vec!["room", "yard"], containers: vec![("basket", "room"), ("box", "yard")], start: "basket" },
    ];
    let names = ["Sally", "Anne", "Max"];
    let mut count = 0;
    for w in &worlds {
        let spots: Vec<Option<String>> =
            std::iter::once(None).chain(w.locations.iter().map(|l| Some(l.to_string()))).collect();
        for n in 1..=3usize {
            // Every assignment of starting spots to the n agents.
            for code in 0..spots.len().pow(n as u32) {
                let mut c = code;
                let starts: Vec<Option<String>> = (0..n)
                    .map(|_| {
                        let s = spots[c % spots.len()].clone();
                        c /= spots.len();
                        s
                    })
                    .collect();
                let mut scenario = OracleScenario {
                    locations: w.locations.iter().map(|l| l.to_string()).collect(),
                    containers: w.containers.iter().map(|(c, l)| (c.to_string(), l.to_string())).collect(),
                    objects: [(OBJECT.to_string(), w.start.to_string())].into_iter().collect(),
                    agents: names[..n].iter().map(|a| AgentId::new(a).unwrap()).zip(starts.clone()).collect(),
                    events: Vec::new(),
                };
                let mut loc = starts;
                sweep(&mut scenario, &mut loc, w.start, 4, &mut count)?;
            }
        }
    }
    Ok(Verdict::Pass(format!("{count} four-event scenarios and all their prefixes agree")))
}

// ---------------------------------------------------------------- 5

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["s3ap"];
    argv.extend_from_slice(args);
    let code = s3ap::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn pipeline_closure() -> Result<Verdict, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_dir = dir.path().join("corpus");
    let out_arg = out_dir.to_str().unwrap();
    let (code, _, err) =
        cli(&["gen", "--seed", "7", "--count", "500", "--force-false-belief", "--max-order", "4", "--out-dir", out_arg]);
    ensure(code == 0, || format!("gen exited {code}: {err}"))?;

    let text = std::fs::read_to_string(out_dir.join("scenarios.jsonl")).map_err(|e| e.to_string())?;
    let records: Vec<SyntheticRecord> =
        text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    ensure(records.len() == 500, || format!("{} records", records.len()))?;

    let mut questions = 0;
    for r in &records {
        let snaps = simulate(&r.scenario).map_err(|e| e.to_string())?;
        let end = snaps.len() - 1;
        let diverges = r.scenario.objects.keys().any(|o| {
            let truth = snaps[end].placement(o).map(str::to_string);
            r.scenario.agents.keys().any(|a| query_belief(&snaps, std::slice::from_ref(a), o, end).unwrap() != truth)
        });
        ensure(diverges, || format!("{}: no first-order false belief", r.id))?;

        ensure(r.narrative == render_narrative(&r.scenario), || format!("{}: narrative is not the rendering", r.id))?;
        let parsed = reference_parse(&r.narrative).map_err(|e| format!("{}: {e}", r.id))?;
        for q in &r.questions {
            questions += 1;
            let truth = query_belief(&snaps, &q.chain, &q.object, end)
                .map_err(|e| e.to_string())?
                .unwrap_or_else(|| UNKNOWN_ANSWER.to_string());
            ensure(q.gold_answer() == truth, || format!("{}: gold {} but beliefs say {truth}", r.id, q.gold_answer()))?;
            let read = answer_from_trajectory(&parsed, &q.chain, &q.object).map_err(|e| e.to_string())?;
            ensure(read == truth, || format!("{}: {} read {read}, expected {truth}", r.id, q.question()))?;
        }
    }

    let items = load_dataset(&out_dir.join("scenarios.jsonl"), DatasetFormat::S3apSynthetic).map_err(|e| e.to_string())?;
    ensure(items.len() == questions, || format!("{} items for {questions} questions", items.len()))?;
    let oracle = OracleBackend::new();
    let cfg = BenchConfig::new(TaskName::ToMi, Condition::WithS3ap);
    let report = run_benchmark(&items, &cfg, Some(&oracle), &oracle).map_err(|e| e.to_string())?;
    ensure(report.accuracy == 1.0, || format!("accuracy {}", report.accuracy))?;
    Ok(Verdict::Pass(format!("500 scenarios, {questions} questions, accuracy {:.3}", report.accuracy)))
}

// ---------------------------------------------------------------- 6

struct CountingPolicy {
    me: AgentId,
    calls: AtomicUsize,
}

impl Policy for CountingPolicy {
    fn agent(&self) -> &AgentId {
        &self.me
    }
    fn sample_action(&self, _: &ActionSpace, _: &Trajectory, _: &Goal) -> Result<AgentAction, AgentError> {
        Ok(AgentAction::new(format!("act {}", self.calls.fetch_add(1, Ordering::SeqCst))))
    }
}

struct CountingSwm {
    calls: AtomicUsize,
}

impl SocialWorldModel for CountingSwm {
    fn predict_others_actions(&self, q: &SwmQuery) -> Result<IndexMap<AgentId, AgentAction>, SwmError> {
        Ok(q.trajectory.agents().iter().filter(|a| **a != q.ego).map(|a| (a.clone(), AgentAction::new("wait"))).collect())
    }
    fn predict_next_step_given(
        &self,
        q: &SwmQuery,
        others: &IndexMap<AgentId, AgentAction>,
    ) -> Result<NextStepPrediction, SwmError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let mut step = q.trajectory.last_step().unwrap().clone();
        step.state = format!("predicted {n}");
        for a in step.actions.values_mut() {
            *a = AgentAction::none();
        }
        Ok(NextStepPrediction { others_actions: others.clone(), next_step: step, confidence_note: None })
    }
}

#[derive(Default)]
struct RecordingRefiner {
    calls: AtomicUsize,
    seen: Mutex<Option<(Vec<String>, Trajectory, AgentAction)>>,
}

impl Refiner for RecordingRefiner {
    fn refine(
        &self,
        _: &ActionSpace,
        sim: &[SimulationStep],
        original: &Trajectory,
        _: &Goal,
        intended: &AgentAction,
    ) -> Result<AgentAction, AgentError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let states = sim.iter().map(|s| s.state.clone()).collect();
        *self.seen.lock().unwrap() = Some((states, original.clone(), intended.clone()));
        Ok(AgentAction::new("act 99"))
    }
}

fn foresee_shape() -> Result<Verdict, String> {
    let me = AgentId::new("Ego").unwrap();
    let other = AgentId::new("Other").unwrap();
    let step = SimulationStep::new(
        s3ap::Timestep::new("0", 0).unwrap(),
        "start",
        IndexMap::from([(me.clone(), ObservationExpr::new("<same_as_state />")), (other.clone(), ObservationExpr::none())]),
        IndexMap::from([(me.clone(), AgentAction::none()), (other.clone(), AgentAction::none())]),
    )
    .unwrap();
    let state = Trajectory::from_steps(vec![me.clone(), other], vec![step]).unwrap();
    let space = ActionSpace::free_text("act <n>", r"act \d+").map_err(|e| e.to_string())?;
    let goal = Goal::new("count", "none").map_err(|e| e.to_string())?;
    for n in [1usize, 2, 5] {
        let policy = CountingPolicy { me: me.clone(), calls: AtomicUsize::new(0) };
        let swm = CountingSwm { calls: AtomicUsize::new(0) };
        let refiner = RecordingRefiner::default();
        let cfg = ForeseeConfig::new(n).map_err(|e| e.to_string())?;
        let out = foresee_and_act(&space, &goal, &state, &cfg, &swm, &policy, &refiner).map_err(|e| e.to_string())?;
        let counts = (swm.calls.load(Ordering::SeqCst), policy.calls.load(Ordering::SeqCst), refiner.calls.load(Ordering::SeqCst));
        ensure(counts == (n, n + 1, 1), || format!("N={n}: calls (swm, sample, refine) = {counts:?}"))?;
        let (sim, original, intended) = refiner.seen.lock().unwrap().take().unwrap();
        let expected: Vec<String> = (0..n).map(|i| format!("predicted {i}")).collect();
        ensure(sim == expected, || format!("N={n}: sim states {sim:?}"))?;
        ensure(out.sim_states.len() == n, || format!("N={n}: {} sim states returned", out.sim_states.len()))?;
        ensure(original == state, || format!("N={n}: the refiner saw a rolled-forward state"))?;
        ensure(intended.raw == format!("act {n}"), || format!("N={n}: intended {}", intended.raw))?;
        ensure(out.initial_action.raw == "act 0" && out.action.raw == "act 99", || format!("N={n}: actions {:?}", out.action))?;
    }
    Ok(Verdict::Pass("N in {1, 2, 5}: N model calls, N+1 samples, one refinement on the original state".into()))
}

// ---------------------------------------------------------------- 7

fn negotiation_actors(env: &NegotiationEnv, foresee: bool) -> IndexMap<AgentId, Box<dyn Actor>> {
    let buyer: Box<dyn Actor> = if foresee {
        Box::new(ForeseeActor {
            policy: Box::new(GreedyBuyerPolicy::new(env.clone())),
            swm: Box::new(s3ap::swm::OracleSwm::new(env.clone())),
            refiner: Box::new(NegotiationRefiner::new(env.clone())),
            cfg: ForeseeConfig::default(),
        })
    } else {
        Box::new(PolicyActor(GreedyBuyerPolicy::new(env.clone())))
    };
    IndexMap::from([
        (env.buyer().clone(), buyer),
        (env.seller().clone(), Box::new(PolicyActor(ScriptedSellerPolicy::new(env.clone()))) as Box<dyn Actor>),
    ])
}

/// The bargaining rules, restated: the buyer moves first each round. An
/// accepted ask closes at the ask; an offer at or above the ask is taken
/// at the offer; otherwise the seller comes down by its step, never below
/// its reservation. The game ends without a deal after the last round.
struct Bargain {
    start: i64,
    step: i64,
    floor: i64,
    value: i64,
    rounds: usize,
}

impl Bargain {
    fn of(c: &NegotiationConfig) -> Self {
        Self { start: c.start_ask, step: c.step, floor: c.reservation, value: c.buyer_value, rounds: c.max_rounds }
    }

    fn buyer_score(&self, price: Option<i64>) -> f64 {
        price.map_or(0.0, |p| (10.0 * (self.value - p) as f64 / (self.value - self.floor) as f64).clamp(0.0, 10.0))
    }

    /// Best buyer score from `round` with the seller asking `ask`, over
    /// every accept and every integer offer.
    fn best(&self, round: usize, ask: i64, memo: &mut HashMap<(usize, i64), f64>) -> f64 {
        if let Some(v) = memo.get(&(round, ask)) {
            return *v;
        }
        let mut best = self.buyer_score(Some(ask));
        for offer in 0..=self.value.max(self.start) {
            let v = if offer >= ask {
                self.buyer_score(Some(offer))
            } else if round + 1 >= self.rounds {
                0.0
            } else {
                self.best(round + 1, (ask - self.step).max(self.floor), memo)
            };
            best = best.max(v);
        }
        memo.insert((round, ask), best);
        best
    }

    /// The buyer's score for a played trajectory, replayed from its action
    /// texts.
    fn replay(&self, traj: &Trajectory, buyer: &AgentId, seller: &AgentId) -> f64 {
        let amount = |s: &str, verb: &str| s.strip_prefix(verb).and_then(|x| x.trim().parse::<i64>().ok());
        let mut ask = self.start;
        for (round, step) in traj.steps().iter().enumerate() {
            let (b, s) = (step.actions[buyer].raw.as_str(), step.actions[seller].raw.as_str());
            if b == "accept" {
                return self.buyer_score(Some(ask));
            }
            if let (Some(offer), "accept") = (amount(b, "offer"), s) {
                return self.buyer_score(Some(offer));
            }
            if let Some(c) = amount(s, "counter") {
                ask = c;
            }
            if round + 1 >= self.rounds {
                return 0.0;
            }
        }
        0.0
    }
}

fn friends_actors(env: &FriendsEnv, foresee: bool) -> IndexMap<AgentId, Box<dyn Actor>> {
    env.agents()
        .into_iter()
        .map(|a| {
            let policy = MyopicFriendPolicy::new(env.clone(), &a).unwrap();
            let actor: Box<dyn Actor> = if foresee {
                Box::new(ForeseeActor {
                    policy: Box::new(policy),
                    swm: Box::new(s3ap::swm::OracleSwm::new(env.clone())),
                    refiner: Box::new(FriendsRefiner::new(env.clone(), &a).unwrap()),
                    cfg: ForeseeConfig::default(),
                })
            } else {
                Box::new(PolicyActor(policy))
            };
            (a, actor)
        })
        .collect()
}

fn foresight_dominance() -> Result<Verdict, String> {
    let (mut myopic_sum, mut foresee_sum, mut strict, mut optimal_hits) = (0.0, 0.0, 0, 0);
    for seed in 0..100u64 {
        let cfg = NegotiationConfig::from_seed(seed);
        let env = NegotiationEnv::new(cfg.clone()).map_err(|e| e.to_string())?;
        let rules = Bargain::of(&cfg);
        let optimum = rules.best(0, cfg.start_ask, &mut HashMap::new());
        let mut scores = [0.0; 2];
        for (k, foresee) in [false, true].into_iter().enumerate() {
            let result = run_episode(&env, &negotiation_actors(&env, foresee), 50).map_err(|e| e.to_string())?;
            let score = result.scores[env.buyer()].value();
            let replayed = rules.replay(&result.trajectory, env.buyer(), env.seller());
            ensure((score - replayed).abs() < 1e-9, || format!("seed {seed}: reported {score}, replayed {replayed}"))?;
            ensure(score <= optimum + 1e-9, || format!("seed {seed}: score {score} beats the optimum {optimum}"))?;
            scores[k] = score;
        }
        let [m, f] = scores;
        myopic_sum += m;
        foresee_sum += f;
        if f > m + 1e-9 {
            strict += 1;
        }
        if (f - optimum).abs() < 1e-9 {
            optimal_hits += 1;
        }
    }
    ensure(foresee_sum >= myopic_sum, || format!("negotiation mean {:.3} < {:.3}", foresee_sum / 100.0, myopic_sum / 100.0))?;
    ensure(strict >= 30, || format!("strict improvement on {strict} of 100 seeds"))?;

    let (mut fm, mut ff) = (0.0, 0.0);
    for seed in 0..100u64 {
        let env = FriendsEnv::new(FriendsConfig::from_seed(seed)).map_err(|e| e.to_string())?;
        let mean = |foresee| -> Result<f64, String> {
            let r = run_episode(&env, &friends_actors(&env, foresee), 50).map_err(|e| e.to_string())?;
            Ok(r.scores.values().map(|s| s.value()).sum::<f64>() / r.scores.len() as f64)
        };
        fm += mean(false)?;
        ff += mean(true)?;
    }
    ensure(ff >= fm, || format!("cooperative mean {:.3} < {:.3}", ff / 100.0, fm / 100.0))?;
    Ok(Verdict::Pass(format!(
        "negotiation {:.3} vs {:.3} myopic, strict on {strict}/100, optimal on {optimal_hits}/100; cooperative {:.3} vs {:.3}",
        foresee_sum / 100.0,
        myopic_sum / 100.0,
        ff / 100.0,
        fm / 100.0
    )))
}

// ---------------------------------------------------------------- 8

struct Counting<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B: CompletionBackend> CompletionBackend for Counting<B> {
    fn identity(&self) -> &str {
        self.inner.identity()
    }
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for name in names {
        let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{name} differs between {} and {}", a.display(), b.display()))?;
    }
    Ok(())
}

fn determinism() -> Result<Verdict, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let path = |p: &str| root.join(p).to_str().unwrap().to_string();

    let (code, _, err) = cli(&["gen", "--seed", "3", "--count", "20", "--out-dir", &path("corpus")]);
    ensure(code == 0, || format!("gen exited {code}: {err}"))?;
    let (code, _, err) = cli(&["gen", "--seed", "3", "--count", "20", "--out-dir", &path("corpus2")]);
    ensure(code == 0, || format!("gen exited {code}: {err}"))?;
    same_files(&root.join("corpus"), &root.join("corpus2"), &["manifest.json", "scenarios.jsonl", "qa.jsonl"])?;

    let dataset = path("corpus/scenarios.jsonl");
    for (condition, dirs) in [("with-s3ap", ["b1", "b2"]), ("baseline", ["b3", "b4"])] {
        for d in dirs {
            let (code, _, err) =
                cli(&["bench", "--task", "tomi", "--dataset", &dataset, "--condition", condition, "--report", &path(d)]);
            ensure(code == 0, || format!("bench exited {code}: {err}"))?;
        }
        same_files(&root.join(dirs[0]), &root.join(dirs[1]), &["report.json", "report.md"])?;
    }
    for d in ["e1", "e2"] {
        let (code, _, err) = cli(&["episode", "--suite", "negotiation", "--seeds", "30", "--report", &path(d)]);
        ensure(code == 0, || format!("episode exited {code}: {err}"))?;
    }
    same_files(&root.join("e1"), &root.join("e2"), &["report.json", "report.md"])?;

    // Cold and warm runs through the disk cache.
    let items = load_dataset(Path::new(&dataset), DatasetFormat::S3apSynthetic).map_err(|e| e.to_string())?;
    let cfg = BenchConfig::new(TaskName::ToMi, Condition::WithS3ap);
    let mut reports = Vec::new();
    let mut inner_calls = Vec::new();
    for _ in 0..2 {
        let backend = CachedBackend::new(Counting { inner: OracleBackend::new(), calls: AtomicUsize::new(0) }, root.join("cache"))
            .map_err(|e| e.to_string())?;
        let report = run_benchmark(&items, &cfg, Some(&backend), &backend).map_err(|e| e.to_string())?;
        reports.push(report.to_json());
        inner_calls.push(backend.inner().calls.load(Ordering::SeqCst));
    }
    ensure(reports[0] == reports[1], || "cold and warm cached reports differ".into())?;
    ensure(inner_calls[0] > 0 && inner_calls[1] == 0, || format!("backend calls cold/warm: {inner_calls:?}"))?;
    Ok(Verdict::Pass("gen, bench (both conditions), episode and cached runs repeat byte for byte".into()))
}

// ---------------------------------------------------------------- 9

const LIVE_PROFILE: &str = "S3AP_LIVE_PROFILE";
const LIVE_DATASET: &str = "S3AP_LIVE_DATASET";

fn live_items() -> Result<Vec<QAItem>, String> {
    match std::env::var(LIVE_DATASET) {
        Ok(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
            parse_dataset(&text, DatasetFormat::GenericJsonl).map_err(|e| e.to_string())
        }
        Err(_) => {
            let params = GenParams { force_false_belief: true, ..GenParams::default() };
            let records = generate_synthetic(1000, 10, &params, 2, true).map_err(|e| e.to_string())?;
            Ok(records.iter().flat_map(|r| r.items()).take(50).collect())
        }
    }
}

fn live_directional() -> Result<Verdict, String> {
    let Ok(profile_name) = std::env::var(LIVE_PROFILE) else {
        return Ok(Verdict::Skip(format!("live run not requested; set {LIVE_PROFILE} (and the API key) to run it")));
    };
    let profile = ProfileSet::builtin().get(&profile_name).cloned().ok_or_else(|| format!("unknown profile {profile_name}"))?;
    let items = live_items()?;
    ensure(items.len() >= 50, || format!("only {} items", items.len()))?;
    let cache = std::env::var(s3ap::backend::ENV_CACHE_DIR).unwrap_or_else(|_| "target/live-cache".into());
    let backend: Arc<dyn CompletionBackend> = Arc::new(
        CachedBackend::new(HttpChatBackend::from_env(profile.clone()), cache).map_err(|e| e.to_string())?,
    );
    let run = |condition| {
        let cfg = BenchConfig { model_id: profile.model.clone(), ..BenchConfig::new(TaskName::ToMi, condition) };
        run_benchmark(&items, &cfg, Some(backend.as_ref()), backend.as_ref()).map_err(|e| e.to_string())
    };
    let base = run(Condition::Baseline)?;
    let with = run(Condition::WithS3ap)?;
    ensure(with.accuracy >= base.accuracy, || format!("with {:.3} < baseline {:.3}", with.accuracy, base.accuracy))?;
    Ok(Verdict::Pass(format!("{} items: baseline {:.3}, with trajectories {:.3}", items.len(), base.accuracy, with.accuracy)))
}
