// Drive the lookahead loop with model-backed components. A scripted
// backend stands in for the model and the prompts it receives are shown.

use s3ap::agent::{foresee_and_act, Environment, ForeseeConfig, LlmPolicy, LlmRefiner, NegotiationConfig, NegotiationEnv};
use s3ap::backend::ScriptedBackend;
use s3ap::swm::LlmSwm;
use s3ap::Trajectory;

pub fn run() -> anyhow::Result<()> {
    let env = NegotiationEnv::new(NegotiationConfig::default())?;
    let buyer = env.buyer().clone();
    let start = Trajectory::from_steps(env.agents(), vec![env.initial_step()])?;
    let model = ScriptedBackend::new(
        "scripted",
        [
            r#"{"action_type": "offer", "argument": 70}"#,
            "Seller: counter 75",
            r#"{"timestep": "1", "state": "The seller asks 75.", "observations": {"Buyer": "<same_as_last_action_2 /> <same_as_state />", "Seller": "<same_as_state /> <mental_state>could go to 65</mental_state>"}, "actions": {"Buyer": "none", "Seller": "none"}}"#,
            r#"{"action_type": "accept", "argument": ""}"#,
            r#"{"action_type": "offer", "argument": 65}"#,
        ],
    );
    let out = foresee_and_act(
        &env.action_space(&buyer),
        &env.goal(&buyer),
        &start,
        &ForeseeConfig::default(),
        &LlmSwm::new(&model, "scripted"),
        &LlmPolicy::new(&model, buyer.clone(), "scripted"),
        &LlmRefiner::new(&model, buyer, "scripted"),
    )?;
    println!("first {}, intended {}, final {}", out.initial_action, out.intended_action, out.action);
    for (i, req) in model.requests().iter().enumerate() {
        let prompt = req.last_user_content().unwrap_or_default();
        println!("--- request {i} ({} chars)\n{}", prompt.len(), prompt.lines().take(3).collect::<Vec<_>>().join("\n"));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
