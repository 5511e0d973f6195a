// Roll a social world model forward from the opening of a negotiation.

use s3ap::agent::{sample_action, Environment, GreedyBuyerPolicy, NegotiationConfig, NegotiationEnv};
use s3ap::swm::{rollout, OracleSwm};
use s3ap::Trajectory;

pub fn run() -> anyhow::Result<()> {
    let env = NegotiationEnv::new(NegotiationConfig::default())?;
    let buyer = env.buyer().clone();
    let start = Trajectory::from_steps(env.agents(), vec![env.initial_step()])?;
    let model = OracleSwm::new(env.clone());
    let policy = GreedyBuyerPolicy::new(env.clone());
    let (space, goal) = (env.action_space(&buyer), env.goal(&buyer));
    let run = rollout(&model, &start, &buyer, |s| sample_action(&policy, &space, s, &goal), 3)?;
    println!("first move: {}", run.initial_action);
    for (i, state) in run.states.iter().enumerate() {
        let resolved = state.resolve_observation(state.len() - 1, &buyer)?;
        println!("after {} predicted step(s) the buyer sees: {}", i + 1, resolved.external);
    }
    println!("move on the last predicted state: {}", run.final_action);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
