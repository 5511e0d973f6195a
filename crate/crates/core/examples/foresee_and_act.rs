// Play the same negotiation with and without lookahead.

use indexmap::IndexMap;
use s3ap::agent::{
    run_episode, Actor, ForeseeActor, ForeseeConfig, GreedyBuyerPolicy, NegotiationConfig, NegotiationEnv,
    NegotiationRefiner, PolicyActor, ScriptedSellerPolicy,
};
use s3ap::swm::OracleSwm;
use s3ap::AgentId;

fn play(env: &NegotiationEnv, foresee: bool) -> anyhow::Result<()> {
    let buyer: Box<dyn Actor> = if foresee {
        Box::new(ForeseeActor {
            policy: Box::new(GreedyBuyerPolicy::new(env.clone())),
            swm: Box::new(OracleSwm::new(env.clone())),
            refiner: Box::new(NegotiationRefiner::new(env.clone())),
            cfg: ForeseeConfig::default(),
        })
    } else {
        Box::new(PolicyActor(GreedyBuyerPolicy::new(env.clone())))
    };
    let mut actors: IndexMap<AgentId, Box<dyn Actor>> = IndexMap::new();
    actors.insert(env.buyer().clone(), buyer);
    actors.insert(env.seller().clone(), Box::new(PolicyActor(ScriptedSellerPolicy::new(env.clone()))));
    let result = run_episode(env, &actors, 20)?;
    println!("{}:", if foresee { "with lookahead" } else { "myopic" });
    for step in result.trajectory.steps() {
        let acts: Vec<String> = step.actions.iter().filter(|(_, a)| !a.is_none).map(|(n, a)| format!("{n} {a}")).collect();
        println!("  {} {}", step.state, acts.join(", "));
    }
    for (agent, score) in &result.scores {
        println!("  {agent}: {:.2}", score.value());
    }
    Ok(())
}

pub fn run() -> anyhow::Result<()> {
    let env = NegotiationEnv::new(NegotiationConfig::default())?;
    play(&env, false)?;
    play(&env, true)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
