// Track nested beliefs through a false-belief story and ask questions
// about them.

use s3ap::oracle::{belief_questions, query_belief, simulate, OracleScenario};
use s3ap::AgentId;

pub fn run() -> anyhow::Result<()> {
    let scenario: OracleScenario = serde_json::from_str(include_str!("data/sally_anne.json"))?;
    let snaps = simulate(&scenario)?;
    let end = snaps.len() - 1;
    let sally = AgentId::new("Sally")?;
    let anne = AgentId::new("Anne")?;
    for chain in [vec![], vec![sally.clone()], vec![anne.clone()], vec![anne.clone(), sally.clone()], vec![sally, anne]] {
        let names: Vec<&str> = chain.iter().map(AgentId::as_str).collect();
        let belief = query_belief(&snaps, &chain, "marble", end)?;
        println!("{:<12} -> {}", if names.is_empty() { "truth".into() } else { names.join(" > ") }, belief.as_deref().unwrap_or("unknown"));
    }
    for q in belief_questions(&scenario, 2)? {
        println!("{} {}", q.question(), q.gold_answer());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
