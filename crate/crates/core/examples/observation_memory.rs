// Resolve special tags in observations and rebuild what each agent
// remembers.

use s3ap::oracle::{ground_truth_trajectory, OracleScenario};
use s3ap::{agent_view, MemoryContent};

pub fn run() -> anyhow::Result<()> {
    let scenario: OracleScenario = serde_json::from_str(include_str!("data/sally_anne.json"))?;
    let traj = ground_truth_trajectory(&scenario)?;
    let last = traj.len() - 1;
    for agent in traj.agents() {
        let (memory, now) = agent_view(&traj, agent, last)?;
        println!("{agent} remembers {} entries:", memory.entries.len());
        for entry in &memory.entries {
            match &entry.content {
                MemoryContent::Observation(o) if !o.is_none => {
                    println!("  [{}] saw: {}", entry.ordinal, o.external);
                    if let Some(m) = &o.mental {
                        println!("  [{}] thought: {m}", entry.ordinal);
                    }
                }
                MemoryContent::Action(a) if !a.is_none => println!("  [{}] did: {a}", entry.ordinal),
                _ => {}
            }
        }
        println!("  now: {}", if now.is_none { "(nothing)" } else { now.external.as_str() });
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
