// Build a small trajectory by hand, write it in both wire forms and read
// it back. A broken document comes back with a list of issues instead.

use indexmap::IndexMap;
use s3ap::schema::{decode_trajectory, encode_trajectory, issues_to_feedback, WireForm};
use s3ap::{AgentAction, AgentId, ObservationExpr, SimulationStep, Timestep, Trajectory};

fn step(t: usize, state: &str, obs: [(&AgentId, &str); 2], acts: [(&AgentId, &str); 2]) -> anyhow::Result<SimulationStep> {
    let observations: IndexMap<_, _> = obs.iter().map(|(a, o)| ((*a).clone(), ObservationExpr::new(*o))).collect();
    let actions: IndexMap<_, _> = acts.iter().map(|(a, x)| ((*a).clone(), AgentAction::new(*x))).collect();
    Ok(SimulationStep::new(Timestep::new(t.to_string(), t)?, state, observations, actions)?)
}

pub fn run() -> anyhow::Result<()> {
    let sally = AgentId::new("Sally")?;
    let anne = AgentId::new("Anne")?;
    let traj = Trajectory::from_steps(
        vec![sally.clone(), anne.clone()],
        vec![
            step(
                0,
                "Sally and Anne are in the room. The marble is in the basket.",
                [(&sally, "<same_as_state />"), (&anne, "<same_as_state />")],
                [(&sally, "exited the room"), (&anne, "none")],
            )?,
            step(
                1,
                "Anne is in the room. The marble is in the basket.",
                [(&sally, "none"), (&anne, "<same_as_last_action_1 /> <same_as_state />")],
                [(&sally, "none"), (&anne, "moved the marble to the box")],
            )?,
        ],
    )?;

    for form in [WireForm::ObjectMap, WireForm::StringList] {
        let text = encode_trajectory(&traj, form);
        let back = decode_trajectory(&text, None);
        assert!(back.issues.is_empty());
        assert_eq!(back.trajectory.as_ref(), Some(&traj));
        println!("{form:?}: {} bytes, round trip ok", text.len());
    }

    let broken = r#"{"agents": ["Sally"], "steps": [{"timestep": "0", "state": "", "observations": {"Sally": "none"}}]}"#;
    let decoded = decode_trajectory(broken, None);
    println!("broken document:\n{}", issues_to_feedback(&decoded.issues)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
