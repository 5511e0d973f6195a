// Parse a narrative with a model that gets the format wrong first. The
// validation issues are fed back until the reply is valid.

use s3ap::backend::{OracleBackend, ScriptedBackend};
use s3ap::oracle::{generate_scenario, render_narrative, GenParams};
use s3ap::parser::{parse_narrative, ParseOptions, ParseTask, TaskName};
use s3ap::schema::{encode_trajectory, WireForm};

pub fn run() -> anyhow::Result<()> {
    let scenario = generate_scenario(11, &GenParams::default())?;
    let narrative = render_narrative(&scenario);
    let task = ParseTask::builtin(TaskName::ToMi);

    // A well-formed reply, borrowed from the oracle so the example needs no
    // network.
    let good = encode_trajectory(&s3ap::parser::reference_parse(&narrative)?, WireForm::ObjectMap);
    let model = ScriptedBackend::new("flaky-model", ["Here you go: [{\"timestep\": 0}]".to_string(), good]);
    let (traj, attempts) = parse_narrative(&narrative, &task, &model, &ParseOptions::default())?;
    for a in &attempts {
        println!("attempt {}: {} issue(s)", a.attempt_index, a.issues.len());
    }
    if let Some(second) = model.requests().get(1) {
        let prompt = second.last_user_content().unwrap_or_default();
        let feedback = prompt.find("Previous attempt had these issues").map(|i| &prompt[i..]).unwrap_or("");
        println!("{}", feedback.lines().take(4).collect::<Vec<_>>().join("\n"));
    }
    println!("parsed {} steps", traj.len());

    let (again, _) = parse_narrative(&narrative, &task, &OracleBackend::new(), &ParseOptions::default())?;
    assert_eq!(again.steps(), traj.steps());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
