// Generate seeded stories, render them as narratives and parse them back
// without a model.

use s3ap::oracle::{generate_scenario, render_narrative_with, GenParams, RenderStyle};
use s3ap::parser::reference_parse;

pub fn run() -> anyhow::Result<()> {
    let params = GenParams { force_false_belief: true, ..GenParams::default() };
    for seed in 0..3 {
        let scenario = generate_scenario(seed, &params)?;
        let plain = render_narrative_with(&scenario, RenderStyle::Plain);
        let reworded = render_narrative_with(&scenario, RenderStyle::Paraphrase { seed });
        let (a, b) = (reference_parse(&plain)?, reference_parse(&reworded)?);
        assert_eq!(a, b);
        println!("seed {seed}: {} events, {} steps\n{reworded}\n", scenario.events.len(), a.len());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
