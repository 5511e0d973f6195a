// Score question answering with and without parsed trajectories in the
// prompt, using the rule-based oracle in place of a model.

use s3ap::backend::OracleBackend;
use s3ap::bench::{comparison_markdown, generate_synthetic, run_benchmark, BenchConfig, Condition};
use s3ap::oracle::GenParams;
use s3ap::parser::TaskName;

pub fn run() -> anyhow::Result<()> {
    let params = GenParams { force_false_belief: true, ..GenParams::default() };
    let items: Vec<_> = generate_synthetic(0, 20, &params, 2, false)?.iter().flat_map(|r| r.items()).collect();
    let oracle = OracleBackend::new();
    let baseline = run_benchmark(&items, &BenchConfig::new(TaskName::ToMi, Condition::Baseline), None, &oracle)?;
    let with = run_benchmark(&items, &BenchConfig::new(TaskName::ToMi, Condition::WithS3ap), Some(&oracle), &oracle)?;
    print!("{}", comparison_markdown(&baseline, &with));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
