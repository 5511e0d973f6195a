// Call the command line in-process: generate a corpus, then benchmark it.

pub fn run() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let corpus = dir.path().join("corpus");
    let report = dir.path().join("report");
    let corpus = corpus.to_str().unwrap();
    let dataset = format!("{corpus}/scenarios.jsonl");
    for args in [
        vec!["s3ap", "gen", "--seed", "5", "--count", "4", "--out-dir", corpus],
        vec!["s3ap", "bench", "--task", "tomi", "--dataset", &dataset, "--report", report.to_str().unwrap()],
        vec!["s3ap", "episode", "--suite", "friends", "--seeds", "10"],
    ] {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = s3ap::cli::run(args.clone(), &mut out, &mut err);
        print!("$ {}\n{}{}", args[1..].join(" "), String::from_utf8_lossy(&out), String::from_utf8_lossy(&err));
        anyhow::ensure!(code == 0, "exit code {code}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
