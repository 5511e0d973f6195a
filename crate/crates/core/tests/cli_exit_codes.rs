use s3ap::cli::{run, EXIT_BACKEND, EXIT_OK, EXIT_PIPELINE, EXIT_USAGE};

fn call(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv: Vec<&str> = std::iter::once("s3ap").chain(args.iter().copied()).collect();
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(call(&["--help"]).0, EXIT_OK);
    assert_eq!(call(&["--version"]).0, EXIT_OK);
}

#[test]
fn unknown_subcommand_is_usage() {
    assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(call(&[]).0, EXIT_USAGE);
}

#[test]
fn unknown_task_and_env_are_usage() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("story.txt");
    std::fs::write(&input, "Sally is in the room.").unwrap();
    let out = dir.path().join("t.json");
    let (code, _, _) = call(&["parse", "--task", "nope", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
    assert_eq!(call(&["episode", "--env", "chess", "--seeds", "1"]).0, EXIT_USAGE);
    assert_eq!(call(&["foresee", "--env", "chess"]).0, EXIT_USAGE);
}

#[test]
fn missing_input_file_is_usage() {
    assert_eq!(call(&["validate", "--input", "/definitely/not/here.json"]).0, EXIT_USAGE);
}

#[test]
fn validate_distinguishes_good_and_bad_documents() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    assert_eq!(call(&["gen", "--seed", "1", "--count", "1", "--out-dir", corpus.to_str().unwrap()]).0, EXIT_OK);
    let traj = std::fs::read_dir(corpus.join("trajectories")).unwrap().next().unwrap().unwrap().path();
    assert_eq!(call(&["validate", "--input", traj.to_str().unwrap()]).0, EXIT_OK);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"agents": ["A"], "steps": [{"timestep": "0", "state": "s"}]}"#).unwrap();
    let (code, _, err) = call(&["validate", "--input", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_PIPELINE);
    assert!(!err.is_empty());
}

#[test]
fn zero_count_gives_an_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    assert_eq!(call(&["gen", "--count", "0", "--out-dir", corpus.to_str().unwrap()]).0, EXIT_OK);
    assert_eq!(std::fs::read_to_string(corpus.join("scenarios.jsonl")).unwrap(), "");
}

#[test]
fn exhausted_scripted_backend_is_a_backend_failure() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("replies.json");
    std::fs::write(&script, "[]").unwrap();
    let env = dir.path().join("env.json");
    std::fs::write(&env, r#"{"env": "negotiation"}"#).unwrap();
    let spec = format!("mock:{}", script.display());
    let (code, _, _) = call(&["foresee", "--env", env.to_str().unwrap(), "--backend", &spec]);
    assert_eq!(code, EXIT_BACKEND);
}

#[test]
fn unknown_http_profile_is_usage() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    std::fs::write(&env, r#"{"env": "negotiation"}"#).unwrap();
    let args = ["foresee", "--env", env.to_str().unwrap(), "--backend", "http:no-such-profile"];
    assert_eq!(call(&args).0, EXIT_USAGE);
}

#[test]
fn bench_below_threshold_is_a_pipeline_failure() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    let corpus_s = corpus.to_str().unwrap();
    assert_eq!(call(&["gen", "--seed", "3", "--count", "5", "--force-false-belief", "--out-dir", corpus_s]).0, EXIT_OK);
    let dataset = format!("{corpus_s}/scenarios.jsonl");
    let report = dir.path().join("r");
    let args = ["bench", "--task", "tomi", "--dataset", &dataset, "--condition", "baseline", "--min-accuracy", "1.0", "--report", report.to_str().unwrap()];
    assert_eq!(call(&args).0, EXIT_PIPELINE);
}
