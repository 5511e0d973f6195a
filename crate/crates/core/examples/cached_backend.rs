// Put a disk cache in front of a completion backend. The second pass is
// served entirely from disk.

use s3ap::backend::{CachedBackend, CompletionBackend, CompletionRequest, FnBackend, ProfileSet};

pub fn run() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let model = FnBackend::new("echo", |req: &CompletionRequest| {
        Ok(format!("you said: {}", req.last_user_content().unwrap_or_default()))
    });
    let cached = CachedBackend::new(model, dir.path())?;
    for _ in 0..2 {
        for prompt in ["hello", "goodbye"] {
            println!("{}", cached.complete(&CompletionRequest::user("echo-1", prompt))?);
        }
    }
    println!("hits {}, misses {}, inner calls {}", cached.hits(), cached.misses(), cached.inner().calls());

    let profiles = ProfileSet::builtin();
    println!("built-in model profiles: {}", profiles.names().collect::<Vec<_>>().join(", "));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
