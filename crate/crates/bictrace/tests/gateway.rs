mod common;

use std::time::Duration;

use bictrace::gateway::{GitError, GitResolver, GitStatus, RepoHandle, ALLOWED_SUBCOMMANDS};
use bictrace_core::resolve::{CommitResolver, RefLookup};
use common::{colliding_commits, cross_file, repo_digest, BASE_TIME};

#[test]
fn write_subcommands_are_rejected_without_spawning() {
    let cf = cross_file();
    let repo = RepoHandle::open(cf.fx.path()).unwrap();
    let before = repo.spawn_count();
    for sub in ["commit", "push", "gc", "reset", "checkout", "fetch", "config", "update-ref", "fast-import"] {
        let err = repo.run_git(&[sub], Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, GitError::NonAllowlistedCommand(ref s) if s == sub), "{sub}");
    }
    assert!(matches!(repo.run_git(&[], Duration::from_secs(5)), Err(GitError::NonAllowlistedCommand(_))));
    assert_eq!(repo.spawn_count(), before);
    assert!(!ALLOWED_SUBCOMMANDS.contains(&"commit"));
}

#[test]
fn output_writing_options_are_rejected() {
    let cf = cross_file();
    let repo = RepoHandle::open(cf.fx.path()).unwrap();
    let target = cf.fx.dir.path().join("leak.txt");
    let out = format!("--output={}", target.display());
    for args in [
        vec!["log", out.as_str()],
        vec!["diff", "--ext-diff"],
        vec!["grep", "-Ocat", "x"],
        vec!["grep", "--open-files-in-pager", "x"],
        vec!["show", "--textconv"],
    ] {
        assert!(matches!(repo.run_git(&args, Duration::from_secs(5)), Err(GitError::ForbiddenOption(_))), "{args:?}");
    }
    assert!(!target.exists());
    // After `--` the same text is a path, not an option.
    let o = repo.run_git(&["log", "--oneline", "--", "--output=x"], Duration::from_secs(5)).unwrap();
    assert_eq!(o.status, GitStatus::Ok);
}

#[test]
fn missing_repository_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(RepoHandle::open(dir.path().join("nope")), Err(GitError::RepoUnavailable { .. })));
    assert!(matches!(RepoHandle::open(dir.path()), Err(GitError::RepoUnavailable { .. })));
}

#[test]
fn timeout_kills_the_process() {
    let cf = cross_file();
    let repo = RepoHandle::open(cf.fx.path()).unwrap();
    let o = repo.run_git(&["log", "-p", "HEAD"], Duration::from_nanos(1)).unwrap();
    assert_eq!(o.status, GitStatus::TimedOut);
    assert!(matches!(
        repo.clone().with_timeout(Duration::from_nanos(1)).run_ok(&["log", "HEAD"]),
        Err(GitError::TimedOut(_))
    ));
}

#[test]
fn lookup_resolves_prefixes_and_rejects_options() {
    let cf = cross_file();
    let repo = RepoHandle::open(cf.fx.path()).unwrap();
    let bic = cf.fx.id(cf.bic);
    assert_eq!(repo.lookup(bic.as_str()).unwrap(), RefLookup::Found(bic.clone()));
    assert_eq!(repo.lookup(&bic.as_str()[..10]).unwrap(), RefLookup::Found(bic.clone()));
    assert_eq!(repo.lookup("0000000000").unwrap(), RefLookup::NotFound);
    let before = repo.spawn_count();
    assert_eq!(repo.lookup("--all").unwrap(), RefLookup::NotFound);
    assert_eq!(repo.lookup("").unwrap(), RefLookup::NotFound);
    assert_eq!(repo.spawn_count(), before);
    // A tree id is not a commit.
    let tree = repo.run_ok(&["rev-parse", "HEAD^{tree}"]).unwrap();
    assert_eq!(repo.lookup(tree.trim()).unwrap(), RefLookup::NotFound);
}

#[test]
fn ambiguous_prefix_is_reported() {
    let cf = cross_file();
    let (a, b, prefix) = colliding_commits(cf.fx.path());
    let repo = RepoHandle::open(cf.fx.path()).unwrap();
    assert_eq!(repo.lookup(&prefix).unwrap(), RefLookup::Ambiguous);
    assert_eq!(repo.lookup(a.as_str()).unwrap(), RefLookup::Found(a.clone()));
    assert_eq!(repo.lookup(b.as_str()).unwrap(), RefLookup::Found(b));
}

#[test]
fn timestamps_and_parents() {
    let cf = cross_file();
    let repo = RepoHandle::open(cf.fx.path()).unwrap();
    let bic = cf.fx.id(cf.bic);
    assert_eq!(repo.commit_timestamp(&bic).unwrap(), BASE_TIME + 86_400);
    assert_eq!(repo.author_timestamp(&bic).unwrap(), BASE_TIME + 86_400);
    assert_eq!(repo.parent_of(&bic, 1).unwrap(), Some(cf.fx.id(cf.base)));
    assert_eq!(repo.parent_of(&cf.fx.id(cf.base), 1).unwrap(), None);
    let mut r = GitResolver(&repo);
    assert_eq!(r.commit_time(&bic).unwrap(), BASE_TIME + 86_400);
}

#[test]
fn output_is_stable_under_hostile_environment() {
    let cf = cross_file();
    let repo = RepoHandle::open(cf.fx.path()).unwrap();
    let args = ["log", "--format=%H %cI %s", "HEAD"];
    let clean = repo.run_ok(&args).unwrap();
    std::env::set_var("TZ", "Asia/Kolkata");
    std::env::set_var("GIT_DIR", "/nonexistent");
    std::env::set_var("LC_ALL", "de_DE.UTF-8");
    let noisy = repo.run_ok(&args).unwrap();
    std::env::remove_var("TZ");
    std::env::remove_var("GIT_DIR");
    std::env::remove_var("LC_ALL");
    assert_eq!(clean, noisy);
    assert!(clean.contains("+00:00"));
}

#[test]
fn reads_leave_repository_untouched() {
    let cf = cross_file();
    let before = repo_digest(cf.fx.path());
    let repo = RepoHandle::open(cf.fx.path()).unwrap();
    for args in [
        vec!["log", "-p", "HEAD"],
        vec!["blame", "--porcelain", "HEAD", "--", "driver/d.c"],
        vec!["diff", "HEAD~1", "HEAD"],
        vec!["grep", "-n", "-F", "-etask", "HEAD"],
        vec!["show", "HEAD"],
        vec!["rev-list", "--all"],
    ] {
        repo.run_ok(&args).unwrap();
    }
    assert_eq!(repo_digest(cf.fx.path()), before);
}
