//! The only place that spawns `git`.
//!
//! Commands are limited to read-only subcommands, run with a pinned
//! environment so output is byte-stable, and killed at a timeout.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bictrace_core::resolve::RefLookup;
use bictrace_core::time::Timestamp;
use bictrace_core::CommitId;
use wait_timeout::ChildExt;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

pub const ALLOWED_SUBCOMMANDS: [&str; 8] = ["show", "blame", "log", "grep", "rev-parse", "diff", "cat-file", "rev-list"];

const FORBIDDEN_OPTIONS: [&str; 5] = ["--output", "--open-files-in-pager", "--ext-diff", "--textconv", "--exec"];

const PINNED_CONFIG: [&str; 11] = [
    "core.quotepath=off",
    "color.ui=false",
    "core.pager=cat",
    "core.attributesFile=/dev/null",
    "diff.noprefix=false",
    "diff.mnemonicPrefix=false",
    "diff.renames=true",
    "diff.relative=false",
    "log.showSignature=false",
    "log.follow=false",
    "grep.patternType=basic",
];

pub const CLEARED_ENV: [&str; 16] = [
    "GIT_DIR",
    "GIT_WORK_TREE",
    "GIT_INDEX_FILE",
    "GIT_OBJECT_DIRECTORY",
    "GIT_ALTERNATE_OBJECT_DIRECTORIES",
    "GIT_NAMESPACE",
    "GIT_COMMON_DIR",
    "GIT_CONFIG",
    "GIT_CONFIG_PARAMETERS",
    "GIT_CONFIG_COUNT",
    "GIT_EXTERNAL_DIFF",
    "GIT_DIFF_OPTS",
    "GIT_REPLACE_REF_BASE",
    "GIT_GRAFT_FILE",
    "GIT_SHALLOW_FILE",
    "GIT_QUARANTINE_PATH",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GitStatus {
    Ok,
    NonZeroExit(i32),
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GitOutcome {
    pub status: GitStatus,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

#[derive(Debug, thiserror::Error)]
pub enum GitError {
    #[error("git subcommand {0:?} is not on the read-only allow-list")]
    NonAllowlistedCommand(String),
    #[error("git option {0:?} is not allowed")]
    ForbiddenOption(String),
    #[error("repository unavailable at {path}: {reason}")]
    RepoUnavailable { path: PathBuf, reason: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("git {args} failed: {stderr}")]
    Failed { args: String, stderr: String },
    #[error("git {0} timed out")]
    TimedOut(String),
}

/// A local repository plus the settings used to talk to it. Cheap to clone;
/// clones share the spawn counter.
#[derive(Debug, Clone)]
pub struct RepoHandle {
    root: PathBuf,
    default_timeout: Duration,
    spawns: Arc<AtomicU64>,
}

fn check_args(args: &[&str]) -> Result<(), GitError> {
    let Some(sub) = args.first() else {
        return Err(GitError::NonAllowlistedCommand(String::new()));
    };
    if !ALLOWED_SUBCOMMANDS.contains(sub) {
        return Err(GitError::NonAllowlistedCommand(sub.to_string()));
    }
    for a in &args[1..] {
        if *a == "--" || *a == "--end-of-options" {
            break;
        }
        let forbidden = FORBIDDEN_OPTIONS.iter().any(|f| a == f || a.starts_with(&format!("{f}=")))
            || (a.starts_with("-O") && !a.starts_with("--"));
        if forbidden {
            return Err(GitError::ForbiddenOption(a.to_string()));
        }
    }
    Ok(())
}

fn drain<R: Read + Send + 'static>(r: Option<R>) -> std::thread::JoinHandle<Vec<u8>> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = r {
            let _ = r.read_to_end(&mut buf);
        }
        buf
    })
}

impl RepoHandle {
    /// Open a repository (work tree or bare) and probe its object database.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GitError> {
        let path = path.as_ref();
        let unavailable = |reason: String| GitError::RepoUnavailable {
            path: path.to_path_buf(),
            reason,
        };
        if !path.is_dir() {
            return Err(unavailable("not a directory".into()));
        }
        let root = path.canonicalize().map_err(|e| unavailable(e.to_string()))?;
        let handle = RepoHandle {
            root,
            default_timeout: DEFAULT_TIMEOUT,
            spawns: Arc::new(AtomicU64::new(0)),
        };
        let probe = handle.run_git(&["rev-parse", "--absolute-git-dir"], DEFAULT_TIMEOUT)?;
        if probe.status != GitStatus::Ok {
            return Err(unavailable(probe.stderr.trim().to_string()));
        }
        Ok(handle)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.default_timeout = timeout;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn default_timeout(&self) -> Duration {
        self.default_timeout
    }

    /// Number of git processes spawned through this handle and its clones.
    pub fn spawn_count(&self) -> u64 {
        self.spawns.load(Ordering::SeqCst)
    }

    pub fn run_git(&self, args: &[&str], timeout: Duration) -> Result<GitOutcome, GitError> {
        check_args(args)?;
        let mut cmd = Command::new("git");
        cmd.arg("-C").arg(&self.root).arg("--no-pager");
        for c in PINNED_CONFIG {
            cmd.arg("-c").arg(c);
        }
        cmd.args(args);
        for v in CLEARED_ENV {
            cmd.env_remove(v);
        }
        cmd.env("LC_ALL", "C")
            .env("LANG", "C")
            .env("TZ", "UTC")
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("GIT_CONFIG_GLOBAL", "/dev/null")
            .env("GIT_ATTR_NOSYSTEM", "1")
            .env("GIT_PAGER", "cat")
            .env("PAGER", "cat")
            .env("GIT_TERMINAL_PROMPT", "0")
            .env("GIT_OPTIONAL_LOCKS", "0")
            .env("GIT_NO_REPLACE_OBJECTS", "1")
            .env("GIT_ADVICE", "0")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|e| GitError::RepoUnavailable {
            path: self.root.clone(),
            reason: format!("cannot spawn git: {e}"),
        })?;
        self.spawns.fetch_add(1, Ordering::SeqCst);
        let out = drain(child.stdout.take());
        let err = drain(child.stderr.take());
        let waited = child.wait_timeout(timeout).map_err(|e| GitError::Failed {
            args: args.join(" "),
            stderr: e.to_string(),
        })?;
        let status = match waited {
            Some(s) if s.success() => GitStatus::Ok,
            Some(s) => GitStatus::NonZeroExit(s.code().unwrap_or(-1)),
            None => {
                let _ = child.kill();
                let _ = child.wait();
                GitStatus::TimedOut
            }
        };
        let elapsed = start.elapsed();
        let stdout = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
        let stderr = String::from_utf8_lossy(&err.join().unwrap_or_default()).into_owned();
        Ok(GitOutcome {
            status,
            stdout,
            stderr,
            elapsed,
        })
    }

    /// Run with the default timeout and require success.
    pub fn run_ok(&self, args: &[&str]) -> Result<String, GitError> {
        let o = self.run_git(args, self.default_timeout)?;
        match o.status {
            GitStatus::Ok => Ok(o.stdout),
            GitStatus::TimedOut => Err(GitError::TimedOut(args.join(" "))),
            GitStatus::NonZeroExit(_) => Err(GitError::Failed {
                args: args.join(" "),
                stderr: o.stderr.trim().to_string(),
            }),
        }
    }

    /// Resolve `text` to exactly one commit.
    pub fn lookup(&self, text: &str) -> Result<RefLookup, GitError> {
        let t = text.trim();
        if t.is_empty() || t.starts_with('-') || t.chars().any(|c| c.is_whitespace() || c.is_control()) {
            return Ok(RefLookup::NotFound);
        }
        let spec = format!("{t}^{{commit}}");
        let o = self.run_git(&["rev-parse", "--verify", "--end-of-options", &spec], self.default_timeout)?;
        match o.status {
            GitStatus::Ok => match CommitId::parse(o.stdout.trim()) {
                Ok(id) => Ok(RefLookup::Found(id)),
                Err(_) => Ok(RefLookup::NotFound),
            },
            GitStatus::TimedOut => Err(GitError::TimedOut("rev-parse".into())),
            GitStatus::NonZeroExit(_) if o.stderr.contains("is ambiguous") => Ok(RefLookup::Ambiguous),
            GitStatus::NonZeroExit(_) => Ok(RefLookup::NotFound),
        }
    }

    pub fn resolve_commit(&self, text: &str) -> Result<Option<CommitId>, GitError> {
        Ok(match self.lookup(text)? {
            RefLookup::Found(id) => Some(id),
            _ => None,
        })
    }

    fn show_field(&self, commit: &CommitId, format: &str) -> Result<String, GitError> {
        let fmt = format!("--format={format}");
        let o = self.run_git(
            &["show", "-s", "--no-notes", &fmt, "--end-of-options", commit.as_str()],
            self.default_timeout,
        )?;
        match o.status {
            GitStatus::Ok => Ok(o.stdout),
            GitStatus::TimedOut => Err(GitError::TimedOut("show".into())),
            GitStatus::NonZeroExit(_) => Err(GitError::NotFound(commit.to_string())),
        }
    }

    /// Committer timestamp in seconds since the epoch.
    pub fn commit_timestamp(&self, commit: &CommitId) -> Result<Timestamp, GitError> {
        let s = self.show_field(commit, "%ct")?;
        s.trim().parse().map_err(|_| GitError::NotFound(commit.to_string()))
    }

    pub fn author_timestamp(&self, commit: &CommitId) -> Result<Timestamp, GitError> {
        let s = self.show_field(commit, "%at")?;
        s.trim().parse().map_err(|_| GitError::NotFound(commit.to_string()))
    }

    /// The `index`-th parent (1-based).
    pub fn parent_of(&self, commit: &CommitId, index: usize) -> Result<Option<CommitId>, GitError> {
        if index == 0 {
            return Ok(None);
        }
        let s = self.show_field(commit, "%P")?;
        Ok(s.split_whitespace().nth(index - 1).and_then(|p| CommitId::parse(p).ok()))
    }
}

/// [`bictrace_core::resolve::CommitResolver`] over a repository.
pub struct GitResolver<'a>(pub &'a RepoHandle);

impl bictrace_core::resolve::CommitResolver for GitResolver<'_> {
    fn lookup(&mut self, text: &str) -> Result<RefLookup, String> {
        self.0.lookup(text).map_err(|e| e.to_string())
    }

    fn commit_time(&mut self, id: &CommitId) -> Result<Timestamp, String> {
        self.0.commit_timestamp(id).map_err(|e| e.to_string())
    }
}
