//! Build small repositories with fully controlled history via `git fast-import`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use bictrace_core::CommitId;

pub const DEFAULT_BRANCH: &str = "main";

/// Refers to a commit before the repository exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mark(pub u32);

#[derive(Debug, Clone)]
enum FileOp {
    Write { path: String, mode: &'static str, content: Vec<u8> },
    Delete(String),
    Rename(String, String),
    Copy(String, String),
}

#[derive(Debug, Clone)]
struct CommitSpec {
    mark: Mark,
    branch: String,
    author: (String, String),
    author_time: i64,
    committer_time: i64,
    message: String,
    from: Option<Mark>,
    merges: Vec<Mark>,
    ops: Vec<FileOp>,
}

#[derive(Debug, Clone)]
pub struct FixtureBuilder {
    commits: Vec<CommitSpec>,
    clock: i64,
}

impl Default for FixtureBuilder {
    fn default() -> Self {
        FixtureBuilder::new()
    }
}

impl FixtureBuilder {
    pub fn new() -> Self {
        FixtureBuilder {
            commits: Vec::new(),
            clock: 1_600_000_000,
        }
    }

    /// Start a commit on the default branch. Timestamps advance by one hour
    /// per commit unless set explicitly.
    pub fn commit(&mut self, message: &str) -> CommitBuilder<'_> {
        self.clock += 3600;
        let spec = CommitSpec {
            mark: Mark(self.commits.len() as u32 + 1),
            branch: DEFAULT_BRANCH.into(),
            author: ("Dev".into(), "dev@example.com".into()),
            author_time: self.clock,
            committer_time: self.clock,
            message: message.into(),
            from: None,
            merges: Vec::new(),
            ops: Vec::new(),
        };
        CommitBuilder { builder: self, spec }
    }

    pub fn len(&self) -> usize {
        self.commits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commits.is_empty()
    }

    pub fn fast_import_stream(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let data = |out: &mut Vec<u8>, bytes: &[u8]| {
            out.extend_from_slice(format!("data {}\n", bytes.len()).as_bytes());
            out.extend_from_slice(bytes);
            out.push(b'\n');
        };
        for c in &self.commits {
            let (name, email) = &c.author;
            out.extend_from_slice(format!("commit refs/heads/{}\nmark :{}\n", c.branch, c.mark.0).as_bytes());
            out.extend_from_slice(format!("author {name} <{email}> {} +0000\n", c.author_time).as_bytes());
            out.extend_from_slice(format!("committer {name} <{email}> {} +0000\n", c.committer_time).as_bytes());
            data(&mut out, c.message.as_bytes());
            if let Some(f) = c.from {
                out.extend_from_slice(format!("from :{}\n", f.0).as_bytes());
            }
            for m in &c.merges {
                out.extend_from_slice(format!("merge :{}\n", m.0).as_bytes());
            }
            for op in &c.ops {
                match op {
                    FileOp::Write { path, mode, content } => {
                        out.extend_from_slice(format!("M {mode} inline {}\n", quote(path)).as_bytes());
                        data(&mut out, content);
                    }
                    FileOp::Delete(p) => out.extend_from_slice(format!("D {}\n", quote(p)).as_bytes()),
                    FileOp::Rename(a, b) => out.extend_from_slice(format!("R {} {}\n", quote(a), quote(b)).as_bytes()),
                    FileOp::Copy(a, b) => out.extend_from_slice(format!("C {} {}\n", quote(a), quote(b)).as_bytes()),
                }
            }
            out.push(b'\n');
        }
        out.extend_from_slice(b"done\n");
        out
    }

    /// Create the repository at `dir` (which must not exist or be empty) and
    /// check out the default branch.
    pub fn build(&self, dir: &Path) -> Result<FixtureRepo, FixtureError> {
        std::fs::create_dir_all(dir).map_err(|e| FixtureError(format!("{}: {e}", dir.display())))?;
        git(dir, &["init", "-q", "--initial-branch", DEFAULT_BRANCH], None)?;
        let marks_file = dir.join(".git").join("fixture-marks");
        let export = format!("--export-marks={}", marks_file.display());
        git(dir, &["fast-import", "--quiet", "--done", &export], Some(&self.fast_import_stream()))?;
        let marks_text =
            std::fs::read_to_string(&marks_file).map_err(|e| FixtureError(format!("reading marks: {e}")))?;
        std::fs::remove_file(&marks_file).ok();
        let mut marks = BTreeMap::new();
        for line in marks_text.lines() {
            if let Some((m, id)) = line.split_once(' ') {
                let n: u32 = m.trim_start_matches(':').parse().map_err(|_| FixtureError(line.into()))?;
                let id = CommitId::parse(id).map_err(|e| FixtureError(e.to_string()))?;
                marks.insert(Mark(n), id);
            }
        }
        if !self.commits.is_empty() {
            git(dir, &["reset", "-q", "--hard", DEFAULT_BRANCH], None)?;
        }
        Ok(FixtureRepo {
            path: dir.to_path_buf(),
            marks,
        })
    }
}

fn quote(path: &str) -> String {
    if path.contains([' ', '"', '\\', '\n']) {
        format!("{path:?}")
    } else {
        path.to_string()
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("fixture: {0}")]
pub struct FixtureError(pub String);

/// Run git outside the read-only gateway; fixtures are the only writer.
pub fn git(dir: &Path, args: &[&str], stdin: Option<&[u8]>) -> Result<String, FixtureError> {
    let mut cmd = Command::new("git");
    for v in crate::gateway::CLEARED_ENV {
        cmd.env_remove(v);
    }
    cmd.current_dir(dir)
        .args(args)
        .env("TZ", "UTC")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_AUTHOR_NAME", "Dev")
        .env("GIT_AUTHOR_EMAIL", "dev@example.com")
        .env("GIT_COMMITTER_NAME", "Dev")
        .env("GIT_COMMITTER_EMAIL", "dev@example.com")
        .env("LC_ALL", "C")
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd.spawn().map_err(|e| FixtureError(format!("spawning git: {e}")))?;
    if let Some(bytes) = stdin {
        let mut pipe = child.stdin.take().expect("piped stdin");
        let bytes = bytes.to_vec();
        std::thread::spawn(move || pipe.write_all(&bytes));
    }
    let out = child.wait_with_output().map_err(|e| FixtureError(e.to_string()))?;
    if !out.status.success() {
        return Err(FixtureError(format!(
            "git {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

pub struct CommitBuilder<'a> {
    builder: &'a mut FixtureBuilder,
    spec: CommitSpec,
}

impl CommitBuilder<'_> {
    pub fn branch(mut self, name: &str) -> Self {
        self.spec.branch = name.into();
        self
    }

    pub fn author(mut self, name: &str, email: &str) -> Self {
        self.spec.author = (name.into(), email.into());
        self
    }

    /// Set both author and committer time.
    pub fn at(mut self, epoch: i64) -> Self {
        self.spec.author_time = epoch;
        self.spec.committer_time = epoch;
        self.builder.clock = self.builder.clock.max(epoch);
        self
    }

    pub fn author_time(mut self, epoch: i64) -> Self {
        self.spec.author_time = epoch;
        self
    }

    /// First parent; needed when a branch starts from an older commit.
    pub fn parent(mut self, mark: Mark) -> Self {
        self.spec.from = Some(mark);
        self
    }

    pub fn merge(mut self, mark: Mark) -> Self {
        self.spec.merges.push(mark);
        self
    }

    pub fn write(self, path: &str, content: &str) -> Self {
        self.write_mode(path, "100644", content)
    }

    pub fn write_exec(self, path: &str, content: &str) -> Self {
        self.write_mode(path, "100755", content)
    }

    pub fn write_mode(mut self, path: &str, mode: &'static str, content: &str) -> Self {
        self.spec.ops.push(FileOp::Write {
            path: path.into(),
            mode,
            content: content.as_bytes().to_vec(),
        });
        self
    }

    pub fn delete(mut self, path: &str) -> Self {
        self.spec.ops.push(FileOp::Delete(path.into()));
        self
    }

    pub fn rename(mut self, from: &str, to: &str) -> Self {
        self.spec.ops.push(FileOp::Rename(from.into(), to.into()));
        self
    }

    pub fn copy(mut self, from: &str, to: &str) -> Self {
        self.spec.ops.push(FileOp::Copy(from.into(), to.into()));
        self
    }

    pub fn done(self) -> Mark {
        let mark = self.spec.mark;
        self.builder.commits.push(self.spec);
        mark
    }
}

#[derive(Debug, Clone)]
pub struct FixtureRepo {
    pub path: PathBuf,
    pub marks: BTreeMap<Mark, CommitId>,
}

impl FixtureRepo {
    pub fn id(&self, mark: Mark) -> &CommitId {
        &self.marks[&mark]
    }

    pub fn path_str(&self) -> String {
        self.path.to_string_lossy().into_owned()
    }
}
