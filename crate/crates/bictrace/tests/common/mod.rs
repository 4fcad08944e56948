#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use bictrace::fixture::{git, FixtureBuilder, FixtureRepo, Mark};
use bictrace_core::CommitId;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BASE_TIME: i64 = 1_600_000_000;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub repo: FixtureRepo,
}

impl Fixture {
    pub fn build(b: &FixtureBuilder) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let repo = b.build(&dir.path().join("repo")).unwrap();
        Fixture { dir, repo }
    }

    pub fn id(&self, m: Mark) -> CommitId {
        self.repo.id(m).clone()
    }

    pub fn path(&self) -> &Path {
        &self.repo.path
    }
}

/// Lines of a file, each tagged with the commit that wrote it.
type FileState = Vec<(String, Mark)>;

struct Gen {
    rng: ChaCha8Rng,
    b: FixtureBuilder,
    line_counter: u32,
    file_counter: u32,
    time: i64,
    times: BTreeMap<Mark, i64>,
    commits: usize,
    merges: usize,
    renames: usize,
}

fn render(state: &FileState) -> String {
    state.iter().map(|(l, _)| format!("{l}\n")).collect()
}

impl Gen {
    fn next_time(&mut self) -> i64 {
        self.time += 3600;
        self.time
    }

    fn fresh_line(&mut self) -> String {
        self.line_counter += 1;
        let words = ["alpha", "beta", "gamma", "delta", "omega", "sigma"];
        let w = words.choose(&mut self.rng).unwrap();
        format!("stmt_{}({w});", self.line_counter)
    }

    fn fresh_file(&mut self) -> String {
        self.file_counter += 1;
        let dirs = ["src", "lib", "drivers/net", "include"];
        let d = dirs.choose(&mut self.rng).unwrap();
        format!("{d}/f{}.c", self.file_counter)
    }

    /// Replace, insert and delete lines of `state`, tagging new lines with `mark`.
    fn edit(&mut self, state: &mut FileState, mark: Mark, deletions: bool) {
        let ops = self.rng.gen_range(1..=3);
        for _ in 0..ops {
            let kind = if deletions { self.rng.gen_range(0..3) } else { 1 };
            match kind {
                0 if !state.is_empty() => {
                    let i = self.rng.gen_range(0..state.len());
                    let n = self.rng.gen_range(1..=2).min(state.len() - i);
                    for slot in &mut state[i..i + n] {
                        *slot = (self.fresh_line(), mark);
                    }
                }
                2 if state.len() > 1 => {
                    let i = self.rng.gen_range(0..state.len());
                    state.remove(i);
                }
                _ => {
                    let i = self.rng.gen_range(0..=state.len());
                    let n = self.rng.gen_range(1..=3);
                    for k in 0..n {
                        let line = self.fresh_line();
                        state.insert(i + k, (line, mark));
                    }
                }
            }
        }
    }

    fn modify_commit(&mut self, branch: &str, allowed: &[String], files: &mut BTreeMap<String, FileState>) -> Mark {
        let t = self.next_time();
        let path = allowed.choose(&mut self.rng).unwrap().clone();
        let mark = Mark(self.b.len() as u32 + 1);
        let mut state = files[&path].clone();
        self.edit(&mut state, mark, true);
        let content = render(&state);
        files.insert(path.clone(), state);
        self.times.insert(mark, t);
        self.commits += 1;
        let m = self.b.commit(&format!("change {path}")).branch(branch).at(t).write(&path, &content).done();
        assert_eq!(m, mark);
        m
    }
}

pub struct Generated {
    pub fx: Fixture,
    pub fix: Mark,
    pub commits: usize,
    pub merges: usize,
    pub renames: usize,
    pub ghost: bool,
    /// Commit of every line the fix deletes or modifies.
    pub removed_origins: Vec<Mark>,
    pub times: BTreeMap<Mark, i64>,
}

impl Generated {
    pub fn fix_id(&self) -> CommitId {
        self.fx.id(self.fix)
    }

    pub fn oracle_b(&self) -> BTreeSet<CommitId> {
        self.removed_origins.iter().map(|m| self.fx.id(*m)).collect()
    }

    pub fn oracle_r(&self) -> Option<CommitId> {
        let set: BTreeSet<Mark> = self.removed_origins.iter().copied().collect();
        set.into_iter()
            .map(|m| (self.times[&m], std::cmp::Reverse(self.fx.id(m))))
            .max()
            .map(|(_, std::cmp::Reverse(id))| id)
    }

    pub fn oracle_l(&self) -> Option<CommitId> {
        let mut counts: HashMap<Mark, u64> = HashMap::new();
        for m in &self.removed_origins {
            *counts.entry(*m).or_default() += 1;
        }
        counts
            .into_iter()
            .map(|(m, n)| (n, std::cmp::Reverse(self.fx.id(m))))
            .max()
            .map(|(_, std::cmp::Reverse(id))| id)
    }
}

/// A random linear-and-merge history of `target` commits (5..=50) whose last
/// commit is the fix. Every line ever written is unique, so the commit that
/// last wrote a line is known exactly.
pub fn generate(seed: u64, force_ghost: Option<bool>) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.gen_range(5..=50usize);
    let mut g = Gen {
        rng,
        b: FixtureBuilder::new(),
        line_counter: 0,
        file_counter: 0,
        time: BASE_TIME,
        times: BTreeMap::new(),
        commits: 0,
        merges: 0,
        renames: 0,
    };

    let t = g.next_time();
    let first = Mark(1);
    let mut files = BTreeMap::new();
    let n_files = g.rng.gen_range(1..=3);
    let mut ops = Vec::new();
    for _ in 0..n_files {
        let path = g.fresh_file();
        let n = g.rng.gen_range(3..=10);
        let state: FileState = (0..n).map(|_| (g.fresh_line(), first)).collect();
        ops.push((path.clone(), render(&state)));
        files.insert(path, state);
    }
    let mut c = g.b.commit("initial import").at(t);
    for (p, content) in &ops {
        c = c.write(p, content);
    }
    let mut head = c.done();
    g.times.insert(head, t);
    g.commits += 1;

    while g.commits < target - 1 {
        let remaining = target - 1 - g.commits;
        let roll = g.rng.gen_range(0..100);
        let paths: Vec<String> = files.keys().cloned().collect();
        if roll < 12 && remaining >= 3 && paths.len() >= 2 {
            // Side branch touching one file, main touching others, then a merge.
            let side_file = paths.choose(&mut g.rng).unwrap().clone();
            let others: Vec<String> = paths.iter().filter(|p| **p != side_file).cloned().collect();
            let mut side_files = files.clone();
            let branch = format!("topic{}", g.merges);
            let side_n = g.rng.gen_range(1..=2).min(remaining - 1);
            let mut side_tip = head;
            for i in 0..side_n {
                let t = g.next_time();
                let mark = Mark(g.b.len() as u32 + 1);
                let mut state = side_files[&side_file].clone();
                g.edit(&mut state, mark, true);
                let content = render(&state);
                side_files.insert(side_file.clone(), state);
                g.times.insert(mark, t);
                g.commits += 1;
                let mut c = g.b.commit(&format!("topic work on {side_file}")).branch(&branch).at(t);
                if i == 0 {
                    c = c.parent(head);
                }
                side_tip = c.write(&side_file, &content).done();
            }
            let main_n = g.rng.gen_range(0..=1).min(target - 1 - g.commits - 1);
            for _ in 0..main_n {
                head = g.modify_commit("main", &others, &mut files);
            }
            let t = g.next_time();
            files.insert(side_file.clone(), side_files[&side_file].clone());
            let content = render(&files[&side_file]);
            head = g
                .b
                .commit(&format!("Merge branch '{branch}'"))
                .at(t)
                .parent(head)
                .merge(side_tip)
                .write(&side_file, &content)
                .done();
            g.times.insert(head, t);
            g.commits += 1;
            g.merges += 1;
        } else if roll < 22 {
            let from = paths.choose(&mut g.rng).unwrap().clone();
            let to = g.fresh_file();
            let t = g.next_time();
            let state = files.remove(&from).unwrap();
            files.insert(to.clone(), state);
            head = g.b.commit(&format!("move {from} to {to}")).at(t).rename(&from, &to).done();
            g.times.insert(head, t);
            g.commits += 1;
            g.renames += 1;
        } else if roll < 32 {
            let path = g.fresh_file();
            let t = g.next_time();
            let mark = Mark(g.b.len() as u32 + 1);
            let n = g.rng.gen_range(2..=6);
            let state: FileState = (0..n).map(|_| (g.fresh_line(), mark)).collect();
            let content = render(&state);
            files.insert(path.clone(), state);
            head = g.b.commit(&format!("add {path}")).at(t).write(&path, &content).done();
            g.times.insert(head, t);
            g.commits += 1;
        } else {
            head = g.modify_commit("main", &paths, &mut files);
        }
    }

    let ghost = force_ghost.unwrap_or_else(|| g.rng.gen_bool(0.2));
    let t = g.next_time();
    let fix = Mark(g.b.len() as u32 + 1);
    let paths: Vec<String> = files.keys().cloned().collect();
    let n_touch = g.rng.gen_range(1..=paths.len().min(2));
    let touched: Vec<String> = paths.choose_multiple(&mut g.rng, n_touch).cloned().collect();
    let mut removed_origins = Vec::new();
    let mut c_ops = Vec::new();
    for path in &touched {
        let old = files[path].clone();
        let mut new = old.clone();
        if ghost {
            g.edit(&mut new, fix, false);
        } else {
            g.edit(&mut new, fix, true);
            let older: Vec<usize> = (0..new.len()).filter(|&i| new[i].1 != fix).collect();
            if let Some(&i) = older.choose(&mut g.rng) {
                let line = g.fresh_line();
                new[i] = (line, fix);
            }
        }
        let kept: BTreeSet<&String> = new.iter().map(|(l, _)| l).collect();
        removed_origins.extend(old.iter().filter(|(l, _)| !kept.contains(l)).map(|(_, m)| *m));
        c_ops.push((path.clone(), render(&new)));
    }
    let mut c = g.b.commit("Fix crash in parser\n\nFixes: previous change").at(t);
    for (p, content) in &c_ops {
        c = c.write(p, content);
    }
    let fix_mark = c.done();
    assert_eq!(fix_mark, fix);
    g.times.insert(fix, t);
    g.commits += 1;
    let ghost = removed_origins.is_empty();

    let fx = Fixture::build(&g.b);
    Generated {
        fx,
        fix,
        commits: g.commits,
        merges: g.merges,
        renames: g.renames,
        ghost,
        removed_origins,
        times: g.times,
    }
}

/// Two commit objects whose ids share their first 7 hex digits, written
/// into `repo` as loose objects. Returns both ids and the shared prefix.
pub fn colliding_commits(repo: &Path) -> (CommitId, CommitId, String) {
    let tree = git(repo, &["rev-parse", "HEAD^{tree}"], None).unwrap().trim().to_string();
    let body = |i: u64| {
        format!(
            "tree {tree}\nauthor Dev <dev@example.com> {BASE_TIME} +0000\ncommitter Dev <dev@example.com> {BASE_TIME} +0000\n\nnonce {i}\n"
        )
    };
    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut i = 0u64;
    let (a, b) = loop {
        let text = body(i);
        let mut h = sha1_smol::Sha1::new();
        h.update(format!("commit {}\0", text.len()).as_bytes());
        h.update(text.as_bytes());
        let hex = h.digest().to_string();
        if let Some(j) = seen.insert(hex[..7].to_string(), i) {
            break (j, i);
        }
        i += 1;
    };
    let write = |n: u64| {
        let out = git(repo, &["hash-object", "-t", "commit", "-w", "--stdin"], Some(body(n).as_bytes())).unwrap();
        CommitId::parse(out.trim()).unwrap()
    };
    let (ida, idb) = (write(a), write(b));
    let prefix = ida.as_str()[..7].to_string();
    assert_eq!(&idb.as_str()[..7], prefix);
    (ida, idb, prefix)
}

/// Digest of every file under the repository, `.git` included.
pub fn repo_digest(root: &Path) -> String {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut files = Vec::new();
    walk(root, root, &mut files);
    let mut h = sha1_smol::Sha1::new();
    for (p, bytes) in files {
        h.update(p.as_bytes());
        h.update(&[0]);
        h.update(&(bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    h.digest().to_string()
}

/// The two-directory repository: a library function gains a flaw, a
/// refactoring touches the driver, and the fix lands in the driver.
pub struct CrossFile {
    pub fx: Fixture,
    pub base: Mark,
    pub bic: Mark,
    pub refactor: Mark,
    pub fix: Mark,
}

pub const LIB_V1: &str = "int lib_port_count(struct host *h)\n{\n\treturn h->n_ports;\n}\n\nint lib_reset(struct host *h)\n{\n\treturn 0;\n}\n";
pub const LIB_V2: &str = "int lib_port_count(struct host *h)\n{\n\treturn h->n_ports;\n}\n\nint lib_reset(struct host *h)\n{\n\th->task_list = NULL;\n\treturn 0;\n}\n";
pub const DRV_V1: &str = "static int drv_abort(struct host *h)\n{\n\tstruct task *t = h->task_list;\n\tif (t)\n\t\tcomplete(t);\n\treturn lib_reset(h);\n}\n";
pub const DRV_V2: &str = "static int drv_abort(struct host *h)\n{\n\tstruct task *t = h->task_list;\n\n\tif (t)\n\t\tcomplete(t);\n\treturn lib_reset(h);\n}\n";
pub const DRV_V3: &str = "static int drv_abort(struct host *h)\n{\n\tstruct task *t = h->task_list;\n\n\tif (t && t->done)\n\t\tcomplete(t);\n\treturn lib_reset(h);\n}\n";

fn cross_file_builder(bic_ref: &str) -> (FixtureBuilder, [Mark; 4]) {
    let mut b = FixtureBuilder::new();
    let base = b
        .commit("Add host library and driver")
        .at(BASE_TIME)
        .write("lib/core.c", LIB_V1)
        .write("driver/d.c", DRV_V1)
        .done();
    let bic = b
        .commit("lib: clear the task list on reset")
        .at(BASE_TIME + 86_400)
        .write("lib/core.c", LIB_V2)
        .done();
    let refactor = b
        .commit("driver: whitespace cleanup")
        .at(BASE_TIME + 2 * 86_400)
        .write("driver/d.c", DRV_V2)
        .done();
    let message = format!(
        "driver: check task completion before abort\n\nThe reset path clears the task list early since {bic_ref}.\n\nFixes: {bic_ref} (\"lib: clear the task list on reset\")\nReported-by: Someone <s@example.com>\n"
    );
    let fix = b.commit(&message).at(BASE_TIME + 3 * 86_400).write("driver/d.c", DRV_V3).done();
    (b, [base, bic, refactor, fix])
}

/// The fix message names the BIC, as real fix messages often do.
pub fn cross_file() -> CrossFile {
    let (probe, marks) = cross_file_builder("0000000");
    let probe_fx = Fixture::build(&probe);
    let bic_id = probe_fx.id(marks[1]);
    let (b, [base, bic, refactor, fix]) = cross_file_builder(&bic_id.as_str()[..12]);
    let fx = Fixture::build(&b);
    assert_eq!(fx.id(bic), bic_id);
    CrossFile {
        fx,
        base,
        bic,
        refactor,
        fix,
    }
}

/// Addition-only fix: a guard around an identifier introduced by the BIC.
pub struct Ghost {
    pub fx: Fixture,
    pub base: Mark,
    pub bic: Mark,
    pub fix: Mark,
}

pub const GHOST_V1: &str = "int parse(const char *s)\n{\n\tint n = 0;\n\twhile (*s)\n\t\tn++;\n\treturn n;\n}\n";
pub const GHOST_V2: &str = "int parse(const char *s)\n{\n\tint n = 0;\n\tint depth_limit = 64;\n\twhile (*s)\n\t\tn++;\n\treturn n + depth_limit;\n}\n";
pub const GHOST_V3: &str = "int parse(const char *s)\n{\n\tint n = 0;\n\tint depth_limit = 64;\n\tif (depth_limit < 0)\n\t\treturn -1;\n\twhile (*s)\n\t\tn++;\n\treturn n + depth_limit;\n}\n";

pub fn ghost() -> Ghost {
    let mut b = FixtureBuilder::new();
    let base = b.commit("Add parser").at(BASE_TIME).write("src/parse.c", GHOST_V1).done();
    b.commit("Add docs").at(BASE_TIME + 3600).write("README", "parser\n").done();
    let bic = b
        .commit("parser: introduce depth limit")
        .at(BASE_TIME + 7200)
        .write("src/parse.c", GHOST_V2)
        .done();
    b.commit("Update docs").at(BASE_TIME + 10_800).write("README", "parser\nlimits\n").done();
    let fix = b
        .commit("parser: guard the depth limit")
        .at(BASE_TIME + 14_400)
        .write("src/parse.c", GHOST_V3)
        .done();
    Ghost {
        fx: Fixture::build(&b),
        base,
        bic,
        fix,
    }
}
