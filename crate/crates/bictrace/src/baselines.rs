//! B-SZZ, R-SZZ and L-SZZ over a local repository.

use std::collections::{BTreeMap, BTreeSet};

use bictrace_core::compress::parse_porcelain;
use bictrace_core::diff::{parse_unified_diff, removed_lines};
use bictrace_core::szz::{b_szz_set, candidates_from_blame, l_szz_pick, r_szz_pick, BlameCandidate};
use bictrace_core::CommitId;
use serde::{Deserialize, Serialize};

use crate::case_prep::fix_diff;
use crate::gateway::{GitError, RepoHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "b-szz")]
    B,
    #[serde(rename = "r-szz")]
    R,
    #[serde(rename = "l-szz")]
    L,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::B => "b-szz",
            Algorithm::R => "r-szz",
            Algorithm::L => "l-szz",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "b" | "b-szz" | "bszz" => Ok(Algorithm::B),
            "r" | "r-szz" | "rszz" => Ok(Algorithm::R),
            "l" | "l-szz" | "lszz" => Ok(Algorithm::L),
            _ => Err(format!("unknown algorithm {s:?}; expected b, r or l")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("{0} is a root commit")]
    RootCommit(CommitId),
    #[error("blame output for {file}: {message}")]
    Blame { file: String, message: String },
    #[error(transparent)]
    Git(#[from] GitError),
}

/// Collapse sorted line numbers into inclusive ranges.
pub fn line_ranges(lines: &BTreeSet<u32>) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for &n in lines {
        match out.last_mut() {
            Some((_, end)) if *end + 1 == n => *end = n,
            _ => out.push((n, n)),
        }
    }
    out
}

/// Blame every deleted or modified line of `fix` at its first parent, one
/// blame process per file.
pub fn blame_candidates(repo: &RepoHandle, fix: &CommitId) -> Result<Vec<BlameCandidate>, BaselineError> {
    let parent = repo.parent_of(fix, 1)?.ok_or_else(|| BaselineError::RootCommit(fix.clone()))?;
    let diff = fix_diff(repo, &parent, fix)?;
    let removed = removed_lines(&parse_unified_diff(&diff));
    let mut out = Vec::new();
    for (file, lines) in &removed {
        let wanted: BTreeSet<u32> = lines.iter().map(|(n, _)| *n).collect();
        let ranges: Vec<String> = line_ranges(&wanted).iter().map(|(a, b)| format!("-L{a},{b}")).collect();
        let mut args: Vec<&str> = vec!["blame", "--porcelain"];
        args.extend(ranges.iter().map(String::as_str));
        args.extend([parent.as_str(), "--", file.as_str()]);
        let raw = repo.run_ok(&args)?;
        let parsed = parse_porcelain(&raw).map_err(|e| BaselineError::Blame {
            file: file.clone(),
            message: e.to_string(),
        })?;
        out.extend(candidates_from_blame(file, &parsed, &wanted));
    }
    Ok(out)
}

pub fn b_szz(repo: &RepoHandle, fix: &CommitId) -> Result<BTreeSet<CommitId>, BaselineError> {
    Ok(b_szz_set(&blame_candidates(repo, fix)?))
}

pub fn r_szz(repo: &RepoHandle, fix: &CommitId) -> Result<Option<CommitId>, BaselineError> {
    Ok(r_szz_pick(&blame_candidates(repo, fix)?))
}

pub fn l_szz(repo: &RepoHandle, fix: &CommitId) -> Result<Option<CommitId>, BaselineError> {
    Ok(l_szz_pick(&blame_candidates(repo, fix)?))
}

pub fn run_algorithm(repo: &RepoHandle, fix: &CommitId, alg: Algorithm) -> Result<BTreeSet<CommitId>, BaselineError> {
    let cands = blame_candidates(repo, fix)?;
    Ok(match alg {
        Algorithm::B => b_szz_set(&cands),
        Algorithm::R => r_szz_pick(&cands).into_iter().collect(),
        Algorithm::L => l_szz_pick(&cands).into_iter().collect(),
    })
}

/// Lines attributed per candidate commit, summed over files.
pub fn attributed_lines(cands: &[BlameCandidate]) -> BTreeMap<CommitId, u64> {
    let mut m = BTreeMap::new();
    for c in cands {
        *m.entry(c.commit.clone()).or_default() += u64::from(c.lines_attributed);
    }
    m
}
