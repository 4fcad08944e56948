//! Candidate selection for the blame-based SZZ variants.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::commit::CommitId;
use crate::compress::Porcelain;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlameCandidate {
    pub commit: CommitId,
    pub file: String,
    pub lines_attributed: u32,
    pub committer_time: Timestamp,
}

/// Candidates for one file from porcelain blame restricted to `wanted`
/// (pre-image line numbers). Lines outside `wanted` are ignored.
pub fn candidates_from_blame(file: &str, blame: &Porcelain, wanted: &BTreeSet<u32>) -> Vec<BlameCandidate> {
    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    for line in &blame.lines {
        if wanted.contains(&line.final_line) {
            *counts.entry(line.commit.as_str()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter_map(|(hash, n)| {
            let commit = CommitId::parse(hash).ok()?;
            let committer_time = blame.commits.get(hash).and_then(|c| c.committer_time).unwrap_or(0);
            Some(BlameCandidate {
                commit,
                file: file.into(),
                lines_attributed: n,
                committer_time,
            })
        })
        .collect()
}

pub fn b_szz_set(cands: &[BlameCandidate]) -> BTreeSet<CommitId> {
    cands.iter().map(|c| c.commit.clone()).collect()
}

/// Most recent candidate by committer time; ties go to the smallest id.
pub fn r_szz_pick(cands: &[BlameCandidate]) -> Option<CommitId> {
    cands
        .iter()
        .max_by(|a, b| a.committer_time.cmp(&b.committer_time).then_with(|| b.commit.cmp(&a.commit)))
        .map(|c| c.commit.clone())
}

/// Candidate with the most attributed lines, summed over files; ties go to
/// the smallest id.
pub fn l_szz_pick(cands: &[BlameCandidate]) -> Option<CommitId> {
    let mut totals: BTreeMap<&CommitId, u64> = BTreeMap::new();
    for c in cands {
        *totals.entry(&c.commit).or_default() += u64::from(c.lines_attributed);
    }
    totals
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(id, _)| id.clone())
}
