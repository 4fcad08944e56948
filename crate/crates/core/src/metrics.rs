//! Micro-averaged precision, recall and F1 with exact rational arithmetic.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::commit::CommitId;

pub type Exact = Ratio<u64>;

/// Summed set sizes across cases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub hits: u64,
    pub predicted: u64,
    pub truth: u64,
}

impl Counts {
    pub fn of(pred: &BTreeSet<CommitId>, truth: &BTreeSet<CommitId>) -> Self {
        Counts {
            hits: pred.intersection(truth).count() as u64,
            predicted: pred.len() as u64,
            truth: truth.len() as u64,
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.hits += other.hits;
        self.predicted += other.predicted;
        self.truth += other.truth;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scores {
    pub precision: Exact,
    pub recall: Exact,
    pub f1: Exact,
}

fn ratio_or_zero(n: u64, d: u64) -> Exact {
    if d == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(n, d)
    }
}

impl Scores {
    /// Zero denominators give zero. F1 is `2h / (|Pred| + |GT|)`, which equals
    /// the harmonic mean of precision and recall whenever that is defined.
    pub fn from_counts(c: Counts) -> Self {
        Scores {
            precision: ratio_or_zero(c.hits, c.predicted),
            recall: ratio_or_zero(c.hits, c.truth),
            f1: ratio_or_zero(2 * c.hits, c.predicted + c.truth),
        }
    }

    pub fn as_f64(&self) -> (f64, f64, f64) {
        (to_f64(self.precision), to_f64(self.recall), to_f64(self.f1))
    }
}

pub fn to_f64(r: Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Micro-averaged scores over `(predicted, truth)` pairs.
pub fn micro<'a, I>(cases: I) -> (Counts, Scores)
where
    I: IntoIterator<Item = (&'a BTreeSet<CommitId>, &'a BTreeSet<CommitId>)>,
{
    let mut total = Counts::default();
    for (p, g) in cases {
        total.add(Counts::of(p, g));
    }
    (total, Scores::from_counts(total))
}

/// Per-case average; only used to show how it differs from [`micro`].
pub fn macro_average<'a, I>(cases: I) -> Scores
where
    I: IntoIterator<Item = (&'a BTreeSet<CommitId>, &'a BTreeSet<CommitId>)>,
{
    let per: Vec<Scores> = cases.into_iter().map(|(p, g)| Scores::from_counts(Counts::of(p, g))).collect();
    if per.is_empty() {
        return Scores::from_counts(Counts::default());
    }
    let n = Ratio::from_integer(per.len() as u64);
    let sum = |f: fn(&Scores) -> Exact| per.iter().map(f).fold(Ratio::from_integer(0), |a, b| a + b) / n;
    Scores {
        precision: sum(|s| s.precision),
        recall: sum(|s| s.recall),
        f1: sum(|s| s.f1),
    }
}
