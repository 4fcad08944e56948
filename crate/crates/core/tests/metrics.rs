use std::collections::BTreeSet;

use bictrace_core::metrics::{macro_average, micro, Exact};
use bictrace_core::CommitId;
use num_rational::Ratio;
use proptest::prelude::*;

fn id(n: u8) -> CommitId {
    CommitId::parse(&format!("{n:02x}").repeat(20)).unwrap()
}

fn set(ns: &[u8]) -> BTreeSet<CommitId> {
    ns.iter().copied().map(id).collect()
}

/// Oracle: fractions computed by counting over explicit lists.
fn oracle(cases: &[(Vec<u8>, Vec<u8>)]) -> (u64, u64, u64) {
    let mut hits = 0;
    let mut pred = 0;
    let mut truth = 0;
    for (p, g) in cases {
        let p: BTreeSet<u8> = p.iter().copied().collect();
        let g: BTreeSet<u8> = g.iter().copied().collect();
        for x in &p {
            if g.contains(x) {
                hits += 1;
            }
        }
        pred += p.len() as u64;
        truth += g.len() as u64;
    }
    (hits, pred, truth)
}

fn frac(n: u64, d: u64) -> Exact {
    if d == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(n, d)
    }
}

#[test]
fn hand_tables() {
    // (predicted, truth) per case, then expected P, R, F1 as (num, den).
    type Frac = (u64, u64);
    type Table<'a> = (Vec<(&'a [u8], &'a [u8])>, Frac, Frac, Frac);
    let tables: Vec<Table> = vec![
        (vec![(&[1], &[1])], (1, 1), (1, 1), (1, 1)),
        (vec![(&[1], &[2])], (0, 1), (0, 1), (0, 1)),
        (vec![(&[], &[1])], (0, 1), (0, 1), (0, 1)),
        (vec![(&[1], &[1]), (&[3], &[2])], (1, 2), (1, 2), (1, 2)),
        (vec![(&[1], &[1, 2])], (1, 1), (1, 2), (2, 3)),
        (vec![(&[1], &[1, 2, 3]), (&[], &[4])], (1, 1), (1, 4), (2, 5)),
        (vec![(&[1], &[1]), (&[2], &[2]), (&[3], &[4])], (2, 3), (2, 3), (2, 3)),
        (vec![(&[1, 2], &[1])], (1, 2), (1, 1), (2, 3)),
        (vec![(&[], &[1]), (&[], &[2])], (0, 1), (0, 1), (0, 1)),
        (vec![(&[1], &[1, 2]), (&[3], &[3, 4]), (&[9], &[5])], (2, 3), (2, 5), (1, 2)),
    ];
    for (i, (cases, p, r, f)) in tables.into_iter().enumerate() {
        let pr: Vec<_> = cases.iter().map(|(p, _)| set(p)).collect();
        let gt: Vec<_> = cases.iter().map(|(_, g)| set(g)).collect();
        let (_, s) = micro(pr.iter().zip(gt.iter()));
        assert_eq!(s.precision, Ratio::new(p.0, p.1), "table {i} precision");
        assert_eq!(s.recall, Ratio::new(r.0, r.1), "table {i} recall");
        assert_eq!(s.f1, Ratio::new(f.0, f.1), "table {i} f1");
    }
}

#[test]
fn micro_differs_from_macro() {
    let pr = [set(&[1]), set(&[])];
    let gt = [set(&[1]), set(&[2, 3, 4])];
    let (_, mi) = micro(pr.iter().zip(gt.iter()));
    let ma = macro_average(pr.iter().zip(gt.iter()));
    assert_eq!(mi.recall, Ratio::new(1, 4));
    assert_eq!(ma.recall, Ratio::new(1, 2));
    assert_ne!(mi.recall, ma.recall);
}

proptest! {
    #[test]
    fn micro_matches_counting_oracle(
        cases in prop::collection::vec(
            (prop::collection::vec(0u8..12, 0..4), prop::collection::vec(0u8..12, 1..4)),
            0..30,
        )
    ) {
        let pr: Vec<_> = cases.iter().map(|(p, _)| set(p)).collect();
        let gt: Vec<_> = cases.iter().map(|(_, g)| set(g)).collect();
        let (counts, s) = micro(pr.iter().zip(gt.iter()));
        let (h, p, t) = oracle(&cases);
        prop_assert_eq!((counts.hits, counts.predicted, counts.truth), (h, p, t));
        prop_assert_eq!(s.precision, frac(h, p));
        prop_assert_eq!(s.recall, frac(h, t));
        let pf = frac(h, p);
        let rf = frac(h, t);
        let f1 = if pf + rf == Ratio::from_integer(0) {
            Ratio::from_integer(0)
        } else {
            Ratio::from_integer(2) * pf * rf / (pf + rf)
        };
        prop_assert_eq!(s.f1, f1);
        prop_assert!(s.precision <= Ratio::from_integer(1) && s.recall <= Ratio::from_integer(1));
    }
}
