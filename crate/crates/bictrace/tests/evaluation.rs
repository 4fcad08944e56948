mod common;

use std::path::Path;

use bictrace::case_prep::{load_fix_context, DateMode};
use bictrace::evaluation::{
    aggregate_report, classify_cross_file, classify_ghost, CaseResult, CategoryFlags, Cost, Dataset, EvalError,
    EvalReport, ResultsFile,
};
use bictrace::fixture::FixtureBuilder;
use bictrace::gateway::RepoHandle;
use bictrace_core::prompt::CaseSpec;
use bictrace_core::CommitId;
use common::{cross_file, ghost, Fixture};

fn id(c: char) -> CommitId {
    CommitId::parse(&c.to_string().repeat(40)).unwrap()
}

fn case(name: &str, truth: &[char]) -> CaseSpec {
    CaseSpec {
        id: name.into(),
        repo: "/r".into(),
        fix_commit: "f".repeat(40),
        ground_truth: truth.iter().map(|c| id(*c)).collect(),
        dataset_tag: String::new(),
    }
}

fn result(name: &str, pred: &[char], turns: u32) -> CaseResult {
    CaseResult {
        case_id: name.into(),
        predicted: pred.iter().map(|c| id(*c)).collect(),
        status: "resolved".into(),
        transcript: None,
        category: CategoryFlags::default(),
        cost: Cost {
            turns,
            ..Cost::default()
        },
        resolution: None,
        failure: None,
    }
}

#[test]
fn dataset_parsing() {
    let text = r#"{"schema": "bictrace.dataset/1", "name": "demo"}
{"id": "c1", "repo": "repos/a", "fix_commit": "abc1234", "bics": ["aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa"], "dataset_tag": "linux"}

{"repo": "https://example.com/x.git", "fix_commit": "def5678", "bics": []}
"#;
    let ds = Dataset::parse(text, Path::new("/data/d.jsonl"), Path::new("/data")).unwrap();
    assert_eq!(ds.name, "demo");
    assert_eq!(ds.cases.len(), 2);
    assert_eq!(ds.cases[0].repo, "/data/repos/a");
    assert_eq!(ds.cases[1].id, "def5678");
    assert_eq!(ds.cases[1].repo, "https://example.com/x.git");
    assert!(matches!(ds.require_ground_truth(), Err(EvalError::MissingGroundTruth(ref c)) if c == "def5678"));
    let back = Dataset::parse(&ds.to_jsonl(), Path::new("/x.jsonl"), Path::new("/")).unwrap();
    assert_eq!(back, ds);

    let dup = "{\"id\": \"a\", \"repo\": \"/r\", \"fix_commit\": \"1\"}\n{\"id\": \"a\", \"repo\": \"/r\", \"fix_commit\": \"2\"}\n";
    assert!(matches!(
        Dataset::parse(dup, Path::new("d"), Path::new("/")),
        Err(EvalError::DuplicateCase(_))
    ));
    let bad = "{\"schema\": \"other/2\"}\n";
    assert!(Dataset::parse(bad, Path::new("d"), Path::new("/")).is_err());
    assert!(Dataset::parse("", Path::new("d"), Path::new("/")).unwrap().cases.is_empty());
}

#[test]
fn two_case_hand_example() {
    // GT {A},{B}; predictions {A},{C}: one hit out of two predicted and two true.
    let ds = Dataset {
        name: "t".into(),
        cases: vec![case("1", &['a']), case("2", &['b'])],
    };
    let rf = ResultsFile::new("p", "t", vec![result("1", &['a'], 4), result("2", &['c'], 6)]);
    let r = aggregate_report(&ds, &rf).unwrap();
    assert_eq!(r.overall.exact, ["1/2".to_string(), "1/2".into(), "1/2".into()]);
    assert_eq!(r.cost.turns, 5.0);
    assert_eq!(r.overall.n_cases, 2);
}

#[test]
fn report_round_trips() {
    let ds = Dataset {
        name: "t".into(),
        cases: vec![case("1", &['a', 'b']), case("2", &['b'])],
    };
    let mut r1 = result("1", &['a'], 3);
    r1.category.ghost = true;
    r1.cost.dollars = Some(0.25);
    let rf = ResultsFile::new("p", "t", vec![r1, result("2", &[], 1)]);
    let report = aggregate_report(&ds, &rf).unwrap();
    assert_eq!(EvalReport::from_json(&report.to_json()).unwrap(), report);
    let parsed = ResultsFile::parse(&rf.to_jsonl(), Path::new("r")).unwrap();
    assert_eq!(parsed, rf);
    assert_eq!(report.ghost.n_cases, 1);
    assert_eq!(report.cost.dollars, Some(0.25));
}

#[test]
fn all_ghost_dataset_has_equal_recall() {
    let ds = Dataset {
        name: "t".into(),
        cases: vec![case("1", &['a']), case("2", &['b']), case("3", &['c'])],
    };
    let rs = [("1", 'a'), ("2", 'd'), ("3", 'c')]
        .iter()
        .map(|(n, p)| {
            let mut r = result(n, &[*p], 1);
            r.category.ghost = true;
            r
        })
        .collect();
    let report = aggregate_report(&ds, &ResultsFile::new("p", "t", rs)).unwrap();
    assert_eq!(report.ghost.recall, report.overall.recall);
    assert_eq!(report.ghost.exact[1], "2/3");
}

#[test]
fn mismatched_case_ids_are_errors() {
    let ds = Dataset {
        name: "t".into(),
        cases: vec![case("1", &['a']), case("2", &['b'])],
    };
    let unknown = ResultsFile::new("p", "t", vec![result("1", &[], 1), result("2", &[], 1), result("zz", &[], 1)]);
    match aggregate_report(&ds, &unknown) {
        Err(EvalError::UnknownCases(ids)) => assert_eq!(ids, ["zz"]),
        other => panic!("{other:?}"),
    }
    let partial = ResultsFile::new("p", "t", vec![result("1", &[], 1)]);
    assert!(matches!(aggregate_report(&ds, &partial), Err(EvalError::IncompleteResults(_))));
}

#[test]
fn cross_file_and_ghost_classification() {
    let cf = cross_file();
    let repo = RepoHandle::open(cf.fx.path()).unwrap();
    let fc = load_fix_context(&repo, cf.fx.id(cf.fix).as_str(), DateMode::Committer).unwrap();
    let mut spec = CaseSpec {
        id: "cf".into(),
        repo: cf.fx.repo.path_str(),
        fix_commit: cf.fx.id(cf.fix).to_string(),
        ground_truth: vec![cf.fx.id(cf.bic)],
        dataset_tag: String::new(),
    };
    assert!(classify_cross_file(&repo, &spec, &fc, true).unwrap());
    assert!(!classify_ghost(&fc));
    // One in-file BIC makes the whole case in-file.
    spec.ground_truth.push(cf.fx.id(cf.refactor));
    assert!(!classify_cross_file(&repo, &spec, &fc, true).unwrap());

    let g = ghost();
    let repo = RepoHandle::open(g.fx.path()).unwrap();
    let fc = load_fix_context(&repo, g.fx.id(g.fix).as_str(), DateMode::Committer).unwrap();
    assert!(classify_ghost(&fc));
    let spec = CaseSpec {
        id: "g".into(),
        repo: g.fx.repo.path_str(),
        fix_commit: g.fx.id(g.fix).to_string(),
        ground_truth: vec![g.fx.id(g.bic)],
        dataset_tag: String::new(),
    };
    assert!(!classify_cross_file(&repo, &spec, &fc, true).unwrap());
}

#[test]
fn cross_file_follows_renames_when_enabled() {
    let mut b = FixtureBuilder::new();
    let bic = b.commit("bic").write("old.c", "a\nb\nc\nd\n").done();
    b.commit("move").rename("old.c", "new.c").done();
    let fix = b.commit("fix").write("new.c", "a\nB\nc\nd\n").done();
    let fx = Fixture::build(&b);
    let repo = RepoHandle::open(fx.path()).unwrap();
    let fc = load_fix_context(&repo, fx.id(fix).as_str(), DateMode::Committer).unwrap();
    let spec = CaseSpec {
        id: "r".into(),
        repo: fx.repo.path_str(),
        fix_commit: fx.id(fix).to_string(),
        ground_truth: vec![fx.id(bic)],
        dataset_tag: String::new(),
    };
    assert!(!classify_cross_file(&repo, &spec, &fc, true).unwrap());
    assert!(classify_cross_file(&repo, &spec, &fc, false).unwrap());
}

#[test]
fn categories_are_independent() {
    let ds = Dataset {
        name: "t".into(),
        cases: vec![case("1", &['a']), case("2", &['b'])],
    };
    let mut r1 = result("1", &['a'], 1);
    r1.category = CategoryFlags {
        ghost: true,
        cross_file: true,
    };
    let mut r2 = result("2", &['e'], 1);
    r2.category.cross_file = true;
    let report = aggregate_report(&ds, &ResultsFile::new("p", "t", vec![r1, r2])).unwrap();
    assert_eq!(report.ghost.n_cases, 1);
    assert_eq!(report.cross_file.n_cases, 2);
    assert_eq!(report.cross_file.exact[1], "1/2");
}
