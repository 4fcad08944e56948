mod common;

use bictrace::case_prep::Templates;
use bictrace::config::RunConfig;
use bictrace::fixture::FixtureBuilder;
use bictrace::gateway::RepoHandle;
use bictrace::runner::{investigate, Investigation};
use bictrace_core::agent::{LogicalClock, ModelBackend, ReplayBackend, ScriptedBackend, DEFAULT_MAX_TURNS};
use bictrace_core::resolve::{PredictionStatus, RefLookup};
use bictrace_core::transcript::ModelStep;
use common::{colliding_commits, cross_file, ghost, CrossFile, Fixture, BASE_TIME};
use serde_json::json;

fn run(path: &std::path::Path, fix: &str, backend: &mut dyn ModelBackend, cfg: &RunConfig) -> Investigation {
    let repo = RepoHandle::open(path).unwrap();
    investigate(&repo, "case-1", fix, cfg, &Templates::default(), backend, &mut LogicalClock::default()).unwrap()
}

fn answer(hash: &str) -> ModelStep {
    ModelStep::final_answer(&format!(
        "The abort path reads the list cleared by reset.\n\nBIC: {hash}\nConfidence: high\nReasoning: the reset change clears the task list"
    ))
}

fn cross_file_script(cf: &CrossFile) -> Vec<ModelStep> {
    let bic = cf.fx.id(cf.bic);
    vec![
        ModelStep::tool("git_blame", json!({"file_path": "driver/d.c", "line_start": 3, "line_end": 6})),
        ModelStep::tool("git_show", json!({"commit": cf.fx.id(cf.refactor).short(8)})),
        ModelStep::tool("git_grep", json!({"search_string": "task_list"})),
        ModelStep::tool("git_log_s", json!({"search_string": "task_list = NULL"})),
        answer(&bic.as_str()[..12]),
    ]
}

#[test]
fn cross_file_trajectory_resolves_planted_bic() {
    let cf = cross_file();
    let mut b = ScriptedBackend::new(cross_file_script(&cf));
    let inv = run(cf.fx.path(), cf.fx.id(cf.fix).as_str(), &mut b, &RunConfig::default());
    assert_eq!(inv.prediction.status, PredictionStatus::Resolved(cf.fx.id(cf.bic)));
    assert_eq!(inv.transcript.tool_turns, 4);
    assert_eq!(inv.transcript.total_turns, 5);
    let obs = |i: usize| inv.transcript.turns[i].observation.as_ref().unwrap().text.clone();
    assert!(obs(2).contains("lib/core.c"));
    assert!(obs(3).contains(cf.fx.id(cf.bic).as_str()));
    let res = inv.prediction.resolution.unwrap();
    assert_eq!(res.attempts.len(), 1);
    assert_eq!(res.attempts[0].length, 12);
}

#[test]
fn ghost_trajectory_resolves_planted_bic() {
    let g = ghost();
    let bic = g.fx.id(g.bic);
    let mut b = ScriptedBackend::new(vec![
        ModelStep::tool("git_log_s", json!({"search_string": "depth_limit", "path": "src/parse.c"})),
        answer(bic.short(8)),
    ]);
    let inv = run(g.fx.path(), g.fx.id(g.fix).as_str(), &mut b, &RunConfig::default());
    let log = &inv.transcript.turns[0].observation.as_ref().unwrap().text;
    assert!(log.contains(bic.as_str()), "{log}");
    assert!(!log.contains(g.fx.id(g.fix).as_str()));
    assert_eq!(inv.prediction.status, PredictionStatus::Resolved(bic));
}

#[test]
fn scripted_runs_are_byte_identical() {
    let cf = cross_file();
    let fix = cf.fx.id(cf.fix);
    let a = run(cf.fx.path(), fix.as_str(), &mut ScriptedBackend::new(cross_file_script(&cf)), &RunConfig::default());
    let b = run(cf.fx.path(), fix.as_str(), &mut ScriptedBackend::new(cross_file_script(&cf)), &RunConfig::default());
    assert_eq!(a.transcript.to_jsonl(), b.transcript.to_jsonl());
}

#[test]
fn replay_reproduces_the_recording() {
    let cf = cross_file();
    let fix = cf.fx.id(cf.fix);
    let rec = run(cf.fx.path(), fix.as_str(), &mut ScriptedBackend::new(cross_file_script(&cf)), &RunConfig::default());
    let mut replay = ReplayBackend::new(&rec.transcript);
    let again = run(cf.fx.path(), fix.as_str(), &mut replay, &RunConfig::default());
    assert_eq!(again.transcript.to_jsonl(), rec.transcript.to_jsonl());
}

#[test]
fn endless_tool_calls_stop_at_the_turn_limit() {
    let cf = cross_file();
    let mut b = ScriptedBackend::repeating(ModelStep::tool("git_grep", json!({"search_string": "task"})));
    let inv = run(cf.fx.path(), cf.fx.id(cf.fix).as_str(), &mut b, &RunConfig::default());
    assert_eq!(inv.transcript.tool_turns, DEFAULT_MAX_TURNS);
    assert_eq!(inv.transcript.total_turns, DEFAULT_MAX_TURNS + 1);
    assert!(inv.transcript.turns.last().unwrap().forced);
    assert_eq!(inv.prediction.status, PredictionStatus::NoPrediction);
}

#[test]
fn ambiguous_short_prefix_is_discarded() {
    let cf = cross_file();
    let (_, _, prefix) = colliding_commits(cf.fx.path());
    let mut b = ScriptedBackend::new(vec![answer(&prefix)]);
    let inv = run(cf.fx.path(), cf.fx.id(cf.fix).as_str(), &mut b, &RunConfig::default());
    assert_eq!(inv.prediction.status, PredictionStatus::Discarded);
    let res = inv.prediction.resolution.unwrap();
    assert_eq!(res.attempts.len(), 1);
    assert_eq!(res.attempts[0].outcome, RefLookup::Ambiguous);
}

#[test]
fn commits_after_the_fix_are_discarded() {
    let mut b = FixtureBuilder::new();
    b.commit("a").at(BASE_TIME).write("a.c", "1\n2\n").done();
    let fix = b.commit("fix").at(BASE_TIME + 10).write("a.c", "1\n3\n").done();
    let later = b.commit("later").at(BASE_TIME + 20).write("a.c", "1\n4\n").done();
    let fx = Fixture::build(&b);
    let mut s = ScriptedBackend::new(vec![answer(fx.id(later).as_str())]);
    let inv = run(fx.path(), fx.id(fix).as_str(), &mut s, &RunConfig::default());
    assert_eq!(inv.prediction.status, PredictionStatus::Discarded);
}

#[test]
fn missing_answer_is_no_prediction() {
    let cf = cross_file();
    let mut b = ScriptedBackend::new(vec![ModelStep::final_answer("I could not determine the commit.")]);
    let inv = run(cf.fx.path(), cf.fx.id(cf.fix).as_str(), &mut b, &RunConfig::default());
    assert_eq!(inv.prediction.status, PredictionStatus::NoPrediction);
}
