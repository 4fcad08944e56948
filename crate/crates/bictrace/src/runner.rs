//! Single investigations, batches and baseline runs.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use bictrace_core::agent::{
    run_investigation, AgentError, CaseRef, Clock, LogicalClock, ModelBackend, ReplayBackend, ScriptedBackend,
};
use bictrace_core::prompt::{CaseSpec, FixContext};
use bictrace_core::transcript::{Prediction, Transcript};

use crate::backend::{LiveBackend, LiveSettings};
use crate::baselines::{run_algorithm, Algorithm};
use crate::case_prep::{build_initial_context, load_fix_context, PrepError, Templates};
use crate::config::{BackendChoice, RunConfig, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
use crate::evaluation::{
    aggregate_report, classify_cross_file, classify_ghost, is_url, render_table, CaseResult, CategoryFlags, Cost,
    Dataset, EvalError, ResultsFile,
};
use crate::gateway::{GitError, GitResolver, RepoHandle};
use crate::pipeline::CaseTools;
use crate::toolkit::ToolContext;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("backend configuration: {0}")]
    Backend(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Git(#[from] GitError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// File-name-safe form of a case id.
pub fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

/// Scripts and recordings may be one file or a directory of `<case>.jsonl`.
fn per_case_file(path: &Path, case_id: &str) -> PathBuf {
    if path.is_dir() {
        path.join(format!("{}.jsonl", safe_name(case_id)))
    } else {
        path.to_path_buf()
    }
}

pub struct WallClock(Instant);

impl Default for WallClock {
    fn default() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_ms(&mut self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

pub type CaseBackend = (Box<dyn ModelBackend + Send>, Box<dyn Clock + Send>);

/// Backend and clock for one case. Scripted and replayed runs use a logical
/// clock so their transcripts are reproducible.
pub fn make_backend(
    cfg: &RunConfig,
    case_id: &str,
) -> Result<CaseBackend, RunError> {
    match &cfg.model.backend {
        BackendChoice::Live => {
            let missing = |what: &str, var: &str| RunError::Backend(format!("live backend needs {what}; set {var}"));
            let endpoint = cfg.model.endpoint.clone().ok_or_else(|| missing("an endpoint", ENV_ENDPOINT))?;
            let model = cfg.model.model.clone().ok_or_else(|| missing("a model name", ENV_MODEL))?;
            let api_key = cfg.model.api_key.clone().ok_or_else(|| missing("an API key", ENV_API_KEY))?;
            let backend = LiveBackend::new(LiveSettings {
                endpoint,
                api_key,
                model,
                request_timeout: Duration::from_secs(cfg.model.request_timeout_secs),
                extra: cfg.model.params.clone(),
            });
            Ok((Box::new(backend), Box::new(WallClock::default())))
        }
        BackendChoice::Scripted(p) => {
            let file = per_case_file(p, case_id);
            let b = ScriptedBackend::from_jsonl(&read(&file)?)
                .map_err(|e| RunError::Backend(format!("{}: {e}", file.display())))?;
            Ok((Box::new(b), Box::new(LogicalClock::default())))
        }
        BackendChoice::Replay(p) => {
            let file = per_case_file(p, case_id);
            let t = Transcript::from_jsonl(&read(&file)?)
                .map_err(|e| RunError::Backend(format!("{}: {e}", file.display())))?;
            Ok((Box::new(ReplayBackend::new(&t)), Box::new(LogicalClock::default())))
        }
    }
}

pub fn load_templates(cfg: &RunConfig) -> Result<Templates, RunError> {
    let mut t = Templates::default();
    if let Some(p) = &cfg.system_prompt_path {
        t.system = read(p)?;
    }
    if let Some(p) = &cfg.case_prompt_path {
        t.case = read(p)?;
    }
    Ok(t)
}

pub fn open_repo(path: &str, cfg: &RunConfig) -> Result<RepoHandle, GitError> {
    if is_url(path) {
        return Err(GitError::RepoUnavailable {
            path: path.into(),
            reason: "remote repositories must be cloned first (see fetch-datasets)".into(),
        });
    }
    Ok(RepoHandle::open(path)?.with_timeout(Duration::from_secs_f64(cfg.git.timeout_secs)))
}

#[derive(Debug, Clone)]
pub struct Investigation {
    pub fix: FixContext,
    pub prediction: Prediction,
    pub transcript: Transcript,
    pub seconds: f64,
}

pub fn investigate(
    repo: &RepoHandle,
    case_id: &str,
    fix: &str,
    cfg: &RunConfig,
    templates: &Templates,
    backend: &mut dyn ModelBackend,
    clock: &mut dyn Clock,
) -> Result<Investigation, RunError> {
    let started = Instant::now();
    let fc = load_fix_context(repo, fix, cfg.git.date_mode)?;
    let initial = build_initial_context(&fc, templates).map_err(PrepError::from)?;
    let mut ctx = ToolContext::new(repo.clone(), &fc.fix_parent);
    ctx.follow_renames = cfg.git.follow_renames;
    let mut tools = CaseTools::new(ctx, cfg.compression.clone(), fc.fix_date, Some(fc.fix_id.clone()));
    let mut resolver = GitResolver(repo);
    let case = CaseRef {
        case_id,
        fix_commit: fc.fix_id.as_str(),
        fix_date: fc.fix_date,
    };
    let (prediction, transcript) =
        run_investigation(&case, &initial, backend, &mut tools, &mut resolver, clock, &cfg.agent)?;
    Ok(Investigation {
        fix: fc,
        prediction,
        transcript,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Text printed by `bictrace investigate` and `bictrace replay`.
pub fn render_prediction(case_id: &str, p: &Prediction) -> String {
    let bic = p.status.resolved().map(|c| c.to_string()).unwrap_or_else(|| "-".into());
    let conf = serde_json::to_value(p.confidence)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let mut s = format!("case: {case_id}\nstatus: {}\nbic: {bic}\nconfidence: {conf}\n", p.status.label());
    if let Some(f) = &p.failure {
        s.push_str(&format!("failure: {f}\n"));
    }
    s
}

pub fn categorize(repo: &RepoHandle, case: &CaseSpec, fc: &FixContext, cfg: &RunConfig) -> Result<CategoryFlags, GitError> {
    Ok(CategoryFlags {
        ghost: classify_ghost(fc),
        cross_file: !case.ground_truth.is_empty() && classify_cross_file(repo, case, fc, cfg.git.follow_renames)?,
    })
}

fn failed_result(case: &CaseSpec, status: &str, err: impl std::fmt::Display) -> CaseResult {
    CaseResult {
        case_id: case.id.clone(),
        predicted: Default::default(),
        status: status.into(),
        transcript: None,
        category: CategoryFlags::default(),
        cost: Cost::default(),
        resolution: None,
        failure: Some(err.to_string()),
    }
}

fn agent_case(case: &CaseSpec, cfg: &RunConfig, templates: &Templates, transcripts: &Path) -> Result<CaseResult, RunError> {
    let repo = open_repo(&case.repo, cfg)?;
    let (mut backend, mut clock) = make_backend(cfg, &case.id)?;
    let inv = investigate(&repo, &case.id, &case.fix_commit, cfg, templates, backend.as_mut(), clock.as_mut())?;
    let name = format!("{}.jsonl", safe_name(&case.id));
    write(&transcripts.join(&name), &inv.transcript.to_jsonl())?;
    let category = categorize(&repo, case, &inv.fix, cfg)?;
    let t = &inv.transcript;
    Ok(CaseResult {
        case_id: case.id.clone(),
        predicted: inv.prediction.status.resolved().cloned().into_iter().collect(),
        status: inv.prediction.status.label().into(),
        transcript: Some(format!("transcripts/{name}")),
        category,
        cost: Cost {
            prompt_tokens: t.prompt_tokens,
            completion_tokens: t.completion_tokens,
            tokens: t.total_tokens,
            turns: t.total_turns,
            tool_turns: t.tool_turns,
            seconds: inv.seconds,
            dollars: cfg.prices.map(|p| p.cost(t.prompt_tokens, t.completion_tokens)),
        },
        resolution: inv.prediction.resolution.clone(),
        failure: inv.prediction.failure.clone(),
    })
}

fn baseline_case(case: &CaseSpec, alg: Algorithm, cfg: &RunConfig) -> Result<CaseResult, RunError> {
    let started = Instant::now();
    let repo = open_repo(&case.repo, cfg)?;
    let fc = load_fix_context(&repo, &case.fix_commit, cfg.git.date_mode)?;
    let predicted = run_algorithm(&repo, &fc.fix_id, alg).map_err(|e| RunError::Backend(e.to_string()))?;
    let category = categorize(&repo, case, &fc, cfg)?;
    Ok(CaseResult {
        case_id: case.id.clone(),
        predicted,
        status: alg.name().into(),
        transcript: None,
        category,
        cost: Cost {
            seconds: started.elapsed().as_secs_f64(),
            ..Cost::default()
        },
        resolution: None,
        failure: None,
    })
}

/// Run `f` over every case on `parallelism` workers; results keep dataset order.
pub fn par_map<T: Send>(cases: &[CaseSpec], parallelism: usize, f: impl Fn(&CaseSpec) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = cases.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..parallelism.clamp(1, cases.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(case) = cases.get(i) else { break };
                let r = f(case);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every case ran"))
        .collect()
}

pub fn run_agent_cases(dataset: &Dataset, cfg: &RunConfig, templates: &Templates, transcripts: &Path) -> Vec<CaseResult> {
    par_map(&dataset.cases, cfg.batch.parallelism, |case| {
        agent_case(case, cfg, templates, transcripts).unwrap_or_else(|e| failed_result(case, "failed", e))
    })
}

pub fn run_baseline_cases(dataset: &Dataset, alg: Algorithm, cfg: &RunConfig) -> Vec<CaseResult> {
    par_map(&dataset.cases, cfg.batch.parallelism, |case| {
        baseline_case(case, alg, cfg).unwrap_or_else(|e| failed_result(case, "failed", e))
    })
}

pub fn new_run_id() -> String {
    let d = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    format!("run-{}-{:09}", d.as_secs(), d.subsec_nanos())
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub run_dir: PathBuf,
    pub results: ResultsFile,
    /// Present when every case carries ground truth.
    pub report: Option<crate::evaluation::EvalReport>,
}

impl BatchOutcome {
    pub fn failures(&self) -> usize {
        self.results.results.iter().filter(|r| r.failure.is_some()).count()
    }
}

/// Layout: `<run_dir>/<run_id>/{config.toml, results.jsonl, transcripts/, report.json, report.md}`.
pub fn run_batch(dataset: &Dataset, cfg: &RunConfig, run_id: &str) -> Result<BatchOutcome, RunError> {
    let dir = cfg.batch.run_dir.join(run_id);
    write(&dir.join("config.toml"), &cfg.redacted().to_toml())?;
    write(&dir.join("dataset.jsonl"), &dataset.to_jsonl())?;
    let templates = load_templates(cfg)?;
    let results = run_agent_cases(dataset, cfg, &templates, &dir.join("transcripts"));
    let producer = cfg.model.model.clone().unwrap_or_else(|| "agent".into());
    let file = ResultsFile::new(&producer, &dataset.name, results);
    write(&dir.join("results.jsonl"), &file.to_jsonl())?;
    let report = write_report(&dir, dataset, &file)?;
    Ok(BatchOutcome {
        run_dir: dir,
        results: file,
        report,
    })
}

/// Write `report.json` and `report.md` next to the results when the dataset
/// has ground truth for every case.
pub fn write_report(
    dir: &Path,
    dataset: &Dataset,
    file: &ResultsFile,
) -> Result<Option<crate::evaluation::EvalReport>, RunError> {
    if dataset.require_ground_truth().is_err() {
        return Ok(None);
    }
    let report = aggregate_report(dataset, file)?;
    write(&dir.join("report.json"), &report.to_json())?;
    write(&dir.join("report.md"), &render_table(std::slice::from_ref(&report)))?;
    Ok(Some(report))
}
