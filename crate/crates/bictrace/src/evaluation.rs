//! Datasets, per-case results, hard-case classification and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bictrace_core::metrics::{micro, Counts, Scores};
use bictrace_core::prompt::{CaseSpec, FixContext};
use bictrace_core::resolve::ResolutionTrace;
use bictrace_core::CommitId;
use serde::{Deserialize, Serialize};

use crate::gateway::{GitError, RepoHandle};

pub const DATASET_SCHEMA: &str = "bictrace.dataset/1";
pub const RESULTS_SCHEMA: &str = "bictrace.results/1";
pub const REPORT_SCHEMA: &str = "bictrace.report/1";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("duplicate case id {0:?}")]
    DuplicateCase(String),
    #[error("case {0:?} has no ground truth")]
    MissingGroundTruth(String),
    #[error("results reference unknown case ids: {}", .0.join(", "))]
    UnknownCases(Vec<String>),
    #[error("results are missing case ids: {}", .0.join(", "))]
    IncompleteResults(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub cases: Vec<CaseSpec>,
}

#[derive(Deserialize)]
struct DatasetHeader {
    schema: String,
    #[serde(default)]
    name: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRecord {
    #[serde(default)]
    id: Option<String>,
    repo: String,
    fix_commit: String,
    #[serde(default)]
    bics: Vec<String>,
    #[serde(default)]
    dataset_tag: String,
}

impl Dataset {
    /// Parse a dataset file. The first line may be a header
    /// `{"schema": "bictrace.dataset/1", "name": ...}`. Relative repository
    /// paths are resolved against `base_dir`.
    pub fn parse(text: &str, path: &Path, base_dir: &Path) -> Result<Self, EvalError> {
        let fmt = |line: usize, message: String| EvalError::Format {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut cases = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| fmt(n, e.to_string()))?;
            if value.get("schema").is_some() {
                let h: DatasetHeader = serde_json::from_value(value).map_err(|e| fmt(n, e.to_string()))?;
                if h.schema != DATASET_SCHEMA {
                    return Err(fmt(n, format!("unsupported schema {:?}", h.schema)));
                }
                if let Some(nm) = h.name {
                    name = nm;
                }
                continue;
            }
            let r: DatasetRecord = serde_json::from_value(value).map_err(|e| fmt(n, e.to_string()))?;
            let mut ground_truth = Vec::new();
            for b in &r.bics {
                ground_truth.push(CommitId::parse(b).map_err(|e| fmt(n, e.to_string()))?);
            }
            let repo = if is_url(&r.repo) || Path::new(&r.repo).is_absolute() {
                r.repo.clone()
            } else {
                base_dir.join(&r.repo).to_string_lossy().into_owned()
            };
            let id = r.id.unwrap_or_else(|| r.fix_commit.clone());
            if !ids.insert(id.clone()) {
                return Err(EvalError::DuplicateCase(id));
            }
            cases.push(CaseSpec {
                id,
                repo,
                fix_commit: r.fix_commit,
                ground_truth,
                dataset_tag: r.dataset_tag,
            });
        }
        Ok(Dataset { name, cases })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({"schema": DATASET_SCHEMA, "name": self.name}).to_string();
        out.push('\n');
        for c in &self.cases {
            let rec = serde_json::json!({
                "id": c.id,
                "repo": c.repo,
                "fix_commit": c.fix_commit,
                "bics": c.ground_truth,
                "dataset_tag": c.dataset_tag,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }

    /// Every case must carry ground truth for evaluation.
    pub fn require_ground_truth(&self) -> Result<(), EvalError> {
        match self.cases.iter().find(|c| c.ground_truth.is_empty()) {
            Some(c) => Err(EvalError::MissingGroundTruth(c.id.clone())),
            None => Ok(()),
        }
    }
}

pub fn is_url(s: &str) -> bool {
    s.contains("://") || s.starts_with("git@")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryFlags {
    pub ghost: bool,
    pub cross_file: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub tokens: u64,
    pub turns: u32,
    pub tool_turns: u32,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dollars: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub predicted: BTreeSet<CommitId>,
    /// resolved / discarded / no_prediction for the agent; the algorithm name
    /// for baselines.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default)]
    pub category: CategoryFlags,
    #[serde(default)]
    pub cost: Cost,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<ResolutionTrace>,
    /// Infrastructure failure, if the case could not be run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsHeader {
    pub schema: String,
    pub producer: String,
    #[serde(default)]
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsFile {
    pub header: ResultsHeader,
    pub results: Vec<CaseResult>,
}

impl ResultsFile {
    pub fn new(producer: &str, dataset: &str, results: Vec<CaseResult>) -> Self {
        ResultsFile {
            header: ResultsHeader {
                schema: RESULTS_SCHEMA.into(),
                producer: producer.into(),
                dataset: dataset.into(),
            },
            results,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.results {
            out.push_str(&serde_json::to_string(r).expect("result serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, EvalError> {
        let fmt = |line: usize, message: String| EvalError::Format {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| fmt(1, "empty results file".into()))?;
        let header: ResultsHeader = serde_json::from_str(first).map_err(|e| fmt(1, e.to_string()))?;
        if header.schema != RESULTS_SCHEMA {
            return Err(fmt(1, format!("unsupported schema {:?}", header.schema)));
        }
        let mut results = Vec::new();
        for (i, line) in lines {
            results.push(serde_json::from_str(line).map_err(|e| fmt(i + 1, e.to_string()))?);
        }
        Ok(ResultsFile { header, results })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }
}

/// No deleted or modified lines anywhere in the fix.
pub fn classify_ghost(fc: &FixContext) -> bool {
    fc.deleted_or_modified_lines.values().all(|v| v.is_empty())
}

/// True when no ground-truth commit occurs in the history of any file the
/// fix touches, each file's history taken from the fix commit backwards.
pub fn classify_cross_file(
    repo: &RepoHandle,
    case: &CaseSpec,
    fc: &FixContext,
    follow_renames: bool,
) -> Result<bool, GitError> {
    let truth: BTreeSet<&str> = case.ground_truth.iter().map(CommitId::as_str).collect();
    for file in &fc.changed_files {
        let mut args = vec!["log", "--format=%H"];
        if follow_renames {
            args.push("--follow");
        }
        args.extend(["--end-of-options", fc.fix_id.as_str(), "--", file.as_str()]);
        let out = repo.run_ok(&args)?;
        if out.lines().any(|h| truth.contains(h.trim())) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub n_cases: usize,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Exact values as `numerator/denominator`.
    pub exact: [String; 3],
}

impl ScoreRow {
    fn from(n_cases: usize, counts: Counts, s: Scores) -> Self {
        let (p, r, f) = s.as_f64();
        let fmt = |x: bictrace_core::metrics::Exact| format!("{}/{}", x.numer(), x.denom());
        ScoreRow {
            n_cases,
            counts,
            precision: p,
            recall: r,
            f1: f,
            exact: [fmt(s.precision), fmt(s.recall), fmt(s.f1)],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostMeans {
    pub seconds: f64,
    pub tokens: f64,
    pub turns: f64,
    pub tool_turns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dollars: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub dataset: String,
    pub producer: String,
    pub overall: ScoreRow,
    pub ghost: ScoreRow,
    pub cross_file: ScoreRow,
    pub cost: CostMeans,
    pub failures: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn score_rows<'a>(pairs: impl Iterator<Item = (&'a BTreeSet<CommitId>, &'a BTreeSet<CommitId>)>) -> ScoreRow {
    let pairs: Vec<_> = pairs.collect();
    let n = pairs.len();
    let (counts, s) = micro(pairs);
    ScoreRow::from(n, counts, s)
}

/// Check `results` against `dataset`: no unknown ids and none missing.
pub fn check_case_ids(dataset: &Dataset, results: &[CaseResult]) -> Result<(), EvalError> {
    let known: BTreeSet<&str> = dataset.cases.iter().map(|c| c.id.as_str()).collect();
    let unknown: Vec<String> = results
        .iter()
        .filter(|r| !known.contains(r.case_id.as_str()))
        .map(|r| r.case_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownCases(unknown));
    }
    let seen: BTreeSet<&str> = results.iter().map(|r| r.case_id.as_str()).collect();
    let missing: Vec<String> = known.iter().filter(|k| !seen.contains(*k)).map(|k| k.to_string()).collect();
    if !missing.is_empty() {
        return Err(EvalError::IncompleteResults(missing));
    }
    Ok(())
}

pub fn aggregate_report(dataset: &Dataset, results: &ResultsFile) -> Result<EvalReport, EvalError> {
    dataset.require_ground_truth()?;
    check_case_ids(dataset, &results.results)?;
    let truth: BTreeMap<&str, BTreeSet<CommitId>> = dataset
        .cases
        .iter()
        .map(|c| (c.id.as_str(), c.ground_truth.iter().cloned().collect()))
        .collect();
    let rs = &results.results;
    let pairs = |filter: fn(&CaseResult) -> bool| {
        rs.iter()
            .filter(move |r| filter(r))
            .map(|r| (&r.predicted, &truth[r.case_id.as_str()]))
    };
    let dollars: Vec<f64> = rs.iter().filter_map(|r| r.cost.dollars).collect();
    Ok(EvalReport {
        schema: REPORT_SCHEMA.into(),
        dataset: dataset.name.clone(),
        producer: results.header.producer.clone(),
        overall: score_rows(pairs(|_| true)),
        ghost: score_rows(pairs(|r| r.category.ghost)),
        cross_file: score_rows(pairs(|r| r.category.cross_file)),
        cost: CostMeans {
            seconds: mean(rs.iter().map(|r| r.cost.seconds)),
            tokens: mean(rs.iter().map(|r| r.cost.tokens as f64)),
            turns: mean(rs.iter().map(|r| f64::from(r.cost.turns))),
            tool_turns: mean(rs.iter().map(|r| f64::from(r.cost.tool_turns))),
            dollars: (!dollars.is_empty()).then(|| mean(dollars.into_iter())),
        },
        failures: rs.iter().filter(|r| r.failure.is_some()).count(),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Markdown table with one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    s.push_str("| Producer | Cases | Precision | Recall | F1 | Ghost recall (n) | Cross-file recall (n) | Time (s) | Tokens | Turns | Failures |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in reports {
        let _ = writeln!(
            s,
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} ({}) | {:.3} ({}) | {:.1} | {:.0} | {:.1} | {} |",
            r.producer,
            r.overall.n_cases,
            r.overall.precision,
            r.overall.recall,
            r.overall.f1,
            r.ghost.recall,
            r.ghost.n_cases,
            r.cross_file.recall,
            r.cross_file.n_cases,
            r.cost.seconds,
            r.cost.tokens,
            r.cost.turns,
            r.failures
        );
    }
    s
}
