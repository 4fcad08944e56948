use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bictrace::baselines::Algorithm;
use bictrace::config::{BackendChoice, FlagOverrides, RunConfig};
use bictrace::evaluation::{aggregate_report, is_url, render_table, Dataset, ResultsFile};
use bictrace::gateway::RepoHandle;
use bictrace::pipeline::{execute_compressed, format_raw};
use bictrace::runner::{
    investigate, load_templates, make_backend, new_run_id, open_repo, render_prediction, run_baseline_cases,
    run_batch, safe_name,
};
use bictrace::toolkit::{exec_tool, ToolContext};
use bictrace_core::agent::invalid_call_text;
use bictrace_core::cache::CallCache;
use bictrace_core::tools::enforce_search_bound;
use bictrace_core::transcript::Transcript;
use bictrace_core::{ToolArgs, ToolName};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bictrace", version, about = "Find the commit that introduced a bug, starting from its fix")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone, Default)]
struct ConfigFlags {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// live, scripted:<path> or replay:<path>.
    #[arg(long)]
    backend: Option<BackendChoice>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_turns: Option<u32>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Per-call git timeout in seconds.
    #[arg(long)]
    git_timeout: Option<f64>,
    /// No answer-only turn after the turn limit.
    #[arg(long)]
    strict: bool,
}

impl ConfigFlags {
    fn load(&self) -> Result<RunConfig, String> {
        let flags = FlagOverrides {
            backend: self.backend.clone(),
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            max_turns: self.max_turns,
            parallelism: self.parallelism,
            run_dir: self.run_dir.clone(),
            git_timeout_secs: self.git_timeout,
            strict: self.strict,
        };
        RunConfig::load(self.config.as_deref(), |k| std::env::var(k).ok(), &flags).map_err(|e| e.to_string())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Investigate one fixing commit.
    Investigate {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        fix: String,
        /// Case id used in file names; defaults to the fix revision.
        #[arg(long)]
        case_id: Option<String>,
        #[arg(long)]
        run_id: Option<String>,
        #[command(flatten)]
        cfg: ConfigFlags,
    },
    /// Investigate every case of a dataset.
    Batch {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
        #[command(flatten)]
        cfg: ConfigFlags,
    },
    /// Run an SZZ baseline over a dataset.
    Baseline {
        #[arg(long)]
        dataset: PathBuf,
        /// b, r or l.
        #[arg(long)]
        algorithm: Algorithm,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigFlags,
    },
    /// Score one or more results files against a dataset.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long = "results", required = true)]
        results: Vec<PathBuf>,
        /// Where report.json and report.md are written.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Re-run a recorded transcript against its repository.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        repo: PathBuf,
        #[command(flatten)]
        cfg: ConfigFlags,
    },
    /// Run one tool and print what the agent would see.
    Tool {
        #[arg(long)]
        repo: PathBuf,
        /// Use the context of this fixing commit (defaults, date bound, redaction).
        #[arg(long)]
        fix: Option<String>,
        /// Print the formatted output before extraction and the size bound.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        cfg: ConfigFlags,
        /// git_show, git_blame, git_log_s, git_log_func or git_grep.
        name: String,
        /// Arguments as a JSON object.
        #[arg(default_value = "{}")]
        args: String,
    },
    /// Clone the remote repositories of a dataset and write a local copy of it.
    FetchDatasets {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        dest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| format!("{}: {e}", d.display()))?;
    }
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cmd: Cmd) -> Result<ExitCode, String> {
    match cmd {
        Cmd::Investigate {
            repo,
            fix,
            case_id,
            run_id,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let case_id = case_id.unwrap_or_else(|| fix.clone());
            let handle = open_repo(&repo.to_string_lossy(), &cfg).map_err(|e| e.to_string())?;
            let templates = load_templates(&cfg).map_err(|e| e.to_string())?;
            let (mut backend, mut clock) = make_backend(&cfg, &case_id).map_err(|e| e.to_string())?;
            let inv = investigate(&handle, &case_id, &fix, &cfg, &templates, backend.as_mut(), clock.as_mut())
                .map_err(|e| e.to_string())?;
            let dir = cfg.batch.run_dir.join(run_id.unwrap_or_else(new_run_id));
            write_file(&dir.join("config.toml"), &cfg.redacted().to_toml())?;
            let path = dir.join("transcripts").join(format!("{}.jsonl", safe_name(&case_id)));
            write_file(&path, &inv.transcript.to_jsonl())?;
            print!("{}", render_prediction(&case_id, &inv.prediction));
            eprintln!("transcript: {}", path.display());
            Ok(match inv.prediction.failure {
                Some(_) => ExitCode::FAILURE,
                None => ExitCode::SUCCESS,
            })
        }
        Cmd::Batch { dataset, run_id, cfg } => {
            let cfg = cfg.load()?;
            let ds = Dataset::load(&dataset).map_err(|e| e.to_string())?;
            let out = run_batch(&ds, &cfg, &run_id.unwrap_or_else(new_run_id)).map_err(|e| e.to_string())?;
            for r in &out.results.results {
                let bic = r.predicted.iter().next().map(|c| c.to_string()).unwrap_or_else(|| "-".into());
                println!("{}\t{}\t{}", r.case_id, r.status, bic);
            }
            if let Some(report) = &out.report {
                print!("{}", render_table(std::slice::from_ref(report)));
            }
            eprintln!("run directory: {}", out.run_dir.display());
            Ok(if out.failures() > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Cmd::Baseline {
            dataset,
            algorithm,
            out,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let ds = Dataset::load(&dataset).map_err(|e| e.to_string())?;
            let results = run_baseline_cases(&ds, algorithm, &cfg);
            for r in results.iter().filter(|r| r.failure.is_some()) {
                eprintln!("{}: {}", r.case_id, r.failure.as_deref().unwrap_or(""));
            }
            let file = ResultsFile::new(algorithm.name(), &ds.name, results);
            write_file(&out, &file.to_jsonl())?;
            eprintln!("results: {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Evaluate {
            dataset,
            results,
            out_dir,
        } => {
            let ds = Dataset::load(&dataset).map_err(|e| e.to_string())?;
            let mut reports = Vec::new();
            let mut failures = 0;
            for p in &results {
                let file = ResultsFile::load(p).map_err(|e| e.to_string())?;
                let report = aggregate_report(&ds, &file).map_err(|e| format!("{}: {e}", p.display()))?;
                failures += report.failures;
                reports.push(report);
            }
            let table = render_table(&reports);
            print!("{table}");
            if let Some(dir) = out_dir {
                let json = if reports.len() == 1 {
                    reports[0].to_json()
                } else {
                    serde_json::to_string_pretty(&reports).map_err(|e| e.to_string())?
                };
                write_file(&dir.join("report.json"), &json)?;
                write_file(&dir.join("report.md"), &table)?;
                eprintln!("report: {}", dir.join("report.json").display());
            }
            Ok(if failures > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Cmd::Replay { transcript, repo, cfg } => {
            let mut flags = cfg;
            flags.backend = Some(BackendChoice::Replay(transcript.clone()));
            let cfg = flags.load()?;
            let text = std::fs::read_to_string(&transcript).map_err(|e| format!("{}: {e}", transcript.display()))?;
            let recorded = Transcript::from_jsonl(&text).map_err(|e| e.to_string())?;
            let handle = open_repo(&repo.to_string_lossy(), &cfg).map_err(|e| e.to_string())?;
            let templates = load_templates(&cfg).map_err(|e| e.to_string())?;
            let (mut backend, mut clock) = make_backend(&cfg, &recorded.case_id).map_err(|e| e.to_string())?;
            let inv = investigate(
                &handle,
                &recorded.case_id,
                &recorded.fix_commit,
                &cfg,
                &templates,
                backend.as_mut(),
                clock.as_mut(),
            )
            .map_err(|e| e.to_string())?;
            print!("{}", render_prediction(&recorded.case_id, &inv.prediction));
            if inv.prediction != recorded.prediction {
                eprintln!("warning: replayed prediction differs from the recording");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Tool {
            repo,
            fix,
            raw,
            cfg,
            name,
            args,
        } => {
            let cfg = cfg.load()?;
            let handle = open_repo(&repo.to_string_lossy(), &cfg).map_err(|e| e.to_string())?;
            tool_command(&handle, &cfg, fix.as_deref(), raw, &name, &args)
        }
        Cmd::FetchDatasets { dataset, dest, out } => fetch(&dataset, &dest, &out),
    }
}

fn tool_command(
    repo: &RepoHandle,
    cfg: &RunConfig,
    fix: Option<&str>,
    raw: bool,
    name: &str,
    args: &str,
) -> Result<ExitCode, String> {
    let tool: ToolName = name.parse().map_err(|_| format!("unknown tool {name:?}"))?;
    let value: serde_json::Value = serde_json::from_str(args).map_err(|e| format!("arguments are not JSON: {e}"))?;
    let parsed = match ToolArgs::from_json(tool, &value) {
        Ok(a) => a,
        Err(e) => {
            println!("{}", invalid_call_text(tool, &e));
            return Ok(ExitCode::FAILURE);
        }
    };
    let (mut ctx, fix_date, fix_id) = match fix {
        Some(f) => {
            let fc = bictrace::case_prep::load_fix_context(repo, f, cfg.git.date_mode).map_err(|e| e.to_string())?;
            (ToolContext::new(repo.clone(), &fc.fix_parent), fc.fix_date, Some(fc.fix_id))
        }
        None => (ToolContext::at_head(repo.clone()), i64::MAX, None),
    };
    ctx.follow_renames = cfg.git.follow_renames;
    if raw {
        let bounded = enforce_search_bound(parsed, fix_date);
        match exec_tool(&ctx, &bounded) {
            Ok(text) => print!("{}", format_raw(&ctx, &bounded, &text, &cfg.compression).render()),
            Err(e) => println!("{}", bictrace::pipeline::error_text(tool, &e)),
        }
    } else {
        let mut cache = CallCache::new();
        let obs = execute_compressed(&ctx, &parsed, fix_date, &mut cache, &cfg.compression, fix_id.as_ref());
        println!("{}", obs.text);
    }
    Ok(ExitCode::SUCCESS)
}

fn fetch(dataset: &Path, dest: &Path, out: &Path) -> Result<ExitCode, String> {
    let mut ds = Dataset::load(dataset).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(dest).map_err(|e| format!("{}: {e}", dest.display()))?;
    let dest = dest.canonicalize().map_err(|e| e.to_string())?;
    let mut failed = false;
    for case in &mut ds.cases {
        if !is_url(&case.repo) {
            continue;
        }
        let name = case.repo.trim_end_matches('/').trim_end_matches(".git");
        let name = safe_name(name.rsplit(['/', ':']).next().unwrap_or("repo"));
        let target = dest.join(&name);
        if !target.exists() {
            eprintln!("cloning {} into {}", case.repo, target.display());
            let status = std::process::Command::new("git")
                .args(["clone", "--quiet", "--no-checkout", "--", &case.repo])
                .arg(&target)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                eprintln!("clone of {} failed", case.repo);
                failed = true;
                continue;
            }
        }
        case.repo = target.to_string_lossy().into_owned();
    }
    write_file(out, &ds.to_jsonl())?;
    eprintln!("dataset: {}", out.display());
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}
