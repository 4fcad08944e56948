//! Run configuration: defaults, TOML file, environment, flags.

use std::path::{Path, PathBuf};

use bictrace_core::agent::LoopConfig;
use bictrace_core::compress::CompressionConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::case_prep::DateMode;

pub const ENV_ENDPOINT: &str = "BICTRACE_ENDPOINT";
pub const ENV_API_KEY: &str = "BICTRACE_API_KEY";
pub const ENV_MODEL: &str = "BICTRACE_MODEL";
pub const ENV_MAX_TURNS: &str = "BICTRACE_MAX_TURNS";
pub const ENV_PARALLELISM: &str = "BICTRACE_PARALLELISM";
pub const ENV_RUN_DIR: &str = "BICTRACE_RUN_DIR";
pub const ENV_GIT_TIMEOUT: &str = "BICTRACE_GIT_TIMEOUT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendChoice {
    Live,
    Scripted(PathBuf),
    Replay(PathBuf),
}

impl TryFrom<String> for BackendChoice {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<BackendChoice> for String {
    fn from(b: BackendChoice) -> String {
        match b {
            BackendChoice::Live => "live".into(),
            BackendChoice::Scripted(p) => format!("scripted:{}", p.display()),
            BackendChoice::Replay(p) => format!("replay:{}", p.display()),
        }
    }
}

impl std::str::FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "live" {
            return Ok(BackendChoice::Live);
        }
        match s.split_once(':') {
            Some(("scripted", p)) if !p.is_empty() => Ok(BackendChoice::Scripted(p.into())),
            Some(("replay", p)) if !p.is_empty() => Ok(BackendChoice::Replay(p.into())),
            _ => Err(format!("backend must be live, scripted:<path> or replay:<path>, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub backend: BackendChoice,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Only for local setups; prefer the environment variable.
    pub api_key: Option<String>,
    pub request_timeout_secs: u64,
    /// Extra request fields such as temperature, sent verbatim.
    pub params: Map<String, Value>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            backend: BackendChoice::Live,
            endpoint: None,
            model: None,
            api_key: None,
            request_timeout_secs: 300,
            params: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GitSettings {
    pub timeout_secs: f64,
    pub date_mode: DateMode,
    pub follow_renames: bool,
}

impl Default for GitSettings {
    fn default() -> Self {
        GitSettings {
            timeout_secs: 30.0,
            date_mode: DateMode::Committer,
            follow_renames: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchSettings {
    pub parallelism: usize,
    pub run_dir: PathBuf,
}

impl Default for BatchSettings {
    fn default() -> Self {
        BatchSettings {
            parallelism: 1,
            run_dir: PathBuf::from("runs"),
        }
    }
}

/// US dollars per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub prompt_per_million: f64,
    pub completion_per_million: f64,
}

impl Prices {
    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        (prompt_tokens as f64 * self.prompt_per_million + completion_tokens as f64 * self.completion_per_million) / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelSettings,
    #[serde(rename = "loop")]
    pub agent: LoopConfig,
    pub compression: CompressionConfig,
    pub git: GitSettings,
    pub batch: BatchSettings,
    pub prices: Option<Prices>,
    /// Optional replacement prompt templates.
    pub system_prompt_path: Option<PathBuf>,
    pub case_prompt_path: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {name}: {value:?}")]
    Env { name: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// Values given on the command line; `None` means not given.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub backend: Option<BackendChoice>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub max_turns: Option<u32>,
    pub parallelism: Option<usize>,
    pub run_dir: Option<PathBuf>,
    pub git_timeout_secs: Option<f64>,
    pub strict: bool,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    /// Defaults, then the file, then environment, then flags.
    pub fn load(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        flags: &FlagOverrides,
    ) -> Result<Self, ConfigError> {
        let mut cfg = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml_str(&text, p)?
            }
            None => RunConfig::default(),
        };
        cfg.apply_env(env)?;
        cfg.apply_flags(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(name: &str, v: String) -> Result<T, ConfigError> {
            v.trim().parse().map_err(|_| ConfigError::Env {
                name: name.into(),
                value: v,
            })
        }
        if let Some(v) = env(ENV_ENDPOINT) {
            self.model.endpoint = Some(v);
        }
        if let Some(v) = env(ENV_MODEL) {
            self.model.model = Some(v);
        }
        if let Some(v) = env(ENV_API_KEY) {
            self.model.api_key = Some(v);
        }
        if let Some(v) = env(ENV_MAX_TURNS) {
            self.agent.max_turns = parse(ENV_MAX_TURNS, v)?;
        }
        if let Some(v) = env(ENV_PARALLELISM) {
            self.batch.parallelism = parse(ENV_PARALLELISM, v)?;
        }
        if let Some(v) = env(ENV_RUN_DIR) {
            self.batch.run_dir = PathBuf::from(v);
        }
        if let Some(v) = env(ENV_GIT_TIMEOUT) {
            self.git.timeout_secs = parse(ENV_GIT_TIMEOUT, v)?;
        }
        Ok(())
    }

    pub fn apply_flags(&mut self, f: &FlagOverrides) {
        if let Some(b) = &f.backend {
            self.model.backend = b.clone();
        }
        if let Some(v) = &f.endpoint {
            self.model.endpoint = Some(v.clone());
        }
        if let Some(v) = &f.model {
            self.model.model = Some(v.clone());
        }
        if let Some(v) = f.max_turns {
            self.agent.max_turns = v;
        }
        if let Some(v) = f.parallelism {
            self.batch.parallelism = v;
        }
        if let Some(v) = &f.run_dir {
            self.batch.run_dir = v.clone();
        }
        if let Some(v) = f.git_timeout_secs {
            self.git.timeout_secs = v;
        }
        if f.strict {
            self.agent.forced_answer = false;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.agent.max_turns < 1 {
            return Err(ConfigError::Invalid("max_turns must be at least 1".into()));
        }
        if self.batch.parallelism < 1 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        if self.git.timeout_secs.is_nan() || self.git.timeout_secs <= 0.0 {
            return Err(ConfigError::Invalid("git timeout must be positive".into()));
        }
        self.compression.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// The snapshot stored in run directories, with any API key removed.
    pub fn redacted(&self) -> RunConfig {
        let mut c = self.clone();
        c.model.api_key = None;
        c
    }
}
