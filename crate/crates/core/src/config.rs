//! File and environment configuration.
//!
//! A TOML file provides defaults; `NL2MILP_*` environment variables win
//! over it, and command-line flags win over both (applied by the caller).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::RunSettings;
use crate::llm::HttpConfig;

pub const DEFAULT_MODEL: &str = "gpt-4o";

/// Environment variables read by [`Config::apply_env`].
pub const ENV_VARS: [&str; 5] = [
    "NL2MILP_BASE_URL",
    "NL2MILP_MODEL",
    "NL2MILP_API_KEY",
    "NL2MILP_SOLVER_CMD",
    "NL2MILP_RUNNER_CMD",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    /// Chat-completions endpoint base; needed only for live and record modes.
    pub base_url: Option<String>,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            base_url: None,
            model: DEFAULT_MODEL.into(),
            api_key: None,
            temperature: 0.0,
            max_tokens: None,
            timeout_secs: 60,
            retries: 2,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub llm: LlmSettings,
    /// External LP solver command with `{lp}` and `{sol}` placeholders.
    pub solver_cmd: Option<String>,
    /// Sandbox runner command for the script target.
    pub runner_cmd: Option<String>,
    /// Directory overriding the built-in prompt templates.
    pub prompts_dir: Option<PathBuf>,
    pub run: RunSettings,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("bad config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Read `path` (if given) and apply the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            None => Config::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?;
                Config::from_toml(&text).map_err(|e| ConfigError::Parse {
                    path: p.to_path_buf(),
                    message: e.message().to_string(),
                })?
            }
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.check()?;
        Ok(cfg)
    }

    /// Override fields from `lookup` (normally the process environment).
    /// Empty values are ignored.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        if let Some(v) = get("NL2MILP_BASE_URL") {
            self.llm.base_url = Some(v);
        }
        if let Some(v) = get("NL2MILP_MODEL") {
            self.llm.model = v;
        }
        if let Some(v) = get("NL2MILP_API_KEY") {
            self.llm.api_key = Some(v);
        }
        if let Some(v) = get("NL2MILP_SOLVER_CMD") {
            self.solver_cmd = Some(v);
        }
        if let Some(v) = get("NL2MILP_RUNNER_CMD") {
            self.runner_cmd = Some(v);
        }
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(0.0..=2.0).contains(&self.llm.temperature) {
            return Err(ConfigError::Invalid(format!(
                "llm.temperature must be in [0, 2], got {}",
                self.llm.temperature
            )));
        }
        if self.llm.model.trim().is_empty() {
            return Err(ConfigError::Invalid("llm.model is empty".into()));
        }
        if self.run.limits.wall_secs == 0 {
            return Err(ConfigError::Invalid("run.limits.wall_secs must be positive".into()));
        }
        Ok(())
    }

    /// HTTP transport settings, if an endpoint is configured.
    pub fn http(&self) -> Option<HttpConfig> {
        let base_url = self.llm.base_url.clone()?;
        Some(HttpConfig {
            base_url,
            api_key: self.llm.api_key.clone(),
            timeout_secs: self.llm.timeout_secs,
            retries: self.llm.retries,
            backoff_ms: self.llm.backoff_ms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Policy;
    use crate::execution::CodeTarget;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = Config::from_toml(
            "solver_cmd = \"solve {lp} {sol}\"\n[llm]\nmodel = \"m\"\n[run]\nbudget = 5\npolicy = \"llm\"\n[run.limits]\nwall_secs = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.llm.model, "m");
        assert_eq!(cfg.llm.timeout_secs, 60);
        assert_eq!(cfg.run.budget, 5);
        assert_eq!(cfg.run.policy, Policy::Llm);
        assert_eq!(cfg.run.code_target, CodeTarget::Amdl);
        assert!(cfg.run.debug);
        assert_eq!(cfg.run.limits.wall_secs, 7);
        assert_eq!(cfg.run.limits.memory_mb, 2048);
        assert!(Config::from_toml("[run]\nbudgett = 3\n").is_err());
    }

    #[test]
    fn environment_wins() {
        let mut cfg = Config::from_toml("[llm]\nmodel = \"file\"\n").unwrap();
        cfg.apply_env(|k| match k {
            "NL2MILP_MODEL" => Some("env".into()),
            "NL2MILP_BASE_URL" => Some("http://h".into()),
            "NL2MILP_API_KEY" => Some(" ".into()),
            _ => None,
        });
        assert_eq!(cfg.llm.model, "env");
        assert_eq!(cfg.llm.api_key, None);
        assert_eq!(cfg.http().unwrap().base_url, "http://h");
    }

    #[test]
    fn rejects_bad_values() {
        let cfg = Config::from_toml("[llm]\ntemperature = 3.0\n").unwrap();
        assert!(matches!(cfg.check(), Err(ConfigError::Invalid(_))));
    }
}
