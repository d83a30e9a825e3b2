//! Service configuration file.
//!
//! Canonical example:
//!
//! ```toml
//! event_log = "data/events.jsonl"
//! bind = "127.0.0.1:8700"
//! console_token = "change-me"
//!
//! [community]
//! simulator = "scenario.toml"   # or: rest = { base_url = "https://forum.example/api" }
//! sim_speed = 1.0
//!
//! [models]
//! classifier = "models/classifier.ckpt"
//! generator = "models/generator.ckpt"
//! retrieval_corpus = "data/history.jsonl"
//!
//! [pipeline]
//! seed = 7
//! responder = "neural"
//! ```
//!
//! Relative paths resolve against the directory holding the file. The
//! environment variables `SUPPORTBOT_CONSOLE_TOKEN` and `SUPPORTBOT_BIND`
//! override `console_token` and `bind`.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use supportbot_core::community::{RestConfig, SimScenario};
use supportbot_core::pipeline::PipelineConfig;
use thiserror::Error;

pub const TOKEN_ENV: &str = "SUPPORTBOT_CONSOLE_TOKEN";
pub const BIND_ENV: &str = "SUPPORTBOT_BIND";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default)]
    pub pipeline: PipelineConfig,
    pub community: CommunitySource,
    #[serde(default)]
    pub models: ModelPaths,
    pub event_log: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default)]
    pub console_token: Option<String>,
}

fn default_bind() -> String {
    "127.0.0.1:8700".into()
}

/// Exactly one of `simulator` and `rest` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunitySource {
    /// Scenario file (TOML or JSON); an empty path selects the default scenario.
    #[serde(default)]
    pub simulator: Option<PathBuf>,
    #[serde(default)]
    pub rest: Option<RestConfig>,
    /// Simulated milliseconds per wall-clock millisecond.
    #[serde(default = "default_speed")]
    pub sim_speed: f64,
}

fn default_speed() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    /// CNN checkpoint. Without one, a simulator-backed service classifies by
    /// the simulator's informational keywords.
    pub classifier: Option<PathBuf>,
    /// Seq2seq checkpoint, required when the responder is neural.
    pub generator: Option<PathBuf>,
    /// Corpus file whose first-reply pairs back the retrieval responder.
    /// Without one, a simulator-backed service draws a warm-up history.
    pub retrieval_corpus: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    /// Reads, resolves relative paths, applies environment overrides and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut config = Self::from_toml(&text, path)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        config.apply_env(|k| std::env::var(k).ok());
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.event_log);
        for p in [&mut self.community.simulator, &mut self.models.classifier, &mut self.models.generator, &mut self.models.retrieval_corpus]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(t) = lookup(TOKEN_ENV).filter(|t| !t.is_empty()) {
            self.console_token = Some(t);
        }
        if let Some(b) = lookup(BIND_ENV).filter(|b| !b.is_empty()) {
            self.bind = b;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.community.simulator, &self.community.rest) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(ConfigError::Invalid("configure exactly one of community.simulator and community.rest".into())),
        }
        if !(self.community.sim_speed.is_finite() && self.community.sim_speed > 0.0) {
            return Err(ConfigError::Invalid("community.sim_speed must be positive".into()));
        }
        if self.community.rest.is_some() && self.models.classifier.is_none() {
            return Err(ConfigError::Invalid("a REST community needs models.classifier".into()));
        }
        if self.community.rest.is_some() && self.models.retrieval_corpus.is_none() {
            return Err(ConfigError::Invalid("a REST community needs models.retrieval_corpus".into()));
        }
        if self.console_token.as_deref().is_none_or(str::is_empty) {
            return Err(ConfigError::Invalid(format!("console_token is required (or set {TOKEN_ENV})")));
        }
        self.pipeline.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Scenario from a TOML or JSON file; an empty path gives the defaults.
pub fn load_scenario(path: &Path) -> Result<SimScenario, ConfigError> {
    if path.as_os_str().is_empty() {
        return Ok(SimScenario::default());
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| ConfigError::Parse { path: path.to_path_buf(), message })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        event_log = "events.jsonl"
        console_token = "t"
        [community]
        simulator = ""
    "#;

    fn parse(text: &str) -> ServiceConfig {
        ServiceConfig::from_toml(text, Path::new("x.toml")).unwrap()
    }

    #[test]
    fn minimal_simulator_config() {
        let c = parse(BASE);
        c.validate().unwrap();
        assert_eq!(c.bind, "127.0.0.1:8700");
        assert_eq!(c.pipeline, PipelineConfig::default());
    }

    #[test]
    fn exactly_one_source() {
        let both = format!("{BASE}\nrest = {{ base_url = \"http://x\" }}");
        assert!(matches!(parse(&both).validate(), Err(ConfigError::Invalid(_))));
        let none = parse("event_log = \"e\"\nconsole_token = \"t\"\n[community]\n");
        assert!(matches!(none.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn env_overrides_token_and_bind() {
        let mut c = parse(BASE);
        c.apply_env(|k| match k {
            TOKEN_ENV => Some("from-env".into()),
            BIND_ENV => Some("0.0.0.0:9".into()),
            _ => None,
        });
        assert_eq!((c.console_token.as_deref(), c.bind.as_str()), (Some("from-env"), "0.0.0.0:9"));
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let mut c = parse(BASE);
        c.models.generator = Some("m/g.ckpt".into());
        c.resolve_paths(Path::new("/etc/bot"));
        assert_eq!(c.event_log, Path::new("/etc/bot/events.jsonl"));
        assert_eq!(c.models.generator.as_deref(), Some(Path::new("/etc/bot/m/g.ckpt")));
        assert_eq!(c.community.simulator.as_deref(), Some(Path::new("")));
    }

    #[test]
    fn unknown_keys_and_missing_token_rejected() {
        assert!(ServiceConfig::from_toml(&format!("{BASE}\nbogus = 1"), Path::new("x")).is_err());
        let mut c = parse(BASE);
        c.console_token = None;
        assert!(c.validate().is_err());
    }
}
