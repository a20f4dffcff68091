//! Service configuration: a TOML file plus `QFB_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qfeedback::feedback::{FeedbackMode, DEFAULT_MAX_ATTEMPTS};
use qfeedback::qg::DEFAULT_QUESTIONS_PER_REFERENCE;
use qfeedback::{Error, Result, DEFAULT_TAU};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub exercises: PathBuf,
    /// Precomputed question bank; references without one fall back to the
    /// live generator.
    pub question_bank: Option<PathBuf>,
    pub interactions: PathBuf,
    /// Session snapshots are written here when set.
    pub sessions_dir: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            exercises: PathBuf::from("data/exercises.jsonl"),
            question_bank: None,
            interactions: PathBuf::from("interactions.jsonl"),
            sessions_dir: None,
            templates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub tau: f64,
    pub tau_checker: f64,
    pub max_attempts: u32,
    pub mode: FeedbackMode,
    /// Candidates generated per live question request.
    pub k: usize,
    pub max_out: usize,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            tau: DEFAULT_TAU,
            tau_checker: DEFAULT_TAU,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            mode: FeedbackMode::QuestionBased,
            k: DEFAULT_QUESTIONS_PER_REFERENCE,
            max_out: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub embedding: String,
    pub generator: String,
    pub scorers: String,
    /// Reranker weights for live generation; the mean baseline otherwise.
    pub reranker_model: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            embedding: "orthogonal".into(),
            generator: "template".into(),
            scorers: "stub".into(),
            reranker_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { bind: "127.0.0.1:8080".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub data: DataConfig,
    pub feedback: FeedbackConfig,
    pub backends: BackendConfig,
    pub server: ServerConfig,
}

/// Environment variables read by [`AppConfig::apply_env`].
pub const ENV_VARS: &[&str] = &[
    "QFB_EXERCISES",
    "QFB_QUESTION_BANK",
    "QFB_INTERACTIONS",
    "QFB_SESSIONS_DIR",
    "QFB_TEMPLATES",
    "QFB_TAU",
    "QFB_TAU_CHECKER",
    "QFB_MAX_ATTEMPTS",
    "QFB_MODE",
    "QFB_EMBEDDING",
    "QFB_GENERATOR",
    "QFB_SCORERS",
    "QFB_RERANKER_MODEL",
    "QFB_BIND",
];

fn parse<T: std::str::FromStr>(var: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{var}={value:?} is not valid")))
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// File (when given) then environment, then validation.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(p) => AppConfig::load(p)?,
            None => AppConfig::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        for &var in ENV_VARS {
            let Some(v) = get(var) else { continue };
            match var {
                "QFB_EXERCISES" => self.data.exercises = v.into(),
                "QFB_QUESTION_BANK" => self.data.question_bank = Some(v.into()),
                "QFB_INTERACTIONS" => self.data.interactions = v.into(),
                "QFB_SESSIONS_DIR" => self.data.sessions_dir = Some(v.into()),
                "QFB_TEMPLATES" => self.data.templates = Some(v.into()),
                "QFB_TAU" => self.feedback.tau = parse(var, &v)?,
                "QFB_TAU_CHECKER" => self.feedback.tau_checker = parse(var, &v)?,
                "QFB_MAX_ATTEMPTS" => self.feedback.max_attempts = parse(var, &v)?,
                "QFB_MODE" => {
                    self.feedback.mode = serde_json::from_value(serde_json::Value::String(v.clone()))
                        .map_err(|_| Error::Config(format!("{var}={v:?} is not valid")))?
                }
                "QFB_EMBEDDING" => self.backends.embedding = v,
                "QFB_GENERATOR" => self.backends.generator = v,
                "QFB_SCORERS" => self.backends.scorers = v,
                "QFB_RERANKER_MODEL" => self.backends.reranker_model = Some(v.into()),
                "QFB_BIND" => self.server.bind = v,
                _ => unreachable!("listed in ENV_VARS"),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.feedback;
        for (name, tau) in [("tau", f.tau), ("tau_checker", f.tau_checker)] {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::Config(format!("{name} {tau} outside (0, 1]")));
            }
        }
        if f.max_attempts == 0 || f.k == 0 || f.max_out == 0 {
            return Err(Error::Config("max_attempts, k and max_out must be positive".into()));
        }
        Ok(())
    }
}
