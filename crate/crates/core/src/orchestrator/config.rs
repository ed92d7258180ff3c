//! Campaign configuration file (JSON).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::record::Stage;
use crate::backend::{ModelSpec, ProviderConfig};
use crate::corpus::hex_digest;
use crate::prompting::{KeywordSets, PromptTemplates, TemplateError};
use crate::reporting::RoundInfo;

pub const DEFAULT_PREAMBLE: &str = "Require Import Reals Lra Lia ZArith Znumtheory.\nOpen Scope R_scope.";
const DEFAULT_EPISODE_LENGTH: u32 = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub label: String,
    pub stage: Stage,
    /// Name of an entry in `backends.models`.
    pub model: String,
    pub max_interactions: u32,
    /// Feedback turns per conversation in refined rounds; defaults to 3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_length: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl RoundConfig {
    pub fn new(label: impl Into<String>, stage: Stage, model: impl Into<String>, max_interactions: u32) -> Self {
        Self {
            label: label.into(),
            stage,
            model: model.into(),
            max_interactions,
            episode_length: None,
            temperature: None,
        }
    }

    /// Completions per conversation before a fresh one is started.
    pub fn effective_episode_length(&self) -> u32 {
        match self.stage {
            Stage::OneShot => 1,
            Stage::MultiTurn => self.max_interactions,
            Stage::Refined => self
                .episode_length
                .unwrap_or(DEFAULT_EPISODE_LENGTH)
                .min(self.max_interactions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSection {
    pub root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendsSection {
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderConfig>,
    pub models: Vec<ModelSpec>,
    /// Retries of a transport failure before the attempt is given up.
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First backoff delay; doubled after each retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckerSection {
    pub address: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_preamble")]
    pub preamble: String,
    #[serde(default = "default_connect_retries")]
    pub connect_retries: u32,
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_preamble() -> String {
    DEFAULT_PREAMBLE.into()
}

fn default_connect_retries() -> u32 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TemplatesSection {
    /// Directory overriding the built-in prompt templates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptingSection {
    /// Failed attempts kept verbatim in a conversation; older ones are elided.
    #[serde(default = "default_history_window")]
    pub history_window: usize,
    #[serde(default)]
    pub keywords: KeywordSets,
}

impl Default for PromptingSection {
    fn default() -> Self {
        Self {
            history_window: default_history_window(),
            keywords: KeywordSets::default(),
        }
    }
}

fn default_history_window() -> usize {
    3
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetSection {
    /// Global cost ceiling; 0 means unlimited.
    #[serde(default)]
    pub ceiling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub corpus: CorpusSection,
    pub store: PathBuf,
    pub rounds: Vec<RoundConfig>,
    pub backends: BackendsSection,
    pub checker: CheckerSection,
    #[serde(default)]
    pub templates: TemplatesSection,
    #[serde(default)]
    pub prompting: PromptingSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    1
}

/// Fields that determine what a campaign produces. Budget, parallelism,
/// addresses and paths are left out so they can change between resumes.
#[derive(Serialize)]
struct Identity<'a> {
    rounds: Vec<(&'a RoundConfig, &'a ModelSpec)>,
    seed: u64,
    preamble: &'a str,
    timeout_secs: f64,
    history_window: usize,
    keywords: &'a KeywordSets,
    system: &'a str,
    user: &'a str,
    feedback: &'a str,
    guidance: Vec<&'a str>,
}

impl CampaignConfig {
    /// Reads a config file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: CampaignConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.root);
        fix(&mut self.store);
        if let Some(d) = self.templates.dir.as_mut() {
            fix(d);
        }
        for p in self.backends.providers.values_mut() {
            if let ProviderConfig::Mock { script } = p {
                fix(script);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.rounds.is_empty() {
            return bad("at least one round is required".into());
        }
        let mut labels = HashSet::new();
        for r in &self.rounds {
            if r.label.trim().is_empty() {
                return bad("round labels must be non-empty".into());
            }
            if !labels.insert(r.label.as_str()) {
                return bad(format!("duplicate round label {}", r.label));
            }
            if r.max_interactions == 0 {
                return bad(format!("round {}: max_interactions must be positive", r.label));
            }
            if r.stage == Stage::OneShot && r.max_interactions != 1 {
                return bad(format!("round {}: one-shot rounds have exactly 1 interaction", r.label));
            }
            if let Some(e) = r.episode_length {
                if e == 0 || e > r.max_interactions {
                    return bad(format!(
                        "round {}: episode_length must be in 1..={}",
                        r.label, r.max_interactions
                    ));
                }
            }
            if r.temperature.is_some_and(|t| t.is_nan() || t < 0.0) {
                return bad(format!("round {}: temperature must be >= 0", r.label));
            }
            let model = self
                .model(&r.model)
                .ok_or_else(|| ConfigError::Invalid(format!("round {}: unknown model {}", r.label, r.model)))?;
            model.validate().map_err(ConfigError::Invalid)?;
            if !self.backends.providers.contains_key(&model.provider) {
                return bad(format!("model {}: unknown provider {}", model.name, model.provider));
            }
        }
        if self.parallelism == 0 {
            return bad("parallelism must be positive".into());
        }
        if self.checker.timeout_secs.is_nan() || self.checker.timeout_secs <= 0.0 {
            return bad("checker timeout must be positive".into());
        }
        if self.prompting.history_window == 0 {
            return bad("history_window must be positive".into());
        }
        if self.budget.ceiling.is_nan() || self.budget.ceiling < 0.0 {
            return bad("budget ceiling must be >= 0".into());
        }
        Ok(())
    }

    pub fn model(&self, name: &str) -> Option<&ModelSpec> {
        self.backends.models.iter().find(|m| m.name == name)
    }

    pub fn check_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.checker.timeout_secs)
    }

    pub fn load_templates(&self) -> Result<PromptTemplates, ConfigError> {
        Ok(match &self.templates.dir {
            Some(dir) => PromptTemplates::load_dir(dir)?,
            None => PromptTemplates::default(),
        })
    }

    /// Providers referenced by at least one round.
    pub fn used_providers(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .rounds
            .iter()
            .filter_map(|r| self.model(&r.model))
            .map(|m| m.provider.as_str())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn round_infos(&self) -> Vec<RoundInfo> {
        self.rounds
            .iter()
            .map(|r| RoundInfo {
                label: r.label.clone(),
                stage: r.stage,
                model: r.model.clone(),
                max_interactions: r.max_interactions,
            })
            .collect()
    }

    /// Digest of everything that shapes the campaign's results, prompts included.
    pub fn identity_hash(&self, templates: &PromptTemplates) -> String {
        let identity = Identity {
            rounds: self
                .rounds
                .iter()
                .filter_map(|r| self.model(&r.model).map(|m| (r, m)))
                .collect(),
            seed: self.seed,
            preamble: &self.checker.preamble,
            timeout_secs: self.checker.timeout_secs,
            history_window: self.prompting.history_window,
            keywords: &self.prompting.keywords,
            system: &templates.system,
            user: &templates.user,
            feedback: &templates.feedback,
            guidance: templates.guidance.values().map(String::as_str).collect(),
        };
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&identity).expect("config serializes"));
        hex_digest(h)
    }

    /// Four one-shot rounds (GPT-4o mini, Claude 3.5 Sonnet, o1-mini, o1),
    /// two three-attempt multi-turn rounds (Claude 3.5 Sonnet, o1-mini), then
    /// refined rounds of 6 and 24 attempts with Claude 3.5 Sonnet.
    pub fn default_schedule(corpus_root: PathBuf, store: PathBuf, checker_address: String) -> Self {
        let mut providers = BTreeMap::new();
        providers.insert(
            "openai".to_string(),
            ProviderConfig::OpenaiChat {
                endpoint: "https://api.openai.com/v1/chat/completions".into(),
                api_key_env: "OPENAI_API_KEY".into(),
                timeout_secs: 300,
            },
        );
        providers.insert(
            "anthropic".to_string(),
            ProviderConfig::AnthropicMessages {
                endpoint: "https://api.anthropic.com/v1/messages".into(),
                api_key_env: "ANTHROPIC_API_KEY".into(),
                version: "2023-06-01".into(),
                timeout_secs: 300,
            },
        );
        let model = |name: &str, provider: &str, api: &str, rin: f64, rout: f64, temp: Option<f64>| ModelSpec {
            api_model: Some(api.into()),
            temperature: temp,
            ..ModelSpec::new(name, provider).with_rates(rin, rout)
        };
        let models = vec![
            model("gpt-4o-mini", "openai", "gpt-4o-mini", 0.00015, 0.0006, None),
            model(
                "claude-3.5-sonnet",
                "anthropic",
                "claude-3-5-sonnet-20241022",
                0.003,
                0.015,
                None,
            ),
            // o1-family endpoints only accept the default temperature
            model("o1-mini", "openai", "o1-mini", 0.003, 0.012, Some(1.0)),
            model("o1", "openai", "o1", 0.015, 0.06, Some(1.0)),
        ];
        let rounds = vec![
            RoundConfig::new("stage1/gpt-4o-mini", Stage::OneShot, "gpt-4o-mini", 1),
            RoundConfig::new("stage1/claude-3.5-sonnet", Stage::OneShot, "claude-3.5-sonnet", 1),
            RoundConfig::new("stage1/o1-mini", Stage::OneShot, "o1-mini", 1),
            RoundConfig::new("stage1/o1", Stage::OneShot, "o1", 1),
            RoundConfig::new("stage2/claude-3.5-sonnet", Stage::MultiTurn, "claude-3.5-sonnet", 3),
            RoundConfig::new("stage2/o1-mini", Stage::MultiTurn, "o1-mini", 3),
            RoundConfig::new("stage3a/claude-3.5-sonnet", Stage::Refined, "claude-3.5-sonnet", 6),
            RoundConfig::new("stage3b/claude-3.5-sonnet", Stage::Refined, "claude-3.5-sonnet", 24),
        ];
        Self {
            corpus: CorpusSection { root: corpus_root },
            store,
            rounds,
            backends: BackendsSection {
                providers,
                models,
                retries: default_retries(),
                backoff_ms: default_backoff_ms(),
            },
            checker: CheckerSection {
                address: checker_address,
                timeout_secs: default_timeout_secs(),
                preamble: default_preamble(),
                connect_retries: default_connect_retries(),
            },
            templates: TemplatesSection::default(),
            prompting: PromptingSection::default(),
            budget: BudgetSection::default(),
            seed: 0,
            parallelism: 4,
        }
    }
}
