//! Model completion backends.
//!
//! Every provider sits behind [`CompletionBackend`]. The scripted mock answers
//! from a fixed table so that whole campaigns replay deterministically, and
//! [`Metered`] charges each completion to a shared [`UsageLedger`].

mod http;
mod ledger;
mod mock;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::ChatTranscript;

pub use http::{AnthropicMessages, OpenAiChat};
pub use ledger::{LedgerSnapshot, ModelUsage, UsageLedger};
pub use mock::{MockCall, ScriptError, ScriptedMock, REFUSAL_TEXT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Key into the provider table of the campaign configuration.
    pub provider: String,
    /// Model identifier sent to the provider, when it differs from `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_model: Option<String>,
    /// Overrides the stage default when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub cost_per_1k_input: f64,
    #[serde(default)]
    pub cost_per_1k_output: f64,
}

fn default_max_output_tokens() -> u32 {
    1024
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, provider: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            provider: provider.into(),
            api_model: None,
            temperature: None,
            max_output_tokens: default_max_output_tokens(),
            cost_per_1k_input: 0.0,
            cost_per_1k_output: 0.0,
        }
    }

    pub fn with_rates(mut self, per_1k_input: f64, per_1k_output: f64) -> Self {
        self.cost_per_1k_input = per_1k_input;
        self.cost_per_1k_output = per_1k_output;
        self
    }

    pub fn api_model(&self) -> &str {
        self.api_model.as_deref().unwrap_or(&self.name)
    }

    pub fn cost_of(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        (input_tokens as f64 * self.cost_per_1k_input + output_tokens as f64 * self.cost_per_1k_output) / 1000.0
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("model name is empty".into());
        }
        if self.temperature.is_some_and(|t| t.is_nan() || t < 0.0) {
            return Err(format!("model {}: temperature must be >= 0", self.name));
        }
        if self.max_output_tokens == 0 {
            return Err(format!("model {}: max_output_tokens must be positive", self.name));
        }
        if !(self.cost_per_1k_input >= 0.0 && self.cost_per_1k_output >= 0.0) {
            return Err(format!("model {}: rates must be >= 0", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Everything a backend needs for one completion.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub model: &'a ModelSpec,
    pub transcript: &'a ChatTranscript,
    pub theorem_id: &'a str,
    /// Per-theorem attempt ordinal counted across the whole campaign, from 1.
    pub attempt: u32,
    pub seed: u64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider rejected the request: {0}")]
    Rejected(String),
    #[error("budget exhausted: spent {spent:.4} of {ceiling:.4}")]
    BudgetExhausted { spent: f64, ceiling: f64 },
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for &T {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        (**self).complete(req)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        (**self).complete(req)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<T> {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        (**self).complete(req)
    }
}

/// Refuses calls once the ledger is exhausted and records usage before
/// handing a completion back.
pub struct Metered<'a, B: ?Sized> {
    inner: &'a B,
    ledger: &'a UsageLedger,
}

impl<'a, B: CompletionBackend + ?Sized> Metered<'a, B> {
    pub fn new(inner: &'a B, ledger: &'a UsageLedger) -> Self {
        Self { inner, ledger }
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Metered<'_, B> {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        self.ledger.ensure_available()?;
        let completion = self.inner.complete(req)?;
        self.ledger.record(req.model, &completion)?;
        Ok(completion)
    }
}

/// Provider entry of the campaign configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProviderConfig {
    /// Scripted answers from a JSON object keyed `<theorem_id>:<attempt>`.
    Mock { script: PathBuf },
    /// OpenAI-compatible chat-completions endpoint.
    OpenaiChat {
        endpoint: String,
        api_key_env: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    /// Anthropic messages endpoint.
    AnthropicMessages {
        endpoint: String,
        api_key_env: String,
        #[serde(default = "default_anthropic_version")]
        version: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

fn default_timeout_secs() -> u64 {
    300
}

fn default_anthropic_version() -> String {
    "2023-06-01".into()
}

#[derive(Debug, Error)]
pub enum ProviderSetupError {
    #[error("provider {provider}: environment variable {var} is not set")]
    MissingCredential { provider: String, var: String },
    #[error("provider {provider}: {source}")]
    Script {
        provider: String,
        #[source]
        source: ScriptError,
    },
    #[error("no provider named {0}")]
    UnknownProvider(String),
}

/// Routes each request to the backend named by its model's `provider`.
#[derive(Default)]
pub struct ProviderRegistry {
    backends: BTreeMap<String, Box<dyn CompletionBackend>>,
}

impl ProviderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, backend: Box<dyn CompletionBackend>) {
        self.backends.insert(name.into(), backend);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.backends.contains_key(name)
    }

    /// Instantiates the named providers; credentials are read from the
    /// environment only for providers that are actually used.
    pub fn from_config<'a>(
        providers: &BTreeMap<String, ProviderConfig>,
        used: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, ProviderSetupError> {
        let mut reg = Self::new();
        for name in used {
            if reg.contains(name) {
                continue;
            }
            let cfg = providers
                .get(name)
                .ok_or_else(|| ProviderSetupError::UnknownProvider(name.to_string()))?;
            let key = |var: &str| {
                std::env::var(var).map_err(|_| ProviderSetupError::MissingCredential {
                    provider: name.to_string(),
                    var: var.to_string(),
                })
            };
            let backend: Box<dyn CompletionBackend> = match cfg {
                ProviderConfig::Mock { script } => Box::new(ScriptedMock::from_json_file(script).map_err(
                    |source| ProviderSetupError::Script {
                        provider: name.to_string(),
                        source,
                    },
                )?),
                ProviderConfig::OpenaiChat {
                    endpoint,
                    api_key_env,
                    timeout_secs,
                } => Box::new(OpenAiChat::new(
                    endpoint.clone(),
                    key(api_key_env)?,
                    std::time::Duration::from_secs(*timeout_secs),
                )),
                ProviderConfig::AnthropicMessages {
                    endpoint,
                    api_key_env,
                    version,
                    timeout_secs,
                } => Box::new(AnthropicMessages::new(
                    endpoint.clone(),
                    key(api_key_env)?,
                    version.clone(),
                    std::time::Duration::from_secs(*timeout_secs),
                )),
            };
            reg.insert(name, backend);
        }
        Ok(reg)
    }
}

impl CompletionBackend for ProviderRegistry {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        match self.backends.get(&req.model.provider) {
            Some(b) => b.complete(req),
            None => Err(BackendError::Rejected(format!(
                "no backend registered for provider {}",
                req.model.provider
            ))),
        }
    }
}

/// ⌈chars / 4⌉, the token estimate used when a provider reports none.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

pub fn transcript_tokens(transcript: &ChatTranscript) -> u64 {
    let chars: usize = transcript.messages().iter().map(|m| m.content.chars().count()).sum();
    (chars as u64).div_ceil(4)
}
