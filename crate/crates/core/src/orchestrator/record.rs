use std::fmt;

use serde::{Deserialize, Serialize};

use crate::prompting::ErrorCategory;
use crate::verifier::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// One completion from the plain prompt.
    OneShot,
    /// One conversation; each retry carries earlier candidates and errors.
    MultiTurn,
    /// Guidance-carrying prompt, retried in conversations of bounded length.
    Refined,
}

impl Stage {
    pub fn default_temperature(self) -> f64 {
        match self {
            Stage::OneShot | Stage::MultiTurn => 0.0,
            Stage::Refined => 0.7,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::OneShot => "one-shot",
            Stage::MultiTurn => "multi-turn",
            Stage::Refined => "refined",
        })
    }
}

/// Outcome of one attempt (one completion plus, when possible, one check).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttemptVerdict {
    Valid,
    Invalid,
    Timeout,
    SessionError,
    /// No statement could be pulled out of the completion; nothing was checked.
    ExtractionError,
    /// The provider refused the request; nothing was checked.
    BackendError,
}

impl From<Verdict> for AttemptVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Valid => AttemptVerdict::Valid,
            Verdict::Invalid => AttemptVerdict::Invalid,
            Verdict::Timeout => AttemptVerdict::Timeout,
            Verdict::SessionError => AttemptVerdict::SessionError,
        }
    }
}

/// Wall-clock data; excluded when comparing stores across runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub at: String,
    #[serde(default)]
    pub wall_ms: u64,
}

impl Timing {
    pub fn now(wall_ms: u64) -> Self {
        Self {
            at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            wall_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub theorem_id: String,
    pub round: String,
    /// 1-based within (theorem, round).
    pub attempt: u32,
    pub stage: Stage,
    pub model: String,
    /// Empty when extraction failed.
    pub candidate: String,
    pub verdict: AttemptVerdict,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ErrorCategory>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub seed: u64,
    pub timing: Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Translated,
    Untranslated,
}

/// Closes one (theorem, round) unit of work. Written after its attempt records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusEvent {
    pub theorem_id: String,
    pub round: String,
    pub outcome: Outcome,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solved_at_attempt: Option<u32>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum TheoremState {
    Untranslated,
    Translated {
        statement: String,
        round: String,
        attempt: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremStatus {
    pub id: String,
    #[serde(flatten)]
    pub state: TheoremState,
}

impl TheoremStatus {
    pub fn untranslated(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            state: TheoremState::Untranslated,
        }
    }

    pub fn is_translated(&self) -> bool {
        matches!(self.state, TheoremState::Translated { .. })
    }
}
