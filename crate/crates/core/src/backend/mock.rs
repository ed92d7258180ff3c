use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use super::{estimate_tokens, transcript_tokens, BackendError, Completion, CompletionBackend, CompletionRequest};
use crate::prompting::ChatTranscript;

/// Answer given for any (theorem, attempt) missing from the script.
pub const REFUSAL_TEXT: &str = "I am unable to produce a Rocq statement for this problem.";

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("script {path} is not a JSON object of strings: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("script key {0:?} is not of the form <theorem_id>:<attempt>")]
    BadKey(String),
}

/// One observed call, kept so tests can inspect what the model was shown.
#[derive(Debug, Clone, PartialEq)]
pub struct MockCall {
    pub model: String,
    pub theorem_id: String,
    pub attempt: u32,
    pub seed: u64,
    pub transcript: ChatTranscript,
}

/// Deterministic backend answering from a `(theorem id, attempt)` table.
#[derive(Debug, Default)]
pub struct ScriptedMock {
    script: HashMap<(String, u32), String>,
    calls: Mutex<Vec<MockCall>>,
}

impl ScriptedMock {
    pub fn new(script: impl IntoIterator<Item = ((String, u32), String)>) -> Self {
        Self {
            script: script.into_iter().collect(),
            calls: Mutex::default(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Parses `{"<theorem_id>:<attempt>": "<response>", ...}`.
    pub fn from_json_str(text: &str, path: &Path) -> Result<Self, ScriptError> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text).map_err(|source| ScriptError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let mut script = HashMap::new();
        for (key, value) in raw {
            let (id, n) = key.rsplit_once(':').ok_or_else(|| ScriptError::BadKey(key.clone()))?;
            let n: u32 = n.parse().map_err(|_| ScriptError::BadKey(key.clone()))?;
            if id.is_empty() || n == 0 {
                return Err(ScriptError::BadKey(key));
            }
            script.insert((id.to_string(), n), value);
        }
        Ok(Self::new(script))
    }

    pub fn from_json_file(path: &Path) -> Result<Self, ScriptError> {
        let text = fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text, path)
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn response_for(&self, theorem_id: &str, attempt: u32) -> &str {
        self.script
            .get(&(theorem_id.to_string(), attempt))
            .map_or(REFUSAL_TEXT, String::as_str)
    }
}

impl CompletionBackend for ScriptedMock {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        let text = self.response_for(req.theorem_id, req.attempt).to_string();
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).push(MockCall {
            model: req.model.name.clone(),
            theorem_id: req.theorem_id.to_string(),
            attempt: req.attempt,
            seed: req.seed,
            transcript: req.transcript.clone(),
        });
        Ok(Completion {
            input_tokens: transcript_tokens(req.transcript),
            output_tokens: estimate_tokens(&text),
            text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Metered, ModelSpec, UsageLedger};
    use crate::prompting::{ChatMessage, Role};

    fn transcript() -> ChatTranscript {
        ChatTranscript::from_messages(vec![ChatMessage::new(Role::User, "translate this")]).unwrap()
    }

    fn call(mock: &dyn CompletionBackend, id: &str, attempt: u32) -> Result<Completion, BackendError> {
        let model = ModelSpec::new("mock-model", "mock").with_rates(1.0, 1.0);
        let t = transcript();
        mock.complete(&CompletionRequest {
            model: &model,
            transcript: &t,
            theorem_id: id,
            attempt,
            seed: 42,
            temperature: 0.0,
        })
    }

    #[test]
    fn ordinal_keying_and_refusal() {
        let mock = ScriptedMock::new([
            (("t1".to_string(), 1), "bad".to_string()),
            (("t1".to_string(), 2), "```coq\nTheorem t1 : True.\n```".to_string()),
        ]);
        assert_eq!(call(&mock, "t1", 1).unwrap().text, "bad");
        assert_eq!(call(&mock, "t1", 2).unwrap().text, "```coq\nTheorem t1 : True.\n```");
        assert_eq!(call(&mock, "t1", 3).unwrap().text, REFUSAL_TEXT);
        assert_eq!(call(&ScriptedMock::empty(), "t9", 1).unwrap().text, REFUSAL_TEXT);
        assert_eq!(mock.call_count(), 3);
    }

    #[test]
    fn repeated_calls_are_identical() {
        let mock = ScriptedMock::new([(("a".to_string(), 1), "Theorem a : True.".to_string())]);
        assert_eq!(call(&mock, "a", 1).unwrap(), call(&mock, "a", 1).unwrap());
    }

    #[test]
    fn token_estimate_is_char_based() {
        let mock = ScriptedMock::new([(("a".to_string(), 1), "12345".to_string())]);
        let c = call(&mock, "a", 1).unwrap();
        assert_eq!(c.output_tokens, 2);
        assert_eq!(c.input_tokens, 4); // "translate this" is 14 chars
    }

    #[test]
    fn json_script_parsing() {
        let p = Path::new("s.json");
        let m = ScriptedMock::from_json_str(r#"{"a:b:2": "x", "c:1": "y"}"#, p).unwrap();
        assert_eq!(m.response_for("a:b", 2), "x");
        assert_eq!(m.response_for("c", 1), "y");
        assert!(matches!(
            ScriptedMock::from_json_str(r#"{"nokey": "x"}"#, p),
            Err(ScriptError::BadKey(_))
        ));
        assert!(ScriptedMock::from_json_str("[]", p).is_err());
    }

    #[test]
    fn metered_mock_stops_at_budget() {
        let mock = ScriptedMock::new([(("a".to_string(), 1), "x".repeat(400))]);
        // each call: 4 input + 100 output tokens at 1.0/1k = 0.104
        let ledger = UsageLedger::from_configured(0.2);
        let metered = Metered::new(&mock, &ledger);
        assert!(call(&metered, "a", 1).is_ok());
        let err = call(&metered, "a", 1).unwrap_err();
        assert!(matches!(err, BackendError::BudgetExhausted { .. }));
        // no further calls reach the backend
        assert!(call(&metered, "a", 1).is_err());
        assert_eq!(mock.call_count(), 2);
        assert_eq!(ledger.snapshot().per_model["mock-model"].calls, 1);
    }
}
