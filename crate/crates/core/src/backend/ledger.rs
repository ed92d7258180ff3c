use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::Serialize;

use super::{BackendError, Completion, ModelSpec};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ModelUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub calls: u64,
    pub cost_per_1k_input: f64,
    pub cost_per_1k_output: f64,
}

impl ModelUsage {
    /// Derived from integer token totals, so the result does not depend on
    /// the order in which completions were recorded.
    pub fn cost(&self) -> f64 {
        (self.input_tokens as f64 * self.cost_per_1k_input + self.output_tokens as f64 * self.cost_per_1k_output)
            / 1000.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LedgerSnapshot {
    pub per_model: BTreeMap<String, ModelUsage>,
    pub ceiling: Option<f64>,
    pub exhausted: bool,
}

impl LedgerSnapshot {
    pub fn total_cost(&self) -> f64 {
        self.per_model.values().map(ModelUsage::cost).sum()
    }

    pub fn total_input_tokens(&self) -> u64 {
        self.per_model.values().map(|u| u.input_tokens).sum()
    }

    pub fn total_output_tokens(&self) -> u64 {
        self.per_model.values().map(|u| u.output_tokens).sum()
    }
}

/// Per-model cumulative usage with an optional global cost ceiling.
/// All updates go through one mutex, so concurrent recording is linearizable.
#[derive(Debug)]
pub struct UsageLedger {
    ceiling: Option<f64>,
    state: Mutex<LedgerSnapshot>,
}

impl UsageLedger {
    pub fn unlimited() -> Self {
        Self::with_ceiling(None)
    }

    pub fn with_ceiling(ceiling: Option<f64>) -> Self {
        Self {
            ceiling,
            state: Mutex::new(LedgerSnapshot {
                ceiling,
                ..Default::default()
            }),
        }
    }

    /// A configured ceiling of 0 (or less) means unlimited.
    pub fn from_configured(ceiling: f64) -> Self {
        Self::with_ceiling((ceiling > 0.0).then_some(ceiling))
    }

    pub fn ceiling(&self) -> Option<f64> {
        self.ceiling
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LedgerSnapshot> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn check_budget(&self) -> bool {
        let s = self.lock();
        !s.exhausted && self.ceiling.is_none_or(|c| s.total_cost() < c)
    }

    pub(crate) fn ensure_available(&self) -> Result<(), BackendError> {
        let s = self.lock();
        match self.ceiling {
            Some(ceiling) if s.exhausted || s.total_cost() >= ceiling => Err(BackendError::BudgetExhausted {
                spent: s.total_cost(),
                ceiling,
            }),
            _ => Ok(()),
        }
    }

    /// Adds a completion's usage. A completion that would push the total past
    /// the ceiling is not recorded; the ledger is marked exhausted instead.
    pub fn record(&self, model: &ModelSpec, completion: &Completion) -> Result<(), BackendError> {
        let mut s = self.lock();
        if let Some(ceiling) = self.ceiling {
            let after = s.total_cost() + model.cost_of(completion.input_tokens, completion.output_tokens);
            if s.exhausted || after > ceiling {
                s.exhausted = true;
                return Err(BackendError::BudgetExhausted {
                    spent: s.total_cost(),
                    ceiling,
                });
            }
        }
        add(&mut s, model, completion.input_tokens, completion.output_tokens);
        Ok(())
    }

    /// Restores usage already spent in an earlier session, without the ceiling check.
    pub fn restore(&self, model: &ModelSpec, input_tokens: u64, output_tokens: u64) {
        add(&mut self.lock(), model, input_tokens, output_tokens);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        self.lock().clone()
    }
}

fn add(s: &mut LedgerSnapshot, model: &ModelSpec, input: u64, output: u64) {
    let u = s.per_model.entry(model.name.clone()).or_default();
    u.input_tokens += input;
    u.output_tokens += output;
    u.calls += 1;
    u.cost_per_1k_input = model.cost_per_1k_input;
    u.cost_per_1k_output = model.cost_per_1k_output;
}
