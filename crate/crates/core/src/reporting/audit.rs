//! Seeded audit samples of accepted translations and reviewer verdicts.
//!
//! Samples are drawn with ChaCha8 seeded from a `u64` (`rand_chacha`), so a
//! (store, n, seed) triple always yields the same theorems.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::store::{Store, StoreError, StoreSnapshot};
use crate::corpus::Corpus;
use crate::orchestrator::{Outcome, Timing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuditVerdict {
    Unreviewed,
    Faithful,
    Discrepant,
}

impl FromStr for AuditVerdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unreviewed" => Ok(AuditVerdict::Unreviewed),
            "faithful" => Ok(AuditVerdict::Faithful),
            "discrepant" => Ok(AuditVerdict::Discrepant),
            _ => Err(format!("unknown verdict {s:?} (faithful, discrepant, unreviewed)")),
        }
    }
}

impl fmt::Display for AuditVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditItem {
    pub theorem_id: String,
    pub informal: String,
    pub lean_statement: String,
    pub rocq_statement: String,
    pub verdict: AuditVerdict,
    pub note: String,
    pub resolution: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum AuditEvent {
    Sample {
        seed: u64,
        n: usize,
        ids: Vec<String>,
    },
    Verdict {
        theorem_id: String,
        verdict: AuditVerdict,
        note: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolution: Option<String>,
        timing: Timing,
    },
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("no audit sample has been drawn")]
    NoSample,
    #[error("theorem {0} is not in the current audit sample")]
    NotSampled(String),
    #[error("a Discrepant verdict requires a note")]
    MissingNote,
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Accepted translations in corpus (id) order.
fn translated(snapshot: &StoreSnapshot) -> Vec<(&str, &str)> {
    let mut out: Vec<(&str, &str)> = snapshot
        .statuses
        .iter()
        .filter(|s| s.outcome == Outcome::Translated)
        .map(|s| (s.theorem_id.as_str(), s.statement.as_deref().unwrap_or("")))
        .collect();
    out.sort_unstable();
    out
}

fn item(corpus: &Corpus, id: &str, rocq: &str) -> AuditItem {
    let src = corpus.get(id);
    AuditItem {
        theorem_id: id.to_string(),
        informal: src.map(|s| s.informal.clone()).unwrap_or_default(),
        lean_statement: src.map(|s| s.lean_statement.clone()).unwrap_or_default(),
        rocq_statement: rocq.to_string(),
        verdict: AuditVerdict::Unreviewed,
        note: String::new(),
        resolution: None,
    }
}

/// Draws `min(n, #translated)` translated theorems uniformly without replacement.
pub fn sample_audit(snapshot: &StoreSnapshot, corpus: &Corpus, n: usize, seed: u64) -> Vec<AuditItem> {
    let pool = translated(snapshot);
    let amount = n.min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| item(corpus, pool[i].0, pool[i].1)).collect()
}

/// Draws a sample and records it as the current one.
pub fn draw_and_record_sample(
    store: &mut Store,
    corpus: &Corpus,
    n: usize,
    seed: u64,
) -> Result<Vec<AuditItem>, AuditError> {
    let items = sample_audit(&store.snapshot()?, corpus, n, seed);
    store.append_audit(&AuditEvent::Sample {
        seed,
        n,
        ids: items.iter().map(|i| i.theorem_id.clone()).collect(),
    })?;
    Ok(items)
}

fn current_sample(snapshot: &StoreSnapshot) -> Option<(usize, &[String])> {
    snapshot.audit.iter().enumerate().rev().find_map(|(i, e)| match e {
        AuditEvent::Sample { ids, .. } => Some((i, ids.as_slice())),
        _ => None,
    })
}

pub fn record_audit_verdict(
    store: &mut Store,
    theorem_id: &str,
    verdict: AuditVerdict,
    note: &str,
    resolution: Option<&str>,
) -> Result<(), AuditError> {
    if verdict == AuditVerdict::Discrepant && note.trim().is_empty() {
        return Err(AuditError::MissingNote);
    }
    let snapshot = store.snapshot()?;
    let (_, ids) = current_sample(&snapshot).ok_or(AuditError::NoSample)?;
    if !ids.iter().any(|i| i == theorem_id) {
        return Err(AuditError::NotSampled(theorem_id.to_string()));
    }
    store.append_audit(&AuditEvent::Verdict {
        theorem_id: theorem_id.to_string(),
        verdict,
        note: note.to_string(),
        resolution: resolution.map(str::to_string),
        timing: Timing::now(0),
    })?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditSummary {
    pub items: Vec<AuditItem>,
    pub faithful: usize,
    pub discrepant: usize,
    pub unreviewed: usize,
}

impl AuditSummary {
    pub fn headline(&self) -> String {
        format!(
            "{} Faithful / {} Discrepant / {} Unreviewed",
            self.faithful, self.discrepant, self.unreviewed
        )
    }

    pub fn render(&self) -> String {
        let mut out = self.headline();
        out.push('\n');
        for i in self.items.iter().filter(|i| i.verdict == AuditVerdict::Discrepant) {
            out.push_str(&format!("- {}: {}\n", i.theorem_id, i.note));
            if let Some(r) = &i.resolution {
                out.push_str(&format!("  resolution: {r}\n"));
            }
        }
        out
    }
}

/// State of the current sample: the latest verdict per theorem wins; earlier
/// ones stay in the log.
pub fn audit_summary(snapshot: &StoreSnapshot, corpus: &Corpus) -> Result<AuditSummary, AuditError> {
    let (start, ids) = current_sample(snapshot).ok_or(AuditError::NoSample)?;
    let accepted: HashMap<&str, &str> = translated(snapshot).into_iter().collect();
    let mut items: Vec<AuditItem> = ids
        .iter()
        .map(|id| item(corpus, id, accepted.get(id.as_str()).copied().unwrap_or("")))
        .collect();
    for e in &snapshot.audit[start + 1..] {
        if let AuditEvent::Verdict {
            theorem_id,
            verdict,
            note,
            resolution,
            ..
        } = e
        {
            if let Some(it) = items.iter_mut().find(|i| &i.theorem_id == theorem_id) {
                it.verdict = *verdict;
                it.note = note.clone();
                it.resolution = resolution.clone();
            }
        }
    }
    let count = |v| items.iter().filter(|i| i.verdict == v).count();
    Ok(AuditSummary {
        faithful: count(AuditVerdict::Faithful),
        discrepant: count(AuditVerdict::Discrepant),
        unreviewed: count(AuditVerdict::Unreviewed),
        items,
    })
}
