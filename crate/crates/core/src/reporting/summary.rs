//! Cumulative per-round results and the figure table.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use super::store::{RoundInfo, StoreSnapshot};
use crate::orchestrator::{AttemptVerdict, Outcome, Stage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundSummary {
    pub label: String,
    pub stage: Stage,
    pub model: String,
    pub max_interactions: u32,
    pub newly_translated: usize,
    pub cumulative_translated: usize,
    pub corpus_size: usize,
    pub attempts_spent: usize,
}

impl RoundSummary {
    pub fn cumulative_fraction(&self) -> f64 {
        if self.corpus_size == 0 {
            0.0
        } else {
            self.cumulative_translated as f64 / self.corpus_size as f64
        }
    }

    pub fn cumulative_pct(&self) -> String {
        format_percent(self.cumulative_translated, self.corpus_size)
    }

    pub fn untranslated(&self) -> usize {
        self.corpus_size - self.cumulative_translated
    }

    /// Label as plotted: rounds with feedback carry their attempt budget.
    pub fn display_label(&self) -> String {
        match self.stage {
            Stage::OneShot => self.label.clone(),
            _ => format!("{} ({})", self.label, self.max_interactions),
        }
    }
}

/// `part / whole` as a percentage with one decimal, truncated toward zero
/// so a success rate is never overstated. Computed on integers only.
pub fn format_percent(part: usize, whole: usize) -> String {
    if whole == 0 {
        return "0.0".into();
    }
    let tenths = (part as u128 * 1000) / whole as u128;
    format!("{}.{}", tenths / 10, tenths % 10)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SummaryError {
    #[error("store has no metadata; nothing to summarize")]
    NoMeta,
    #[error("inconsistent store: {0}")]
    Inconsistent(String),
}

/// One summary per round, in campaign order, from the rounds listed in the
/// store metadata.
pub fn summarize(snapshot: &StoreSnapshot, corpus_size: usize) -> Result<Vec<RoundSummary>, SummaryError> {
    let meta = snapshot.meta.as_ref().ok_or(SummaryError::NoMeta)?;
    summarize_rounds(&meta.rounds, snapshot, corpus_size)
}

pub fn summarize_rounds(
    rounds: &[RoundInfo],
    snapshot: &StoreSnapshot,
    corpus_size: usize,
) -> Result<Vec<RoundSummary>, SummaryError> {
    let mut newly: HashMap<&str, usize> = HashMap::new();
    let mut seen = HashSet::new();
    for s in &snapshot.statuses {
        if s.outcome == Outcome::Translated {
            if !seen.insert(s.theorem_id.as_str()) {
                return Err(SummaryError::Inconsistent(format!(
                    "theorem {} translated twice",
                    s.theorem_id
                )));
            }
            *newly.entry(s.round.as_str()).or_default() += 1;
        }
    }
    let mut attempts: HashMap<&str, usize> = HashMap::new();
    for r in &snapshot.records {
        *attempts.entry(r.round.as_str()).or_default() += 1;
    }
    let known: HashSet<&str> = rounds.iter().map(|r| r.label.as_str()).collect();
    if let Some(unknown) = newly.keys().chain(attempts.keys()).find(|l| !known.contains(*l)) {
        return Err(SummaryError::Inconsistent(format!("unknown round label {unknown}")));
    }
    if seen.len() > corpus_size {
        return Err(SummaryError::Inconsistent(format!(
            "{} translated theorems for a corpus of {corpus_size}",
            seen.len()
        )));
    }

    let mut cumulative = 0;
    Ok(rounds
        .iter()
        .map(|r| {
            let n = newly.get(r.label.as_str()).copied().unwrap_or(0);
            cumulative += n;
            RoundSummary {
                label: r.label.clone(),
                stage: r.stage,
                model: r.model.clone(),
                max_interactions: r.max_interactions,
                newly_translated: n,
                cumulative_translated: cumulative,
                corpus_size,
                attempts_spent: attempts.get(r.label.as_str()).copied().unwrap_or(0),
            }
        })
        .collect())
}

pub const FIGURE_HEADER: [&str; 7] = [
    "round_label",
    "stage",
    "model",
    "max_interactions",
    "newly",
    "cumulative",
    "cumulative_pct",
];

/// Comma-separated table (UTF-8, header row, LF endings) for re-plotting the
/// cumulative results.
pub fn emit_figure_data(summaries: &[RoundSummary]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(FIGURE_HEADER).expect("writing to memory");
    for s in summaries {
        w.write_record([
            s.display_label(),
            s.stage.to_string(),
            s.model.clone(),
            s.max_interactions.to_string(),
            s.newly_translated.to_string(),
            s.cumulative_translated.to_string(),
            s.cumulative_pct(),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is UTF-8")
}

/// Human-readable report.
pub fn render_report(summaries: &[RoundSummary]) -> String {
    let mut out = String::new();
    let width = summaries
        .iter()
        .map(|s| s.display_label().chars().count())
        .max()
        .unwrap_or(5)
        .max(5);
    out.push_str(&format!(
        "{:<width$}  {:>8}  {:>10}  {:>7}  {:>8}\n",
        "round", "newly", "cumulative", "pct", "attempts"
    ));
    for s in summaries {
        out.push_str(&format!(
            "{:<width$}  {:>8}  {:>10}  {:>6}%  {:>8}\n",
            s.display_label(),
            s.newly_translated,
            s.cumulative_translated,
            s.cumulative_pct(),
            s.attempts_spent
        ));
    }
    if let Some(last) = summaries.last() {
        out.push_str(&format!(
            "translated {} of {} ({}%), untranslated {} ({}%)\n",
            last.cumulative_translated,
            last.corpus_size,
            last.cumulative_pct(),
            last.untranslated(),
            format_percent(last.untranslated(), last.corpus_size)
        ));
    }
    out
}

/// Checks the structural invariants of attempt records and status events:
/// contiguous ordinals, a Valid verdict only as the last attempt, no work on
/// a theorem after the round that translated it, and one status line per
/// (theorem, round) that had attempts.
pub fn check_store_invariants(snapshot: &StoreSnapshot) -> Result<(), String> {
    let order: HashMap<&str, usize> = snapshot
        .meta
        .as_ref()
        .map(|m| {
            m.rounds
                .iter()
                .enumerate()
                .map(|(i, r)| (r.label.as_str(), i))
                .collect()
        })
        .unwrap_or_default();
    let round_index = |label: &str| {
        order
            .get(label)
            .copied()
            .ok_or_else(|| format!("unknown round {label}"))
    };

    let mut translated_in: HashMap<&str, usize> = HashMap::new();
    let mut closed: HashSet<(&str, &str)> = HashSet::new();
    for s in &snapshot.statuses {
        if !closed.insert((&s.theorem_id, &s.round)) {
            return Err(format!("two status lines for {} in {}", s.theorem_id, s.round));
        }
        if s.outcome == Outcome::Translated && translated_in.insert(&s.theorem_id, round_index(&s.round)?).is_some() {
            return Err(format!("{} translated more than once", s.theorem_id));
        }
    }

    let mut groups: BTreeMap<(&str, &str), Vec<&crate::orchestrator::AttemptRecord>> = BTreeMap::new();
    for r in &snapshot.records {
        groups.entry((&r.theorem_id, &r.round)).or_default().push(r);
    }
    for ((id, round), recs) in &groups {
        if !closed.contains(&(*id, *round)) {
            return Err(format!("attempts for {id} in {round} have no status line"));
        }
        for (i, r) in recs.iter().enumerate() {
            if r.attempt as usize != i + 1 {
                return Err(format!("{id} in {round}: ordinal {} at position {}", r.attempt, i + 1));
            }
            if r.verdict == AttemptVerdict::Valid && i + 1 != recs.len() {
                return Err(format!("{id} in {round}: attempts continue after a Valid verdict"));
            }
        }
        let ri = round_index(round)?;
        if let Some(&solved) = translated_in.get(id) {
            if ri > solved {
                return Err(format!("{id} has attempts in {round} after being translated"));
            }
        }
        if recs.iter().any(|r| r.stage == Stage::OneShot) && recs.len() > 1 {
            return Err(format!("{id} in one-shot round {round} has {} attempts", recs.len()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_formatting() {
        assert_eq!(format_percent(332, 488), "68.0");
        assert_eq!(format_percent(478, 488), "97.9");
        assert_eq!(format_percent(10, 488), "2.0");
        assert_eq!(format_percent(0, 488), "0.0");
        assert_eq!(format_percent(488, 488), "100.0");
        assert_eq!(format_percent(1, 3), "33.3");
        assert_eq!(format_percent(2, 3), "66.6");
        assert_eq!(format_percent(0, 0), "0.0");
    }

    #[test]
    fn empty_store_gives_zero_rows() {
        let rounds = vec![
            RoundInfo {
                label: "stage1/a".into(),
                stage: Stage::OneShot,
                model: "a".into(),
                max_interactions: 1,
            },
            RoundInfo {
                label: "stage2/a".into(),
                stage: Stage::MultiTurn,
                model: "a".into(),
                max_interactions: 3,
            },
        ];
        let s = summarize_rounds(&rounds, &StoreSnapshot::default(), 20).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s
            .iter()
            .all(|r| r.newly_translated == 0 && r.cumulative_translated == 0 && r.attempts_spent == 0));
        assert_eq!(s[1].display_label(), "stage2/a (3)");
    }

    #[test]
    fn figure_data_header_only_when_empty() {
        assert_eq!(
            emit_figure_data(&[]),
            "round_label,stage,model,max_interactions,newly,cumulative,cumulative_pct\n"
        );
    }
}
