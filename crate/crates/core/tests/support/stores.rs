//! Stores written directly, without running a campaign.

#![allow(dead_code)]

use std::path::Path;

use formalport::corpus::{Corpus, Split, TheoremSources};
use formalport::orchestrator::{AttemptRecord, AttemptVerdict, CampaignConfig, Outcome, StatusEvent, Timing};
use formalport::reporting::{Store, StoreMeta};

pub fn corpus(n: usize) -> Corpus {
    Corpus {
        entries: (1..=n)
            .map(|k| TheoremSources {
                id: format!("p{k:03}"),
                informal: format!("Problem {k}."),
                lean_statement: format!("theorem p{k:03} : {k} = {k}"),
                isabelle_statement: format!("theorem p{k:03}: \"{k} = {k}\""),
                split: Split::Unspecified,
            })
            .collect(),
        root: "synthetic".into(),
    }
}

/// Writes a store in which round `i` of `config` translates `newly[i]`
/// theorems (in corpus order) on their first attempt there; every other
/// pending theorem fails once per round.
pub fn write_store(dir: &Path, config: &CampaignConfig, corpus: &Corpus, newly: &[usize]) -> Store {
    let mut store = Store::open(dir).unwrap();
    store.set_sync(false);
    store
        .write_meta(&StoreMeta {
            format: 1,
            config_hash: "synthetic".into(),
            corpus_fingerprint: corpus.fingerprint(),
            corpus_root: corpus.root.clone(),
            corpus_size: corpus.len(),
            rounds: config.round_infos(),
        })
        .unwrap();
    let mut next = 0;
    for (round, &n) in config.rounds.iter().zip(newly) {
        for (i, t) in corpus.entries.iter().enumerate().skip(next) {
            let solved = i < next + n;
            let statement = format!("Theorem {} : True.", t.id);
            let record = AttemptRecord {
                theorem_id: t.id.clone(),
                round: round.label.clone(),
                attempt: 1,
                stage: round.stage,
                model: round.model.clone(),
                candidate: statement.clone(),
                verdict: if solved {
                    AttemptVerdict::Valid
                } else {
                    AttemptVerdict::Invalid
                },
                message: if solved { String::new() } else { "Syntax error".into() },
                category: None,
                input_tokens: 100,
                output_tokens: 20,
                seed: 0,
                timing: Timing::now(1),
            };
            let status = StatusEvent {
                theorem_id: t.id.clone(),
                round: round.label.clone(),
                outcome: if solved {
                    Outcome::Translated
                } else {
                    Outcome::Untranslated
                },
                attempts: 1,
                statement: solved.then_some(statement),
                solved_at_attempt: solved.then_some(1),
                timing: Timing::now(0),
            };
            store.commit(&[record], &status).unwrap();
        }
        next += n;
    }
    store
}

/// New translations per round of the default schedule: 332 after the four
/// one-shot rounds and 478 at the end.
pub const SCHEDULE_NEWLY: [usize; 8] = [250, 50, 20, 12, 80, 30, 26, 10];

pub fn schedule_config() -> CampaignConfig {
    CampaignConfig::default_schedule("corpus".into(), "store".into(), "127.0.0.1:1".into())
}
