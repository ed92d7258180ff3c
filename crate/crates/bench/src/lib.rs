//! Inputs shared by the benchmarks.

use formalport::orchestrator::{AttemptRecord, AttemptVerdict, CampaignConfig, Outcome, StatusEvent, Timing};
use formalport::reporting::{StoreMeta, StoreSnapshot};

/// A Lean file with `hyps` hypotheses, nested `:=` and a tactic proof.
pub fn lean_source(hyps: usize) -> String {
    let mut s = String::from("import Mathlib\n\nopen Real\n\n/-- a := b by c -/\ntheorem bench_thm (f : ℕ → ℕ)\n");
    for i in 0..hyps {
        s.push_str(&format!("    (h{i} : f {i} = (let y := {i}; y + 1))\n"));
    }
    s.push_str("    : f 0 = 1 := by\n  simp_all\n");
    s
}

pub fn isabelle_source(hyps: usize) -> String {
    let mut s = String::from("theory Bench\n  imports Main\nbegin\n\ntheorem bench_thm:\n  fixes f :: \"nat ⇒ nat\"\n");
    for i in 0..hyps {
        s.push_str(&format!("  assumes h{i}: \"f {i} = {i} + 1 (* by *)\"\n"));
    }
    s.push_str("  shows \"f 0 = 1\"\n  using assms by simp\n\nend\n");
    s
}

pub fn error_messages() -> Vec<&'static str> {
    vec![
        "The term \"x\" has type \"nat\" while it is expected to have type \"R\".",
        "The reference Finset.sum was not found in the current environment.",
        "Syntax error: '.' expected after [vernac:gallina] (in [vernac_aux]).",
        "Unable to unify \"Z\" with \"nat\".",
        "In environment x : R, the term \"Rfloor x\" has type \"Z\".",
        "Cannot infer the implicit parameter A of prime.",
    ]
}

/// A finished campaign over `corpus_size` theorems under the default
/// schedule, translating `newly[i]` theorems in round `i`.
pub fn schedule_snapshot(corpus_size: usize, newly: &[usize]) -> StoreSnapshot {
    let config = CampaignConfig::default_schedule("corpus".into(), "store".into(), "127.0.0.1:1".into());
    let mut snapshot = StoreSnapshot {
        meta: Some(StoreMeta {
            format: 1,
            config_hash: String::new(),
            corpus_fingerprint: String::new(),
            corpus_root: "corpus".into(),
            corpus_size,
            rounds: config.round_infos(),
        }),
        ..StoreSnapshot::default()
    };
    let mut next = 0;
    for (round, &n) in config.rounds.iter().zip(newly) {
        for i in next..corpus_size {
            let id = format!("t{i:04}");
            let solved = i < next + n;
            snapshot.records.push(AttemptRecord {
                theorem_id: id.clone(),
                round: round.label.clone(),
                attempt: 1,
                stage: round.stage,
                model: round.model.clone(),
                candidate: format!("Theorem {id} : True."),
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
            });
            snapshot.statuses.push(StatusEvent {
                theorem_id: id.clone(),
                round: round.label.clone(),
                outcome: if solved {
                    Outcome::Translated
                } else {
                    Outcome::Untranslated
                },
                attempts: 1,
                statement: solved.then(|| format!("Theorem {id} : True.")),
                solved_at_attempt: solved.then_some(1),
                timing: Timing::now(0),
            });
        }
        next += n;
    }
    snapshot
}
