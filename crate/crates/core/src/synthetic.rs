//! Generated corpora and scripted model answers for demos, tests and benchmarks.
//!
//! Theorem `k` states `x + x = 2k`. A plan fixes, per theorem, the
//! campaign-wide attempt ordinal at which the scripted model first answers
//! with a statement the stub checker accepts (or `None` for never).

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use crate::backend::{ModelSpec, ProviderConfig};
use crate::orchestrator::{
    BackendsSection, BudgetSection, CampaignConfig, CheckerSection, CorpusSection, PromptingSection, RoundConfig,
    Stage, TemplatesSection, DEFAULT_PREAMBLE,
};

pub const MOCK_PROVIDER: &str = "mock";
pub const MOCK_MODEL: &str = "scripted";

pub fn theorem_id(k: usize) -> String {
    format!("synth_{k:03}")
}

/// Writes `n` complete theorems under `root` and returns their ids.
pub fn write_corpus(root: &Path, n: usize) -> io::Result<Vec<String>> {
    for dir in ["informal", "lean", "isabelle"] {
        fs::create_dir_all(root.join(dir))?;
    }
    let mut ids = Vec::with_capacity(n);
    for k in 1..=n {
        let id = theorem_id(k);
        let double = 2 * k;
        fs::write(
            root.join("informal").join(format!("{id}.txt")),
            format!("Let $x$ be a natural number with $x = {k}$. Show that $x + x = {double}$.\n"),
        )?;
        fs::write(
            root.join("lean").join(format!("{id}.lean")),
            format!(
                "import Mathlib\n\n-- generated\ntheorem {id} (x : ℕ) (h₀ : x = {k}) :\n    x + x = {double} := by\n  subst h₀\n  norm_num\n"
            ),
        )?;
        fs::write(
            root.join("isabelle").join(format!("{id}.thy")),
            format!(
                "theory {id}\n  imports Main\nbegin\n\ntheorem {id}:\n  fixes x :: nat\n  assumes h0 : \"x = {k}\"\n  shows \"x + x = {double}\"\n  using assms by simp\n\nend\n"
            ),
        )?;
        ids.push(id);
    }
    Ok(ids)
}

pub fn valid_statement(id: &str) -> String {
    let k: usize = id.rsplit('_').next().and_then(|s| s.parse().ok()).unwrap_or(1);
    format!("Theorem {id} : forall x : nat, x = {k}%nat -> (x + x = {})%nat.", 2 * k)
}

/// A rejected candidate; `variant` cycles through several kinds of failure.
pub fn invalid_statement(id: &str, variant: u32) -> String {
    match variant % 5 {
        0 => format!("Theorem {id} : forall x : nat, (x + x = 2 * x."),
        1 => format!("Theorem {id} : forall x : R, __TYPEMISMATCH__ x + x = 2 * x."),
        2 => format!("Theorem {id} : forall x : nat, x + x = 2 * x"),
        3 => format!("Theorem {id} : forall n : nat, __BIGSUM__ n = n."),
        _ => format!("Theorem {id} : forall x : nat, __PRIME__ x -> x > 1."),
    }
}

/// Wraps code the way a model answer would.
pub fn answer(code: &str) -> String {
    format!("Here is the statement.\n\n```coq\n{code}\n```\n")
}

/// Script entries for a plan. Ordinals before the solving one (or up to
/// `horizon` for unsolved theorems) get rejected candidates.
pub fn script_for(plan: &[(String, Option<u32>)], horizon: u32) -> BTreeMap<(String, u32), String> {
    let mut script = BTreeMap::new();
    for (id, solve_at) in plan {
        let last = solve_at.unwrap_or(horizon);
        for n in 1..=last {
            let code = if Some(n) == *solve_at {
                valid_statement(id)
            } else {
                invalid_statement(id, n - 1)
            };
            script.insert((id.clone(), n), answer(&code));
        }
    }
    script
}

/// The script as the JSON object read by the mock provider.
pub fn script_json(script: &BTreeMap<(String, u32), String>) -> String {
    let flat: BTreeMap<String, &String> = script
        .iter()
        .map(|((id, n), text)| (format!("{id}:{n}"), text))
        .collect();
    serde_json::to_string_pretty(&flat).expect("strings serialize")
}

/// Four rounds: one-shot, multi-turn (3), refined (6), refined (24).
pub fn reference_rounds() -> Vec<RoundConfig> {
    vec![
        RoundConfig::new("stage1/scripted", Stage::OneShot, MOCK_MODEL, 1),
        RoundConfig::new("stage2/scripted", Stage::MultiTurn, MOCK_MODEL, 3),
        RoundConfig::new("stage3a/scripted", Stage::Refined, MOCK_MODEL, 6),
        RoundConfig::new("stage3b/scripted", Stage::Refined, MOCK_MODEL, 24),
    ]
}

/// 20 theorems under [`reference_rounds`]: 12 solved on the first attempt,
/// 5 on the second or third multi-turn interaction, 2 inside the first
/// refined round, 1 never.
pub fn reference_plan() -> Vec<(String, Option<u32>)> {
    (1..=20)
        .map(|k| {
            let solve_at = match k {
                1..=12 => Some(1),
                13..=15 => Some(3),
                16..=17 => Some(4),
                18 => Some(8),
                19 => Some(9),
                _ => None,
            };
            (theorem_id(k), solve_at)
        })
        .collect()
}

/// Campaign config that drives the scripted mock against a checker at `address`.
pub fn mock_config(
    corpus_root: &Path,
    store: &Path,
    script: &Path,
    address: &str,
    rounds: Vec<RoundConfig>,
) -> CampaignConfig {
    let mut providers = BTreeMap::new();
    providers.insert(
        MOCK_PROVIDER.to_string(),
        ProviderConfig::Mock {
            script: script.to_path_buf(),
        },
    );
    CampaignConfig {
        corpus: CorpusSection {
            root: corpus_root.to_path_buf(),
        },
        store: store.to_path_buf(),
        rounds,
        backends: BackendsSection {
            providers,
            models: vec![ModelSpec::new(MOCK_MODEL, MOCK_PROVIDER).with_rates(0.001, 0.002)],
            retries: 0,
            backoff_ms: 0,
        },
        checker: CheckerSection {
            address: address.to_string(),
            timeout_secs: 10.0,
            preamble: DEFAULT_PREAMBLE.to_string(),
            connect_retries: 0,
        },
        templates: TemplatesSection::default(),
        prompting: PromptingSection::default(),
        budget: BudgetSection::default(),
        seed: 42,
        parallelism: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_corpus;
    use crate::verifier::judge_statement;

    #[test]
    fn generated_corpus_loads_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let ids = write_corpus(dir.path(), 5).unwrap();
        let (corpus, report) = load_corpus(dir.path()).unwrap();
        assert!(report.is_empty(), "{}", report.to_tsv());
        assert_eq!(corpus.entries.iter().map(|e| e.id.clone()).collect::<Vec<_>>(), ids);
        assert_eq!(
            corpus.entries[0].lean_statement,
            "theorem synth_001 (x : ℕ) (h₀ : x = 1) :\n    x + x = 2"
        );
        assert_eq!(
            corpus.entries[0].isabelle_statement,
            "theorem synth_001:\n  fixes x :: nat\n  assumes h0 : \"x = 1\"\n  shows \"x + x = 2\""
        );
    }

    #[test]
    fn statements_meet_the_stub_grammar() {
        for k in 1..=30 {
            let id = theorem_id(k);
            assert_eq!(judge_statement(&valid_statement(&id)), Ok(()));
            for v in 0..5 {
                assert!(judge_statement(&invalid_statement(&id, v)).is_err());
            }
        }
    }

    #[test]
    fn reference_plan_counts() {
        let plan = reference_plan();
        assert_eq!(plan.iter().filter(|(_, s)| *s == Some(1)).count(), 12);
        let script = script_for(&plan, 34);
        assert_eq!(script.len(), 12 + 3 * 3 + 2 * 4 + 8 + 9 + 34);
        assert!(script_json(&script).contains("\"synth_020:34\""));
    }
}
