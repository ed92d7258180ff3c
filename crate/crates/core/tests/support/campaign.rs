//! Scripted-campaign harness and the oracle for what a plan should produce.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use formalport::backend::ScriptedMock;
use formalport::corpus::{load_corpus, Corpus};
use formalport::orchestrator::{
    run_campaign, CampaignConfig, CampaignEnv, CampaignError, CampaignReport, RoundConfig, RunOptions,
};
use formalport::prompting::PromptTemplates;
use formalport::reporting::{canonical_lines, Store, ATTEMPTS_FILE, STATUS_FILE};
use formalport::synthetic::{mock_config, script_for, script_json, write_corpus};
use formalport::verifier::TcpCheckerFactory;

pub type Plan = Vec<(String, Option<u32>)>;

/// Per theorem and round: attempts the round should spend and whether it
/// translates the theorem. Assumes solving ordinals count attempts across
/// the whole campaign.
pub fn oracle(plan: &Plan, rounds: &[RoundConfig]) -> BTreeMap<String, Vec<(u32, bool)>> {
    let mut out = BTreeMap::new();
    for (id, solve_at) in plan {
        let mut spent = 0u32;
        let mut per_round = Vec::new();
        let mut done = false;
        for r in rounds {
            if done {
                per_round.push((0, false));
                continue;
            }
            match solve_at {
                Some(n) if *n <= spent + r.max_interactions => {
                    per_round.push((n - spent, true));
                    done = true;
                }
                _ => {
                    per_round.push((r.max_interactions, false));
                    spent += r.max_interactions;
                }
            }
        }
        out.insert(id.clone(), per_round);
    }
    out
}

pub fn oracle_newly(plan: &Plan, rounds: &[RoundConfig]) -> Vec<usize> {
    let table = oracle(plan, rounds);
    (0..rounds.len())
        .map(|i| table.values().filter(|v| v[i].1).count())
        .collect()
}

/// A corpus, a script and a config in a temp dir, driven in-process.
pub struct Harness {
    pub dir: tempfile::TempDir,
    pub corpus: Corpus,
    pub config: CampaignConfig,
    pub templates: PromptTemplates,
    pub mock: ScriptedMock,
    pub checker: TcpCheckerFactory,
    pub plan: Plan,
}

impl Harness {
    pub fn new(plan: Plan, rounds: Vec<RoundConfig>, address: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("corpus");
        write_corpus(&root, plan.len()).unwrap();
        let (corpus, report) = load_corpus(&root).unwrap();
        assert!(report.is_empty());
        let horizon: u32 = rounds.iter().map(|r| r.max_interactions).sum();
        let script = script_for(&plan, horizon);
        let script_path = dir.path().join("script.json");
        std::fs::write(&script_path, script_json(&script)).unwrap();
        let config = mock_config(&root, &dir.path().join("store"), &script_path, address, rounds);
        Self {
            mock: ScriptedMock::new(script),
            corpus,
            templates: PromptTemplates::default(),
            checker: TcpCheckerFactory::new(address),
            config,
            plan,
            dir,
        }
    }

    pub fn store_path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn run_with(
        &self,
        config: &CampaignConfig,
        store: &Path,
        opts: &RunOptions,
    ) -> Result<CampaignReport, CampaignError> {
        let env = CampaignEnv {
            config,
            corpus: &self.corpus,
            templates: &self.templates,
            backend: &self.mock,
            checker: &self.checker,
        };
        let mut store = Store::open(store).unwrap();
        store.set_sync(false);
        run_campaign(&env, &mut store, opts)
    }

    pub fn run(&self, store: &Path, opts: &RunOptions) -> CampaignReport {
        self.run_with(&self.config, store, opts).unwrap()
    }
}

/// Attempt and status lines with wall-clock fields removed.
pub fn canonical_store(dir: &Path) -> (Vec<String>, Vec<String>) {
    (
        canonical_lines(&dir.join(ATTEMPTS_FILE)).unwrap(),
        canonical_lines(&dir.join(STATUS_FILE)).unwrap(),
    )
}
