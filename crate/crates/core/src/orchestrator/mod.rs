//! Campaign execution: ordered rounds over the untranslated theorems, the
//! per-theorem attempt loop, and resumption from the store.

mod config;
mod record;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    BackendsSection, BudgetSection, CampaignConfig, CheckerSection, ConfigError, CorpusSection, PromptingSection,
    RoundConfig, TemplatesSection, DEFAULT_PREAMBLE,
};
pub use record::{AttemptRecord, AttemptVerdict, Outcome, Stage, StatusEvent, TheoremState, TheoremStatus, Timing};

use crate::backend::{
    BackendError, Completion, CompletionBackend, CompletionRequest, LedgerSnapshot, Metered, ModelSpec,
    ProviderRegistry, ProviderSetupError, UsageLedger,
};
use crate::corpus::{load_corpus, Corpus, CorpusError, TheoremSources};
use crate::prompting::{classify_error, extract_code, ChatMessage, ChatTranscript, KeywordSets, PromptTemplates, Role};
use crate::reporting::{summarize_rounds, RoundSummary, Store, StoreError, StoreMeta, StoreSnapshot, SummaryError};
use crate::verifier::{CheckRequest, CheckerFactory, SessionError, StatementChecker, TcpCheckerFactory, Verdict};

const STORE_FORMAT: u32 = 1;

/// Ids of the theorems still untranslated, in the order given (corpus order).
pub fn select_pending(statuses: &[TheoremStatus]) -> Vec<String> {
    statuses
        .iter()
        .filter(|s| !s.is_translated())
        .map(|s| s.id.clone())
        .collect()
}

/// Seed for one attempt, derived from the campaign seed and the attempt's
/// position so that reruns and resumes reproduce it.
pub fn derive_seed(campaign_seed: u64, theorem_id: &str, round_index: usize, attempt: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(campaign_seed.to_le_bytes());
    h.update(theorem_id.as_bytes());
    h.update([0]);
    h.update((round_index as u64).to_le_bytes());
    h.update(attempt.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Everything the attempt loop needs besides the theorem, the backend and the checker.
#[derive(Debug, Clone)]
pub struct RoundContext<'a> {
    pub round: &'a RoundConfig,
    pub round_index: usize,
    pub model: &'a ModelSpec,
    pub templates: &'a PromptTemplates,
    pub preamble: &'a str,
    pub check_timeout: Duration,
    pub keywords: &'a KeywordSets,
    pub history_window: usize,
    pub campaign_seed: u64,
    pub retries: u32,
    pub backoff: Duration,
}

impl<'a> RoundContext<'a> {
    pub fn new(
        config: &'a CampaignConfig,
        templates: &'a PromptTemplates,
        round_index: usize,
    ) -> Result<Self, ConfigError> {
        let round = config
            .rounds
            .get(round_index)
            .ok_or_else(|| ConfigError::Invalid(format!("no round {round_index}")))?;
        let model = config
            .model(&round.model)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown model {}", round.model)))?;
        Ok(Self {
            round,
            round_index,
            model,
            templates,
            preamble: &config.checker.preamble,
            check_timeout: config.check_timeout(),
            keywords: &config.prompting.keywords,
            history_window: config.prompting.history_window,
            campaign_seed: config.seed,
            retries: config.backends.retries,
            backoff: Duration::from_millis(config.backends.backoff_ms),
        })
    }

    /// Round setting, then model setting, then the stage default.
    pub fn temperature(&self) -> f64 {
        self.round
            .temperature
            .or(self.model.temperature)
            .unwrap_or_else(|| self.round.stage.default_temperature())
    }

    fn opening(&self, sources: &TheoremSources) -> ChatTranscript {
        match self.round.stage {
            Stage::OneShot | Stage::MultiTurn => self.templates.stage1(sources, self.preamble),
            Stage::Refined => self.templates.stage3(sources, self.preamble),
        }
    }
}

/// Attempt records of one theorem in one round, plus the closing status line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoremRound {
    pub records: Vec<AttemptRecord>,
    pub status: StatusEvent,
}

fn complete_with_retry(
    backend: &dyn CompletionBackend,
    req: &CompletionRequest<'_>,
    retries: u32,
    backoff: Duration,
) -> Result<Completion, BackendError> {
    let mut delay = backoff;
    let mut tries = 0;
    loop {
        match backend.complete(req) {
            Err(e) if e.is_retryable() && tries < retries => {
                tracing::warn!(theorem = req.theorem_id, attempt = req.attempt, "retrying after {e}");
                thread::sleep(delay);
                delay = delay.saturating_mul(2);
                tries += 1;
            }
            other => return other,
        }
    }
}

/// Runs the attempt loop for one untranslated theorem. `prior_attempts` is
/// the number of attempts already spent on it in earlier rounds; it offsets
/// the campaign-wide ordinal handed to the backend. Only an exhausted budget
/// is returned as an error; every other failure is recorded as an attempt.
pub fn run_theorem_round(
    ctx: &RoundContext<'_>,
    sources: &TheoremSources,
    prior_attempts: u32,
    backend: &dyn CompletionBackend,
    checker: &mut dyn StatementChecker,
) -> Result<TheoremRound, BackendError> {
    let round = ctx.round;
    let episode = round.effective_episode_length().max(1);
    let temperature = ctx.temperature();
    let mut records = Vec::new();
    let mut transcript = ctx.opening(sources);
    let mut in_episode = 0;
    let mut solved = None;

    for n in 1..=round.max_interactions {
        if in_episode == episode {
            transcript = ctx.opening(sources);
            in_episode = 0;
        }
        in_episode += 1;
        let ordinal = prior_attempts + n;
        let seed = derive_seed(ctx.campaign_seed, &sources.id, ctx.round_index, ordinal);
        let sent = transcript.windowed(ctx.history_window);
        let req = CompletionRequest {
            model: ctx.model,
            transcript: &sent,
            theorem_id: &sources.id,
            attempt: ordinal,
            seed,
            temperature,
        };
        let started = Instant::now();
        let mut record = AttemptRecord {
            theorem_id: sources.id.clone(),
            round: round.label.clone(),
            attempt: n,
            stage: round.stage,
            model: ctx.model.name.clone(),
            candidate: String::new(),
            verdict: AttemptVerdict::BackendError,
            message: String::new(),
            category: None,
            input_tokens: 0,
            output_tokens: 0,
            seed,
            timing: Timing::default(),
        };
        match complete_with_retry(backend, &req, ctx.retries, ctx.backoff) {
            Err(e @ BackendError::BudgetExhausted { .. }) => return Err(e),
            Err(e) => {
                record.message = e.to_string();
            }
            Ok(completion) => {
                record.input_tokens = completion.input_tokens;
                record.output_tokens = completion.output_tokens;
                transcript
                    .push(ChatMessage::new(Role::Assistant, completion.text.as_str()))
                    .expect("transcript ends with a user turn");
                match extract_code(&completion.text) {
                    Err(e) => {
                        record.verdict = AttemptVerdict::ExtractionError;
                        record.message = format!("no statement found in the answer: {e}");
                    }
                    Ok(code) => {
                        let result = checker.check(&CheckRequest::new(ctx.preamble, code.as_str(), ctx.check_timeout));
                        record.verdict = result.verdict.into();
                        record.message = result.message;
                        if result.verdict == Verdict::Invalid {
                            record.category = Some(classify_error(&record.message, ctx.keywords));
                        }
                        record.candidate = code;
                    }
                }
                if record.verdict != AttemptVerdict::Valid && n < round.max_interactions {
                    transcript = ctx
                        .templates
                        .feedback_turn(&transcript, &record.candidate, &record.message)
                        .expect("transcript ends with the model's answer");
                }
            }
        }
        record.timing = Timing::now(started.elapsed().as_millis() as u64);
        let valid = record.verdict == AttemptVerdict::Valid;
        if valid {
            solved = Some((n, record.candidate.clone()));
        }
        records.push(record);
        if valid {
            break;
        }
    }

    let status = StatusEvent {
        theorem_id: sources.id.clone(),
        round: round.label.clone(),
        outcome: if solved.is_some() {
            Outcome::Translated
        } else {
            Outcome::Untranslated
        },
        attempts: records.len() as u32,
        statement: solved.as_ref().map(|(_, s)| s.clone()),
        solved_at_attempt: solved.map(|(n, _)| n),
        timing: Timing::now(0),
    };
    Ok(TheoremRound { records, status })
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Providers(#[from] ProviderSetupError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error("store does not belong to this campaign: {0}")]
    Mismatch(String),
    #[error("store has no campaign to resume; use run")]
    NothingToResume,
    #[error("checker unreachable: {0}")]
    CheckerUnreachable(#[source] SessionError),
}

impl CampaignError {
    /// Process exit code: 3 when the checker cannot be reached, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CampaignError::CheckerUnreachable(_) => 3,
            _ => 1,
        }
    }
}

/// Why a campaign stopped before finishing its last round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Halt {
    BudgetExhausted {
        spent: f64,
        ceiling: f64,
    },
    /// `stop_after_commits` reached or the cancel flag was raised.
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub statuses: Vec<TheoremStatus>,
    pub ledger: LedgerSnapshot,
    pub summaries: Vec<RoundSummary>,
    pub halt: Option<Halt>,
    /// (theorem, round) units committed by this invocation.
    pub committed: usize,
}

impl CampaignReport {
    pub fn completed(&self) -> bool {
        self.halt.is_none()
    }

    /// 0 when finished or interrupted on request, 2 when the budget ran out.
    pub fn exit_code(&self) -> i32 {
        match self.halt {
            Some(Halt::BudgetExhausted { .. }) => 2,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after this many (theorem, round) commits, as if killed there.
    pub stop_after_commits: Option<usize>,
    /// Raised from outside to stop after the work in flight.
    pub cancel: Option<Arc<AtomicBool>>,
    /// Refuse to start a new campaign in an empty store.
    pub require_existing: bool,
}

/// Collaborators of a campaign run.
pub struct CampaignEnv<'a> {
    pub config: &'a CampaignConfig,
    pub corpus: &'a Corpus,
    pub templates: &'a PromptTemplates,
    pub backend: &'a dyn CompletionBackend,
    pub checker: &'a dyn CheckerFactory,
}

impl CampaignEnv<'_> {
    fn meta(&self) -> StoreMeta {
        StoreMeta {
            format: STORE_FORMAT,
            config_hash: self.config.identity_hash(self.templates),
            corpus_fingerprint: self.corpus.fingerprint(),
            corpus_root: self.corpus.root.clone(),
            corpus_size: self.corpus.len(),
            rounds: self.config.round_infos(),
        }
    }
}

/// Final per-theorem state, in corpus order.
pub fn theorem_statuses(corpus: &Corpus, snapshot: &StoreSnapshot) -> Vec<TheoremStatus> {
    let translated: HashMap<&str, &StatusEvent> = snapshot
        .statuses
        .iter()
        .filter(|s| s.outcome == Outcome::Translated)
        .map(|s| (s.theorem_id.as_str(), s))
        .collect();
    corpus
        .entries
        .iter()
        .map(|t| match translated.get(t.id.as_str()) {
            Some(s) => TheoremStatus {
                id: t.id.clone(),
                state: TheoremState::Translated {
                    statement: s.statement.clone().unwrap_or_default(),
                    round: s.round.clone(),
                    attempt: s.solved_at_attempt.unwrap_or(s.attempts),
                },
            },
            None => TheoremStatus::untranslated(&t.id),
        })
        .collect()
}

/// Starts or continues the campaign in `store`. Work already committed is
/// skipped; a (theorem, round) that was in flight when a previous run
/// stopped starts again from its first attempt.
pub fn run_campaign(
    env: &CampaignEnv<'_>,
    store: &mut Store,
    opts: &RunOptions,
) -> Result<CampaignReport, CampaignError> {
    let config = env.config;
    config.validate()?;
    let meta = env.meta();
    match store.meta()? {
        Some(existing) => {
            if existing.config_hash != meta.config_hash {
                return Err(CampaignError::Mismatch(
                    "configuration differs from the one the store was created with".into(),
                ));
            }
            if existing.corpus_fingerprint != meta.corpus_fingerprint {
                return Err(CampaignError::Mismatch("corpus contents have changed".into()));
            }
        }
        None if opts.require_existing => return Err(CampaignError::NothingToResume),
        None => store.write_meta(&meta)?,
    }

    let snapshot = store.snapshot()?;
    let ledger = UsageLedger::from_configured(config.budget.ceiling);
    for r in &snapshot.records {
        if let Some(model) = config.model(&r.model) {
            ledger.restore(model, r.input_tokens, r.output_tokens);
        }
    }
    let mut translated: HashSet<String> = snapshot
        .statuses
        .iter()
        .filter(|s| s.outcome == Outcome::Translated)
        .map(|s| s.theorem_id.clone())
        .collect();
    let mut closed: HashSet<(String, String)> = snapshot
        .statuses
        .iter()
        .map(|s| (s.theorem_id.clone(), s.round.clone()))
        .collect();
    let mut spent: HashMap<String, u32> = HashMap::new();
    for r in &snapshot.records {
        *spent.entry(r.theorem_id.clone()).or_default() += 1;
    }

    let metered = Metered::new(env.backend, &ledger);
    let mut pool: Vec<Box<dyn StatementChecker>> = Vec::new();
    let mut committed = 0usize;
    let mut halt = None;
    let cancelled = || opts.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst));

    'rounds: for (round_index, round) in config.rounds.iter().enumerate() {
        let pending: Vec<&TheoremSources> = env
            .corpus
            .entries
            .iter()
            .filter(|t| !translated.contains(&t.id) && !closed.contains(&(t.id.clone(), round.label.clone())))
            .collect();
        if pending.is_empty() {
            continue;
        }
        if opts.stop_after_commits.is_some_and(|n| committed >= n) || cancelled() {
            halt = Some(Halt::Interrupted);
            break;
        }
        if let Err(BackendError::BudgetExhausted { spent, ceiling }) = ledger.ensure_available() {
            halt = Some(Halt::BudgetExhausted { spent, ceiling });
            break;
        }
        let workers = config.parallelism.min(pending.len());
        while pool.len() < workers {
            pool.push(env.checker.open().map_err(CampaignError::CheckerUnreachable)?);
        }
        tracing::info!(round = %round.label, pending = pending.len(), "starting round");
        let ctx = RoundContext::new(config, env.templates, round_index)?;
        let priors: Vec<u32> = pending.iter().map(|t| spent.get(&t.id).copied().unwrap_or(0)).collect();

        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let sessions = Mutex::new(std::mem::take(&mut pool));
        let (tx, rx) = mpsc::channel::<(usize, Result<TheoremRound, BackendError>)>();
        let mut round_error: Option<CampaignError> = None;

        thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (ctx, pending, priors, next, stop, sessions, metered) =
                    (&ctx, &pending, &priors, &next, &stop, &sessions, &metered);
                scope.spawn(move || {
                    let mut session = sessions
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .pop()
                        .expect("one session per worker");
                    while !stop.load(Ordering::SeqCst) {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= pending.len() {
                            break;
                        }
                        let result = run_theorem_round(ctx, pending[i], priors[i], metered, session.as_mut());
                        if result.is_err() {
                            stop.store(true, Ordering::SeqCst);
                        }
                        if tx.send((i, result)).is_err() {
                            break;
                        }
                    }
                    sessions.lock().unwrap_or_else(|e| e.into_inner()).push(session);
                });
            }
            drop(tx);

            // Commit in corpus order so the store does not depend on scheduling.
            let mut buffer: BTreeMap<usize, Result<TheoremRound, BackendError>> = BTreeMap::new();
            let mut expected = 0;
            let mut accepting = true;
            for (i, result) in rx {
                if !accepting {
                    continue;
                }
                buffer.insert(i, result);
                while let Some(result) = buffer.remove(&expected) {
                    match result {
                        Ok(unit) => {
                            if let Err(e) = store.commit(&unit.records, &unit.status) {
                                round_error = Some(e.into());
                                accepting = false;
                                break;
                            }
                            committed += 1;
                            expected += 1;
                            if unit.status.outcome == Outcome::Translated {
                                translated.insert(unit.status.theorem_id.clone());
                            }
                            *spent.entry(unit.status.theorem_id.clone()).or_default() += unit.status.attempts;
                            closed.insert((unit.status.theorem_id, unit.status.round));
                            if opts.stop_after_commits.is_some_and(|n| committed >= n) || cancelled() {
                                halt = Some(Halt::Interrupted);
                                accepting = false;
                                break;
                            }
                        }
                        Err(BackendError::BudgetExhausted { spent, ceiling }) => {
                            halt = Some(Halt::BudgetExhausted { spent, ceiling });
                            accepting = false;
                            break;
                        }
                        Err(other) => unreachable!("only budget exhaustion escapes an attempt loop: {other}"),
                    }
                }
                if !accepting {
                    stop.store(true, Ordering::SeqCst);
                }
            }
        });
        pool = sessions.into_inner().unwrap_or_else(|e| e.into_inner());
        if let Some(e) = round_error {
            return Err(e);
        }
        if halt.is_some() {
            break 'rounds;
        }
    }

    if let Some(Halt::BudgetExhausted { .. }) = &halt {
        tracing::warn!("budget exhausted; store is resumable with a higher ceiling");
    }
    let snapshot = store.snapshot()?;
    let summaries = summarize_rounds(&meta.rounds, &snapshot, env.corpus.len())?;
    Ok(CampaignReport {
        statuses: theorem_statuses(env.corpus, &snapshot),
        ledger: ledger.snapshot(),
        summaries,
        halt,
        committed,
    })
}

/// [`run_campaign`] on a store that must already hold this campaign.
pub fn resume(env: &CampaignEnv<'_>, store: &mut Store, opts: &RunOptions) -> Result<CampaignReport, CampaignError> {
    let opts = RunOptions {
        require_existing: true,
        ..opts.clone()
    };
    run_campaign(env, store, &opts)
}

/// Loads corpus, templates, providers and checker from a config and runs
/// (or, with `resume_only`, resumes) the campaign it describes.
pub fn run_configured(
    config: &CampaignConfig,
    opts: &RunOptions,
    resume_only: bool,
) -> Result<CampaignReport, CampaignError> {
    config.validate()?;
    let (corpus, report) = load_corpus(&config.corpus.root)?;
    if !report.is_empty() {
        tracing::warn!("{} theorems excluded from the corpus", report.excluded.len());
    }
    let templates = config.load_templates()?;
    let registry = ProviderRegistry::from_config(&config.backends.providers, config.used_providers())?;
    let checker = TcpCheckerFactory {
        address: config.checker.address.clone(),
        connect_retries: config.checker.connect_retries,
    };
    let mut store = Store::open(&config.store)?;
    let env = CampaignEnv {
        config,
        corpus: &corpus,
        templates: &templates,
        backend: &registry,
        checker: &checker,
    };
    let opts = RunOptions {
        require_existing: opts.require_existing || resume_only,
        ..opts.clone()
    };
    run_campaign(&env, &mut store, &opts)
}
