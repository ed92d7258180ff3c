use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use formalport::corpus::load_corpus;
use formalport::orchestrator::{run_configured, CampaignConfig, CampaignReport, RunOptions, DEFAULT_PREAMBLE};
use formalport::reporting::{
    audit_summary, draw_and_record_sample, emit_figure_data, read_meta, read_snapshot, record_audit_verdict,
    render_report, summarize, AuditVerdict, Store,
};
use formalport::synthetic;
use formalport::verifier::{CheckRequest, CheckerSession, FaultConfig, StubChecker, StubConfig, Verdict};

const EXIT_FATAL: u8 = 1;
const EXIT_CHECKER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "formalport",
    version,
    about = "Staged translation of theorem statements into Rocq"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus directory and print its load report.
    Ingest { root: PathBuf },
    /// Run the campaign described by a config file.
    Run(RunArgs),
    /// Continue an interrupted campaign.
    Resume(RunArgs),
    /// Per-round summaries of a store.
    Report {
        #[arg(long)]
        store: PathBuf,
        /// Also write the figure table here (`-` for stdout).
        #[arg(long)]
        figure_data: Option<String>,
    },
    /// Check one statement against a running checker.
    Check {
        /// File holding the statement (`-` for stdin).
        #[arg(long)]
        statement: String,
        /// File holding the preamble; the default imports otherwise.
        #[arg(long)]
        preamble: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        address: String,
        #[arg(long, default_value_t = 60.0)]
        timeout_secs: f64,
    },
    /// Audit a sample of accepted translations.
    Audit {
        #[command(subcommand)]
        action: AuditAction,
    },
    /// Serve the protocol-compatible stub checker.
    StubChecker {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
        /// `disconnect-every=N`, `slow-ms=N`, `proto=N` or `no-markers`; repeatable.
        #[arg(long)]
        fault: Vec<String>,
    },
    /// Write a config for the default eight-round schedule.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "minif2f")]
        corpus: PathBuf,
        #[arg(long, default_value = "store")]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8765")]
        address: String,
    },
    /// Write a synthetic corpus, mock script and config for a local dry run.
    Demo {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        address: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Stop after this many theorem-round commits.
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Subcommand)]
enum AuditAction {
    /// Draw and record a new sample.
    Sample {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Record a verdict for a sampled theorem.
    Record {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        verdict: AuditVerdict,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long)]
        resolution: Option<String>,
    },
    /// Verdict counts and discrepancy notes for the current sample.
    Summary {
        #[arg(long)]
        store: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("FORMALPORT_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Ingest { root } => ingest(&root),
        Command::Run(args) => campaign(&args, false),
        Command::Resume(args) => campaign(&args, true),
        Command::Report { store, figure_data } => report(&store, figure_data.as_deref()),
        Command::Check {
            statement,
            preamble,
            address,
            timeout_secs,
        } => check(&statement, preamble.as_deref(), &address, timeout_secs),
        Command::Audit { action } => audit(action),
        Command::StubChecker {
            listen,
            delay_ms,
            fault,
        } => stub(&listen, delay_ms, &fault),
        Command::Init {
            out,
            corpus,
            store,
            address,
        } => {
            fs::write(&out, CampaignConfig::default_schedule(corpus, store, address).to_json())
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(0)
        }
        Command::Demo { dir, address } => demo(&dir, &address),
    }
}

fn ingest(root: &Path) -> Result<u8> {
    let (corpus, report) = load_corpus(root)?;
    println!("{} theorems loaded, {} excluded", corpus.len(), report.excluded.len());
    print!("{}", report.to_tsv());
    Ok(0)
}

fn campaign(args: &RunArgs, resume: bool) -> Result<u8> {
    let config = CampaignConfig::load(&args.config)?;
    let opts = RunOptions {
        stop_after_commits: args.stop_after,
        ..RunOptions::default()
    };
    match run_configured(&config, &opts, resume) {
        Ok(report) => {
            print_campaign(&report);
            Ok(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(e.exit_code() as u8)
        }
    }
}

fn print_campaign(report: &CampaignReport) {
    print!("{}", render_report(&report.summaries));
    let ledger = &report.ledger;
    println!(
        "tokens in {} out {}, cost {:.4}",
        ledger.total_input_tokens(),
        ledger.total_output_tokens(),
        ledger.total_cost()
    );
    match &report.halt {
        None => println!("campaign complete"),
        Some(halt) => println!("campaign halted: {halt:?}; resume to continue"),
    }
}

fn report(store: &Path, figure_data: Option<&str>) -> Result<u8> {
    let meta = read_meta(store)?.ok_or_else(|| anyhow!("{} holds no campaign", store.display()))?;
    let snapshot = read_snapshot(store)?;
    let rows = summarize(&snapshot, meta.corpus_size)?;
    print!("{}", render_report(&rows));
    match figure_data {
        Some("-") => print!("{}", emit_figure_data(&rows)),
        Some(path) => fs::write(path, emit_figure_data(&rows)).with_context(|| format!("writing {path}"))?,
        None => {}
    }
    Ok(0)
}

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {path}"))
    }
}

fn check(statement: &str, preamble: Option<&Path>, address: &str, timeout_secs: f64) -> Result<u8> {
    let statement = read_input(statement)?;
    let preamble = match preamble {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => DEFAULT_PREAMBLE.to_string(),
    };
    let mut session = match CheckerSession::connect(address) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_CHECKER);
        }
    };
    let result = session.check_statement(&CheckRequest::new(
        preamble,
        statement.trim(),
        Duration::from_secs_f64(timeout_secs),
    ));
    match result.verdict {
        Verdict::Valid => println!("Valid"),
        v => println!("{v}: {}", result.message),
    }
    Ok(match result.verdict {
        Verdict::SessionError => EXIT_CHECKER,
        _ => 0,
    })
}

fn audit(action: AuditAction) -> Result<u8> {
    match action {
        AuditAction::Sample { store, n, seed } => {
            let mut store = Store::open(&store)?;
            let meta = store.meta()?.ok_or_else(|| anyhow!("store holds no campaign"))?;
            let (corpus, _) = load_corpus(&meta.corpus_root)?;
            for item in draw_and_record_sample(&mut store, &corpus, n, seed)? {
                println!("== {}", item.theorem_id);
                println!("informal:\n{}", item.informal);
                println!("lean:\n{}", item.lean_statement);
                println!("rocq:\n{}\n", item.rocq_statement);
            }
        }
        AuditAction::Record {
            store,
            id,
            verdict,
            note,
            resolution,
        } => {
            let mut store = Store::open(&store)?;
            record_audit_verdict(&mut store, &id, verdict, &note, resolution.as_deref())?;
        }
        AuditAction::Summary { store } => {
            let meta = read_meta(&store)?.ok_or_else(|| anyhow!("store holds no campaign"))?;
            let (corpus, _) = load_corpus(&meta.corpus_root)?;
            print!("{}", audit_summary(&read_snapshot(&store)?, &corpus)?.render());
        }
    }
    Ok(0)
}

fn stub(listen: &str, delay_ms: u64, faults: &[String]) -> Result<u8> {
    let mut config = StubConfig {
        delay: Duration::from_millis(delay_ms),
        faults: FaultConfig::default(),
        ..StubConfig::default()
    };
    for f in faults {
        let (key, value) = f.split_once('=').unwrap_or((f.as_str(), ""));
        let number = || value.parse::<u64>().with_context(|| format!("bad fault value in {f}"));
        match key {
            "disconnect-every" => config.faults.disconnect_every = Some(number()?),
            "slow-ms" => config.faults.slow_marker_delay = Duration::from_millis(number()?),
            "proto" => config.proto_version = u32::try_from(number()?)?,
            "no-markers" => config.faults.markers = false,
            _ => bail!("unknown fault {f}"),
        }
    }
    let stub = StubChecker::spawn(listen, config).with_context(|| format!("binding {listen}"))?;
    tracing::info!(address = %stub.address(), "stub checker listening");
    eprintln!("stub checker listening on {}", stub.address());
    stub.join();
    Ok(0)
}

fn demo(dir: &Path, address: &str) -> Result<u8> {
    let corpus = dir.join("corpus");
    synthetic::write_corpus(&corpus, 20)?;
    let rounds = synthetic::reference_rounds();
    let horizon = rounds.iter().map(|r| r.max_interactions).sum();
    let script = synthetic::script_for(&synthetic::reference_plan(), horizon);
    fs::write(dir.join("script.json"), synthetic::script_json(&script))?;
    let config = synthetic::mock_config(
        Path::new("corpus"),
        Path::new("store"),
        Path::new("script.json"),
        address,
        rounds,
    );
    fs::write(dir.join("config.json"), config.to_json())?;
    println!("wrote {}", dir.join("config.json").display());
    Ok(0)
}
