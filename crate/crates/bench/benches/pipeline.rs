use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use formalport::backend::ScriptedMock;
use formalport::corpus::{extract_isabelle_statement, extract_lean_statement, load_corpus};
use formalport::orchestrator::{run_campaign, CampaignEnv, RunOptions};
use formalport::prompting::{classify_error, extract_code, KeywordSets, PromptTemplates};
use formalport::reporting::{render_report, summarize, Store};
use formalport::synthetic::{self, answer, reference_plan, reference_rounds, valid_statement};
use formalport::verifier::{judge_statement, StubChecker, StubConfig, TcpCheckerFactory};
use formalport_bench::{error_messages, isabelle_source, lean_source, schedule_snapshot};

fn extraction(c: &mut Criterion) {
    let mut group = c.benchmark_group("extraction");
    for hyps in [2, 32] {
        let lean = lean_source(hyps);
        let isabelle = isabelle_source(hyps);
        group.bench_with_input(BenchmarkId::new("lean", hyps), &lean, |b, s| {
            b.iter(|| extract_lean_statement(black_box(s)))
        });
        group.bench_with_input(BenchmarkId::new("isabelle", hyps), &isabelle, |b, s| {
            b.iter(|| extract_isabelle_statement(black_box(s)))
        });
    }
    let reply = answer(&valid_statement("synth_001"));
    group.bench_function("answer_code", |b| b.iter(|| extract_code(black_box(&reply))));
    group.finish();
}

fn feedback(c: &mut Criterion) {
    let keywords = KeywordSets::default();
    let messages = error_messages();
    c.bench_function("classify_error", |b| {
        b.iter(|| {
            for m in &messages {
                black_box(classify_error(black_box(m), &keywords));
            }
        })
    });
    let statement = valid_statement("synth_042");
    c.bench_function("stub_grammar", |b| b.iter(|| judge_statement(black_box(&statement))));
}

fn reporting(c: &mut Criterion) {
    let snapshot = schedule_snapshot(488, &[250, 50, 20, 12, 80, 30, 26, 10]);
    c.bench_function("summarize_488", |b| {
        b.iter(|| render_report(&summarize(black_box(&snapshot), 488).unwrap()))
    });
}

fn campaign(c: &mut Criterion) {
    let stub = StubChecker::spawn("127.0.0.1:0", StubConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("corpus");
    synthetic::write_corpus(&root, 20).unwrap();
    let (corpus, _) = load_corpus(&root).unwrap();
    let rounds = reference_rounds();
    let horizon = rounds.iter().map(|r| r.max_interactions).sum();
    let mock = ScriptedMock::new(synthetic::script_for(&reference_plan(), horizon));
    let templates = PromptTemplates::default();
    let checker = TcpCheckerFactory::new(stub.address());
    let base = synthetic::mock_config(
        &root,
        dir.path(),
        &dir.path().join("unused.json"),
        &stub.address(),
        rounds,
    );

    let mut group = c.benchmark_group("scripted_campaign");
    group.sample_size(20);
    for parallelism in [1, 4] {
        let mut config = base.clone();
        config.parallelism = parallelism;
        let env = CampaignEnv {
            config: &config,
            corpus: &corpus,
            templates: &templates,
            backend: &mock,
            checker: &checker,
        };
        group.bench_function(BenchmarkId::from_parameter(parallelism), |b| {
            b.iter(|| {
                let store_dir = tempfile::tempdir().unwrap();
                let mut store = Store::open(store_dir.path()).unwrap();
                store.set_sync(false);
                run_campaign(&env, &mut store, &RunOptions::default()).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, extraction, feedback, reporting, campaign);
criterion_main!(benches);
