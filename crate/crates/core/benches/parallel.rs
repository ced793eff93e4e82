//! Sequential against parallel execution on the two hot paths: one round of
//! client training and likelihood-ratio sampling.

use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedtune::experiment::{init_lm, ExperimentConfig, TextData};
use fedtune::privacy::sample_ratios;
use fedtune::rng::seeded;
use fedtune::server::{train_round, RunConfig};
use fedtune::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn config() -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/lm_small.json");
    ExperimentConfig::load(&path).expect("bench config")
}

fn client_round(c: &mut Criterion) {
    let cfg = config();
    let data = TextData::build(cfg.text().unwrap(), cfg.seed).unwrap();
    let model = init_lm(&cfg, data.vocab.len()).unwrap();
    let task = data.task(true, false);
    let finetune = cfg.finetune().unwrap();
    let nodes: Vec<usize> = (0..finetune.aggregation.k).collect();
    let mut group = c.benchmark_group("train_round");
    group.sample_size(10);
    for (name, execution) in MODES {
        let run = RunConfig {
            client: finetune.client.clone(),
            aggregation: finetune.aggregation.clone(),
            rounds: 1,
            selection: finetune.selection.clone(),
            seed: 1,
            execution,
            evaluate_every_round: false,
            lr_schedule: Vec::new(),
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(train_round(&task, &model, &nodes, &run, 0).unwrap()))
        });
    }
    group.finish();
}

fn ratio_sampling(c: &mut Criterion) {
    let cfg = config();
    let vocab = cfg.text().unwrap().vocab_size;
    let theta = init_lm(&cfg, vocab).unwrap();
    let theta_prime = init_lm(&ExperimentConfig { seed: cfg.seed + 1, ..cfg.clone() }, vocab).unwrap();
    let mut group = c.benchmark_group("sample_ratios");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(sample_ratios(&theta, &theta_prime, 2000, 10, &mut seeded(3), exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, client_round, ratio_sampling);
criterion_main!(benches);
