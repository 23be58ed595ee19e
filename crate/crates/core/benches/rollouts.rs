//! Sequential against thread-pool execution for self-play rollouts and one
//! policy-gradient iteration.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dialogue_rl::corpus::{default_knowledge_pool, generate_synthetic_corpus, KeywordRule, SyntheticSpec};
use dialogue_rl::exec::Execution;
use dialogue_rl::generation::{DecodeMode, GenerationModel, ModelDims};
use dialogue_rl::reward::{CoherenceScorer, RewardModel};
use dialogue_rl::rng::{stream, Stream};
use dialogue_rl::selfplay::{simulate, train, ModelResponder, Scenario, TrainConfig, TrainerState};

fn bench(c: &mut Criterion) {
    let rule = KeywordRule::default();
    let spec = SyntheticSpec {
        seed: 0,
        n_dialogues: 32,
        persona_size: 5,
        turns_per_dialogue: 9,
    };
    let corpus = generate_synthetic_corpus(&spec, &default_knowledge_pool(), &rule).unwrap();
    let dims = ModelDims {
        vocab_size: corpus.vocab.len(),
        dim: 32,
    };
    let mut model = GenerationModel::new(dims, &mut stream(0, Stream::Init));
    model.freeze_for_reinforcement();
    let judge = RewardModel {
        scorer: CoherenceScorer::new(dims.vocab_size, dims.dim, &mut stream(0, Stream::Coherence)),
        vocab: corpus.vocab.clone(),
        rule,
        overlap_threshold: 1,
    };
    let responder = ModelResponder {
        max_len: 20,
        mode: DecodeMode::Greedy,
    };
    let scenarios = Scenario::from_corpus(&corpus).unwrap();

    let modes = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];
    let mut group = c.benchmark_group("simulate_32x8");
    group.sample_size(10);
    for (name, execution) in modes {
        group.bench_with_input(BenchmarkId::from_parameter(name), &execution, |b, &execution| {
            b.iter(|| black_box(simulate(&model, &responder, &judge, &scenarios, 32, 8, 0, execution).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("train_iteration");
    group.sample_size(10);
    for (name, execution) in modes {
        let config = TrainConfig {
            iterations: 1,
            batch: 8,
            baseline_samples: 4,
            lr: 1e-3,
            turns: 8,
            seed: 0,
            execution,
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &config, |b, config| {
            b.iter(|| {
                let mut m = model.clone();
                let mut state = TrainerState::new(&m, config);
                train(&mut m, &responder, &judge, &scenarios, config, &mut state, |_, _| Ok(())).unwrap();
                black_box(m)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
