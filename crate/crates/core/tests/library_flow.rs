//! Corpus to evaluation through the library API on a small synthetic corpus.

use std::sync::Arc;

use dialogue_rl::config::RunConfig;
use dialogue_rl::corpus::{default_knowledge_pool, generate_synthetic_corpus, load_corpus, save_corpus, Corpus};
use dialogue_rl::exec::Execution;
use dialogue_rl::generation::{pretrain, pretrain_examples, GenerationModel, ModelDims, ParamGroup};
use dialogue_rl::metrics::{evaluate, ConversationView};
use dialogue_rl::reward::{CoherenceScorer, RewardModel};
use dialogue_rl::rng::{stream, Stream};
use dialogue_rl::selfplay::{conversation_tokens, simulate, train, ModelResponder, Scenario, TrainerState, Trajectory};

fn small_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.seed = 3;
    c.d = 8;
    c.turns = 4;
    c.batch = 2;
    c.baseline_samples = 2;
    c.epochs = 3;
    c.iterations = 3;
    c.lr_rl = 0.01;
    c.corpus.dialogues = 30;
    c.validate().unwrap();
    c
}

fn corpus(config: &RunConfig) -> Corpus {
    let rule = config.keyword_rule().unwrap();
    generate_synthetic_corpus(&config.synthetic_spec(), &default_knowledge_pool(), &rule).unwrap()
}

fn report(corpus: &Corpus, trajectories: &[Trajectory], config: &RunConfig) -> dialogue_rl::metrics::MetricsReport {
    let turns: Vec<_> = trajectories.iter().map(|t| conversation_tokens(t, &corpus.vocab)).collect();
    let views: Vec<_> = trajectories
        .iter()
        .zip(&turns)
        .map(|(t, turns)| ConversationView {
            personas: [&t.scenario.personas[0], &t.scenario.personas[1]],
            turns,
        })
        .collect();
    evaluate(&views, &config.keyword_rule().unwrap().stopwords).unwrap()
}

#[test]
fn corpus_survives_a_jsonl_round_trip() {
    let config = small_config();
    let original = corpus(&config);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    save_corpus(&original, &path).unwrap();
    let loaded = load_corpus(&path, &config.keyword_rule().unwrap()).unwrap();
    assert_eq!(loaded.dialogues, original.dialogues);
    assert_eq!(loaded.vocab.len(), original.vocab.len());
}

#[test]
fn pretrain_train_simulate_evaluate() {
    let config = small_config();
    let corpus = corpus(&config);
    let (train_part, heldout) = corpus.split(0.2).unwrap();
    let rule = config.keyword_rule().unwrap();

    let examples = pretrain_examples(&train_part.samples(), &corpus.vocab, &rule).unwrap();
    let dims = ModelDims {
        vocab_size: corpus.vocab.len(),
        dim: config.d,
    };
    let mut model = GenerationModel::new(dims, &mut stream(config.seed, Stream::Init));
    let curve = pretrain(&mut model, &examples, &config.pretrain_config()).unwrap();
    assert_eq!(curve.len(), config.epochs);
    assert!(curve.last().unwrap().total < curve[0].total, "{curve:?}");

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.json");
    model.save(&ckpt).unwrap();
    let reloaded = GenerationModel::load(&ckpt).unwrap();
    assert_eq!(reloaded.group_values(), model.group_values());

    let judge = RewardModel {
        scorer: CoherenceScorer::from_backbone(&model.backbone, &mut stream(config.seed, Stream::Coherence)),
        vocab: corpus.vocab.clone(),
        rule,
        overlap_threshold: config.overlap_threshold,
    };
    let responder = ModelResponder::default();
    let mut policy = model.clone();
    policy.freeze_for_reinforcement();
    let train_config = config.train_config();
    let mut state = TrainerState::new(&policy, &train_config);
    let scenarios = Scenario::from_corpus(&train_part).unwrap();
    train(&mut policy, &responder, &judge, &scenarios, &train_config, &mut state, |_, _| Ok(())).unwrap();
    assert_eq!(state.curve.len(), config.iterations);
    let (before, after) = (model.group_values(), policy.group_values());
    for (group, values) in &before {
        if *group != ParamGroup::Selector {
            assert_eq!(values, &after[group], "{group:?} moved");
        }
    }

    let heldout_scenarios: Vec<Arc<Scenario>> = Scenario::from_corpus(&heldout).unwrap();
    let run = |execution| {
        simulate(&policy, &responder, &judge, &heldout_scenarios, 5, config.turns, 0, execution).unwrap()
    };
    let trajectories = run(Execution::Sequential);
    assert_eq!(trajectories.len(), 5);
    assert!(trajectories.iter().all(|t| t.turns.len() == config.turns));

    let single = report(&corpus, &trajectories, &config);
    assert_eq!(single.n_conversations, 5);
    for v in [single.distinct_1, single.distinct_2, single.knowledge_f1] {
        assert!((0.0..=1.0).contains(&v));
    }
    let parallel = report(&corpus, &run(Execution::Parallel), &config);
    assert_eq!(parallel, single);

    let doubled: Vec<Trajectory> = trajectories.iter().chain(&trajectories).cloned().collect();
    let twice = report(&corpus, &doubled, &config);
    assert_eq!(twice.n_conversations, 10);
    assert!((twice.distinct_2 - single.distinct_2).abs() < 1e-12);
    assert!((twice.knowledge_f1 - single.knowledge_f1).abs() < 1e-12);
}
