//! Pipeline stages behind the `dialogue-rl` command.
//!
//! Every stage reads its inputs from the paths in a [`RunConfig`], writes its
//! artifacts next to them and records the resolved config in
//! `run-manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dialogue_rl::config::RunConfig;
use dialogue_rl::corpus::{
    default_knowledge_pool, generate_synthetic_corpus, load_corpus, save_corpus, Corpus, KeywordRule,
};
use dialogue_rl::generation::{pretrain_examples, pretrain, DecodeMode, EpochLoss, GenerationModel, ModelDims};
use dialogue_rl::metrics::{evaluate, ConversationView, MetricsReport};
use dialogue_rl::reward::{train_coherence, CoherenceReport, CoherenceScorer, RewardModel};
use dialogue_rl::rng::{stream, Stream};
use dialogue_rl::selfplay::{
    conversation_tokens, curve_csv, simulate, train, usage_matrix_csv, CurveRow, ModelResponder, Scenario,
    SimulationRecord, TrainerState, Trajectory,
};

pub const MANIFEST: &str = "run-manifest.json";
pub const CURVES: &str = "curves.csv";
pub const SIMULATIONS: &str = "simulations.jsonl";
pub const USAGE_MATRIX: &str = "usage-matrix.csv";
pub const REPORT: &str = "report.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
}

/// Records `config` under `stage` in the output directory's manifest,
/// keeping the entries of other stages.
pub fn record_manifest(config: &RunConfig, stage: &str, inputs: BTreeMap<String, String>) -> Result<()> {
    let path = config.paths.output.join(MANIFEST);
    let mut entries: BTreeMap<String, ManifestEntry> = if path.exists() {
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        BTreeMap::new()
    };
    entries.insert(
        stage.to_string(),
        ManifestEntry {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            inputs,
        },
    );
    write(&path, serde_json::to_string_pretty(&entries)?)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} not found: {}", path.display());
    }
    Ok(())
}

fn output_dirs(config: &RunConfig) -> Result<()> {
    for dir in [&config.paths.output, &config.paths.checkpoints] {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub fn keyword_rule(config: &RunConfig) -> Result<KeywordRule> {
    config.keyword_rule().context("loading the stop-word list")
}

pub fn read_corpus(config: &RunConfig) -> Result<Corpus> {
    let path = config.corpus_path();
    require(&path, "corpus")?;
    load_corpus(&path, &keyword_rule(config)?).with_context(|| format!("loading corpus {}", path.display()))
}

/// Training and held-out dialogues.
pub fn split_corpus(config: &RunConfig, corpus: &Corpus) -> Result<(Corpus, Corpus)> {
    Ok(corpus.split(config.heldout)?)
}

pub fn load_model(path: &Path) -> Result<GenerationModel> {
    require(path, "checkpoint")?;
    GenerationModel::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn load_scorer(path: &Path) -> Result<CoherenceScorer> {
    require(path, "coherence checkpoint")?;
    CoherenceScorer::load(path).with_context(|| format!("loading coherence checkpoint {}", path.display()))
}

pub fn gen_corpus(config: &RunConfig) -> Result<Corpus> {
    output_dirs(config)?;
    let corpus = generate_synthetic_corpus(&config.synthetic_spec(), &default_knowledge_pool(), &keyword_rule(config)?)?;
    let path = config.corpus_path();
    save_corpus(&corpus, &path).with_context(|| format!("writing {}", path.display()))?;
    record_manifest(config, "gen-corpus", BTreeMap::new())?;
    Ok(corpus)
}

pub fn pretrain_stage(config: &RunConfig) -> Result<Vec<EpochLoss>> {
    output_dirs(config)?;
    let corpus = read_corpus(config)?;
    let (train_part, _) = split_corpus(config, &corpus)?;
    let examples = pretrain_examples(&train_part.samples(), &corpus.vocab, &keyword_rule(config)?)?;
    let dims = ModelDims {
        vocab_size: corpus.vocab.len(),
        dim: config.d,
    };
    let mut model = GenerationModel::new(dims, &mut stream(config.seed, Stream::Init));
    let curve = pretrain(&mut model, &examples, &config.pretrain_config())?;
    let path = config.pretrained_checkpoint();
    model.save(&path).with_context(|| format!("writing {}", path.display()))?;
    let mut csv = String::from("epoch,nll,bag_of_words,total\n");
    for row in &curve {
        csv.push_str(&format!("{},{},{},{}\n", row.epoch, row.nll, row.bag_of_words, row.total));
    }
    write(&config.paths.output.join("pretrain-loss.csv"), csv)?;
    record_manifest(config, "pretrain", inputs(&[("corpus", &config.corpus_path())]))?;
    Ok(curve)
}

pub fn coherence_stage(config: &RunConfig) -> Result<CoherenceReport> {
    output_dirs(config)?;
    let corpus = read_corpus(config)?;
    let model = load_model(&config.pretrained_checkpoint())?;
    let mut scorer = CoherenceScorer::from_backbone(&model.backbone, &mut stream(config.seed, Stream::Coherence));
    let report = train_coherence(&mut scorer, &corpus, &config.coherence_config())?;
    let path = config.coherence_checkpoint();
    scorer.save(&path).with_context(|| format!("writing {}", path.display()))?;
    write(
        &config.paths.output.join("coherence-report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    record_manifest(
        config,
        "train-coherence",
        inputs(&[("corpus", &config.corpus_path()), ("pretrained", &config.pretrained_checkpoint())]),
    )?;
    Ok(report)
}

fn reward_model(config: &RunConfig, corpus: &Corpus) -> Result<RewardModel> {
    Ok(RewardModel {
        scorer: load_scorer(&config.coherence_checkpoint())?,
        vocab: corpus.vocab.clone(),
        rule: keyword_rule(config)?,
        overlap_threshold: config.overlap_threshold,
    })
}

fn responder(config: &RunConfig) -> ModelResponder {
    ModelResponder {
        max_len: config.simulation.max_len,
        mode: DecodeMode::Greedy,
    }
}

pub fn train_rl_stage(config: &RunConfig) -> Result<Vec<CurveRow>> {
    output_dirs(config)?;
    let corpus = read_corpus(config)?;
    let (train_part, _) = split_corpus(config, &corpus)?;
    let mut model = load_model(&config.pretrained_checkpoint())?;
    model.freeze_for_reinforcement();
    let judge = reward_model(config, &corpus)?;
    let scenarios = Scenario::from_corpus(&train_part)?;
    let train_config = config.train_config();
    let mut state = TrainerState::new(&model, &train_config);
    let every = (config.iterations / 10).max(1);
    let checkpoint = config.policy_checkpoint();
    train(
        &mut model,
        &responder(config),
        &judge,
        &scenarios,
        &train_config,
        &mut state,
        |row, model| {
            log::info!(
                "iteration {}: R {:.4} r_I {:.4} coherence {:.4}",
                row.iteration,
                row.reward,
                row.informativeness,
                row.coherence
            );
            if row.iteration % every == 0 {
                model.save(&checkpoint)?;
            }
            Ok(())
        },
    )?;
    model.save(&checkpoint).with_context(|| format!("writing {}", checkpoint.display()))?;
    write(&config.paths.output.join(CURVES), curve_csv(&state.curve))?;
    record_manifest(
        config,
        "train-rl",
        inputs(&[
            ("corpus", &config.corpus_path()),
            ("pretrained", &config.pretrained_checkpoint()),
            ("coherence", &config.coherence_checkpoint()),
        ]),
    )?;
    Ok(state.curve)
}

/// Greedy self-play over the held-out dialogues.
pub fn simulate_checkpoint(config: &RunConfig, checkpoint: &Path) -> Result<(Corpus, Vec<Trajectory>)> {
    let model = load_model(checkpoint)?;
    let corpus = read_corpus(config)?;
    let (_, heldout) = split_corpus(config, &corpus)?;
    let judge = reward_model(config, &corpus)?;
    let scenarios: Vec<Arc<Scenario>> = Scenario::from_corpus(&heldout)?;
    let trajectories = simulate(
        &model,
        &responder(config),
        &judge,
        &scenarios,
        config.simulation.conversations,
        config.turns,
        config.seed,
        config.execution,
    )?;
    Ok((corpus, trajectories))
}

pub fn simulate_stage(config: &RunConfig, checkpoint: &Path, speaker: usize) -> Result<Vec<Trajectory>> {
    if speaker > 1 {
        bail!("speaker must be 0 or 1, got {speaker}");
    }
    output_dirs(config)?;
    let (corpus, trajectories) = simulate_checkpoint(config, checkpoint)?;
    let mut jsonl = String::new();
    for t in &trajectories {
        jsonl.push_str(&serde_json::to_string(&SimulationRecord::new(t, &corpus.vocab))?);
        jsonl.push('\n');
    }
    write(&config.paths.output.join(SIMULATIONS), jsonl)?;
    write(&config.paths.output.join(USAGE_MATRIX), usage_matrix_csv(&trajectories, speaker))?;
    record_manifest(config, "simulate", inputs(&[("checkpoint", checkpoint)]))?;
    Ok(trajectories)
}

/// Metrics of greedy simulations from `trajectories`.
pub fn metrics_of(config: &RunConfig, corpus: &Corpus, trajectories: &[Trajectory]) -> Result<MetricsReport> {
    let turns: Vec<Vec<(usize, Vec<String>)>> =
        trajectories.iter().map(|t| conversation_tokens(t, &corpus.vocab)).collect();
    let views: Vec<ConversationView> = trajectories
        .iter()
        .zip(&turns)
        .map(|(t, turns)| ConversationView {
            personas: [&t.scenario.personas[0], &t.scenario.personas[1]],
            turns,
        })
        .collect();
    Ok(evaluate(&views, &keyword_rule(config)?.stopwords)?)
}

pub fn metrics_path(config: &RunConfig, name: &str) -> PathBuf {
    config.paths.output.join(format!("metrics-{name}.json"))
}

pub fn eval_stage(config: &RunConfig, checkpoint: &Path, name: &str) -> Result<MetricsReport> {
    if name.is_empty() || name.contains(['/', '\\']) {
        bail!("invalid evaluation name `{name}`");
    }
    output_dirs(config)?;
    let (corpus, trajectories) = simulate_checkpoint(config, checkpoint)?;
    let report = metrics_of(config, &corpus, &trajectories)?;
    write(&metrics_path(config, name), serde_json::to_string_pretty(&report)?)?;
    record_manifest(config, &format!("eval:{name}"), inputs(&[("checkpoint", checkpoint)]))?;
    Ok(report)
}

/// One CSV row per `metrics-*.json` in the output directory, sorted by name.
pub fn report_stage(config: &RunConfig) -> Result<String> {
    let dir = &config.paths.output;
    let mut rows = Vec::new();
    let listing = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    for entry in listing {
        let path = entry?.path();
        let file = path.file_name().and_then(|f| f.to_str()).unwrap_or_default();
        if let Some(name) = file.strip_prefix("metrics-").and_then(|f| f.strip_suffix(".json")) {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let report: MetricsReport =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            rows.push((name.to_string(), report));
        }
    }
    if rows.is_empty() {
        bail!("no metrics-*.json files in {}; run `eval` first", dir.display());
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut csv = String::from(
        "name,distinct_1,distinct_2,knowledge_recall,knowledge_precision,knowledge_f1,n_conversations\n",
    );
    for (name, r) in &rows {
        csv.push_str(&format!(
            "{name},{},{},{},{},{},{}\n",
            r.distinct_1, r.distinct_2, r.knowledge_recall, r.knowledge_precision, r.knowledge_f1, r.n_conversations
        ));
    }
    write(&dir.join(REPORT), &csv)?;
    record_manifest(config, "report", BTreeMap::new())?;
    Ok(csv)
}

fn inputs(items: &[(&str, &Path)]) -> BTreeMap<String, String> {
    items
        .iter()
        .map(|(k, p)| (k.to_string(), p.display().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_in(dir: &Path) -> RunConfig {
        let mut c = RunConfig::default();
        c.paths.output = dir.join("out");
        c.paths.checkpoints = dir.join("ckpt");
        c
    }

    #[test]
    fn manifest_keeps_other_stages() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = config_in(dir.path());
        record_manifest(&config, "a", BTreeMap::new()).unwrap();
        config.seed = 9;
        record_manifest(&config, "b", inputs(&[("corpus", Path::new("c.jsonl"))])).unwrap();
        let text = fs::read_to_string(config.paths.output.join(MANIFEST)).unwrap();
        let entries: BTreeMap<String, ManifestEntry> = serde_json::from_str(&text).unwrap();
        assert_eq!(entries["a"].seed, RunConfig::default().seed);
        assert_eq!(entries["b"].seed, 9);
        assert_eq!(entries["b"].inputs["corpus"], "c.jsonl");
        assert!(entries["a"].inputs.is_empty());
    }

    #[test]
    fn report_rows_are_sorted_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let config = config_in(dir.path());
        fs::create_dir_all(&config.paths.output).unwrap();
        for (name, f1) in [("zeta", 0.5), ("alpha", 0.25)] {
            let report = MetricsReport {
                knowledge_f1: f1,
                n_conversations: 3,
                ..MetricsReport::default()
            };
            fs::write(metrics_path(&config, name), serde_json::to_string(&report).unwrap()).unwrap();
        }
        fs::write(config.paths.output.join("notes.json"), "{}").unwrap();
        let csv = report_stage(&config).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1], "alpha,0,0,0,0,0.25,3");
        assert_eq!(rows[2], "zeta,0,0,0,0,0.5,3");
        assert_eq!(fs::read_to_string(config.paths.output.join(REPORT)).unwrap(), csv);
    }

    #[test]
    fn missing_inputs_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let config = config_in(dir.path());
        let err = read_corpus(&config).unwrap_err().to_string();
        assert!(err.starts_with("corpus not found:") && err.contains("corpus.jsonl"), "{err}");
        let err = load_model(&dir.path().join("m.json")).unwrap_err().to_string();
        assert!(err.contains("m.json"), "{err}");
    }

    #[test]
    fn eval_names_must_be_plain() {
        let dir = tempfile::tempdir().unwrap();
        let config = config_in(dir.path());
        for name in ["", "a/b"] {
            let err = eval_stage(&config, Path::new("x.json"), name).unwrap_err();
            assert!(err.to_string().contains("invalid evaluation name"));
        }
    }

    #[test]
    fn simulate_rejects_a_third_speaker() {
        let dir = tempfile::tempdir().unwrap();
        let err = simulate_stage(&config_in(dir.path()), Path::new("x.json"), 2).unwrap_err();
        assert!(err.to_string().contains("speaker must be 0 or 1"));
    }
}
