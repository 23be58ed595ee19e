use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::rollout::{rollout, Judge, PreparedScenario, Responder, RolloutConfig, Scenario, Trajectory};
use crate::corpus::{join_tokens, Vocab};
use crate::exec::{self, Execution};
use crate::generation::{GenerationModel, SelectionMode};
use crate::reward::RewardReport;
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// `n` conversations with greedy knowledge selection, cycling through
/// `scenarios` in order.
#[allow(clippy::too_many_arguments)]
pub fn simulate<Rs, J>(
    model: &GenerationModel,
    responder: &Rs,
    judge: &J,
    scenarios: &[Arc<Scenario>],
    n: usize,
    turns: usize,
    seed: u64,
    execution: Execution,
) -> Result<Vec<Trajectory>>
where
    Rs: Responder + ?Sized,
    J: Judge + ?Sized,
{
    if n == 0 {
        return Ok(Vec::new());
    }
    if scenarios.is_empty() {
        return Err(Error::Empty("simulation scenarios"));
    }
    let config = RolloutConfig {
        turns,
        selection: SelectionMode::Greedy,
    };
    let mut root = rng::stream(seed, Stream::Simulation);
    let jobs: Vec<_> = (0..n)
        .map(|i| (Arc::clone(&scenarios[i % scenarios.len()]), rng::child(&mut root)))
        .collect();
    exec::try_map(execution, jobs, |(scenario, mut child)| {
        let prepared = PreparedScenario::new(model, scenario)?;
        rollout(model, responder, judge, &prepared, &config, &mut child)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTurn {
    pub speaker: usize,
    pub knowledge_index: usize,
    pub log_prob: f64,
    pub text: String,
    pub prior: Vec<f64>,
}

/// One line of `simulations.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub personas: [Vec<String>; 2],
    pub start: String,
    pub turns: Vec<SimulatedTurn>,
    pub reward: RewardReport,
}

impl SimulationRecord {
    pub fn new(trajectory: &Trajectory, vocab: &Vocab) -> Self {
        let s = &trajectory.scenario;
        let persona = |i: usize| s.personas[i].entries.iter().map(|e| join_tokens(e)).collect();
        SimulationRecord {
            personas: [persona(0), persona(1)],
            start: join_tokens(&s.start),
            turns: trajectory
                .turns
                .iter()
                .map(|t| SimulatedTurn {
                    speaker: t.speaker,
                    knowledge_index: t.knowledge_index,
                    log_prob: t.log_prob,
                    text: join_tokens(&vocab.decode(&t.utterance)),
                    prior: t.prior.clone(),
                })
                .collect(),
            reward: trajectory.reward.clone(),
        }
    }
}

/// Generated turns as (speaker, tokens), start utterance excluded.
pub fn conversation_tokens(trajectory: &Trajectory, vocab: &Vocab) -> Vec<(usize, Vec<String>)> {
    trajectory
        .turns
        .iter()
        .map(|t| (t.speaker, vocab.decode(&t.utterance)))
        .collect()
}

/// Selection probabilities of `speaker`'s turns: one row per turn, one
/// column per background entry.
pub fn usage_matrix_csv(trajectories: &[Trajectory], speaker: usize) -> String {
    let width = trajectories
        .iter()
        .flat_map(|t| t.turns.iter().filter(|r| r.speaker == speaker).map(|r| r.prior.len()))
        .max()
        .unwrap_or(0);
    let mut out = String::from("dialogue,turn");
    for k in 0..width {
        out.push_str(&format!(",k{k}"));
    }
    out.push('\n');
    for (d, t) in trajectories.iter().enumerate() {
        for (i, r) in t.turns.iter().enumerate().filter(|(_, r)| r.speaker == speaker) {
            out.push_str(&format!("{d},{}", i + 1));
            for k in 0..width {
                match r.prior.get(k) {
                    Some(p) => out.push_str(&format!(",{p}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    out
}
