use std::sync::Arc;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::policy::Decision;
use crate::corpus::{Corpus, Dialogue, KnowledgeSet, Vocab};
use crate::generation::{
    select_knowledge, DecodeMode, GenerationModel, KnowledgeEncoding, PriorFeatures, SelectionMode,
};
use crate::reward::{RewardModel, RewardReport};
use crate::rng::{self, Rng};
use crate::{Error, Result, TokenId};

/// Starting condition of a self-play conversation. Persona 0 owns the start
/// utterance; persona 1 answers it.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub personas: [KnowledgeSet; 2],
    pub persona_ids: [Vec<Vec<TokenId>>; 2],
    pub start: Vec<String>,
    pub start_ids: Vec<TokenId>,
}

impl Scenario {
    pub fn new(personas: [KnowledgeSet; 2], start: Vec<String>, vocab: &Vocab) -> Result<Self> {
        if start.is_empty() {
            return Err(Error::Empty("start utterance"));
        }
        let persona_ids = [
            personas[0].entries.iter().map(|e| vocab.encode(e)).collect(),
            personas[1].entries.iter().map(|e| vocab.encode(e)).collect(),
        ];
        let start_ids = vocab.encode(&start);
        Ok(Scenario {
            personas,
            persona_ids,
            start,
            start_ids,
        })
    }

    /// Personas and first turn of a corpus dialogue.
    pub fn from_dialogue(dialogue: &Dialogue, vocab: &Vocab) -> Result<Self> {
        let first = dialogue.turns.first().ok_or(Error::Empty("dialogue has no turns"))?;
        let [a, b] = dialogue.personas.clone();
        let personas = if first.speaker == 0 { [a, b] } else { [b, a] };
        Scenario::new(personas, first.text.clone(), vocab)
    }

    pub fn from_corpus(corpus: &Corpus) -> Result<Vec<Arc<Scenario>>> {
        corpus
            .dialogues
            .iter()
            .filter(|d| !d.turns.is_empty())
            .map(|d| Scenario::from_dialogue(d, &corpus.vocab).map(Arc::new))
            .collect()
    }
}

/// A scenario with both backgrounds encoded by the current model.
#[derive(Clone, Debug)]
pub struct PreparedScenario {
    pub scenario: Arc<Scenario>,
    pub knowledge: [Arc<KnowledgeEncoding>; 2],
}

impl PreparedScenario {
    pub fn new(model: &GenerationModel, scenario: Arc<Scenario>) -> Result<Self> {
        let knowledge = [
            Arc::new(model.encode_knowledge(&scenario.persona_ids[0])?),
            Arc::new(model.encode_knowledge(&scenario.persona_ids[1])?),
        ];
        Ok(PreparedScenario { scenario, knowledge })
    }
}

pub struct ResponseRequest<'a> {
    pub persona: &'a [Vec<TokenId>],
    pub knowledge: &'a KnowledgeEncoding,
    pub index: usize,
    pub u_prev: &'a [TokenId],
    /// `u_{t-1}^G` from the utterance encoder.
    pub u_prev_encoding: &'a Array1<f64>,
}

/// Produces the utterance for a selected knowledge entry.
pub trait Responder: Sync {
    fn respond(&self, model: &GenerationModel, request: &ResponseRequest, rng: &mut Rng) -> Result<Vec<TokenId>>;
}

/// The pre-trained decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponder {
    pub max_len: usize,
    pub mode: DecodeMode,
}

impl Default for ModelResponder {
    fn default() -> Self {
        ModelResponder {
            max_len: 20,
            mode: DecodeMode::Greedy,
        }
    }
}

impl Responder for ModelResponder {
    fn respond(&self, model: &GenerationModel, request: &ResponseRequest, rng: &mut Rng) -> Result<Vec<TokenId>> {
        let z = request.knowledge.vectors.get(request.index).ok_or_else(|| {
            Error::InvalidArgument(format!("knowledge index {} outside 0..{}", request.index, request.knowledge.len()))
        })?;
        let h0 = model.decoder_initial_state(z, request.u_prev_encoding);
        model.decode_from_state(h0, self.max_len, self.mode, rng)
    }
}

/// Scores a finished conversation: `turns` are (speaker, utterance) after
/// the start utterance.
pub trait Judge: Sync {
    fn judge(&self, scenario: &Scenario, turns: &[(usize, Vec<TokenId>)]) -> Result<RewardReport>;
}

impl Judge for RewardModel {
    fn judge(&self, scenario: &Scenario, turns: &[(usize, Vec<TokenId>)]) -> Result<RewardReport> {
        let text: Vec<(usize, Vec<String>)> = turns.iter().map(|(s, ids)| (*s, self.vocab.decode(ids))).collect();
        self.evaluate([&scenario.personas[0], &scenario.personas[1]], &scenario.start, &text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub speaker: usize,
    pub knowledge_index: usize,
    pub log_prob: f64,
    pub utterance: Vec<TokenId>,
    pub prior: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub scenario: Arc<Scenario>,
    pub turns: Vec<TurnRecord>,
    pub decisions: Vec<Decision<PriorFeatures>>,
    pub reward: RewardReport,
}

impl Trajectory {
    pub fn utterances(&self) -> Vec<(usize, Vec<TokenId>)> {
        self.turns.iter().map(|t| (t.speaker, t.utterance.clone())).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutConfig {
    /// Generated turns after the start utterance.
    pub turns: usize,
    pub selection: SelectionMode,
}

/// Speaker of generated turn `t` (1-based): persona 1 answers the start.
pub fn speaker_at(turn: usize) -> usize {
    turn % 2
}

pub fn rollout<Rs, J>(
    model: &GenerationModel,
    responder: &Rs,
    judge: &J,
    prepared: &PreparedScenario,
    config: &RolloutConfig,
    rng: &mut Rng,
) -> Result<Trajectory>
where
    Rs: Responder + ?Sized,
    J: Judge + ?Sized,
{
    if config.turns == 0 {
        return Err(Error::InvalidArgument("a rollout needs at least one turn".into()));
    }
    let scenario = &prepared.scenario;
    let embedding = &model.backbone.embedding;
    let mut last: Vec<TokenId> = scenario.start_ids.clone();
    let mut context: Option<Array1<f64>> = None;
    let mut turns = Vec::with_capacity(config.turns);
    let mut decisions = Vec::with_capacity(config.turns);
    for t in 1..=config.turns {
        let speaker = speaker_at(t);
        let mut step = || -> Result<(TurnRecord, Decision<PriorFeatures>, Vec<TokenId>)> {
            let features = PriorFeatures {
                knowledge: Arc::clone(&prepared.knowledge[speaker]),
                utterance: model.encode_utterance(&last)?,
                context: context.clone(),
            };
            let prior = model.selector.prior(&features)?;
            let (index, log_prob) = select_knowledge(&prior, config.selection, &mut *rng)?;
            let request = ResponseRequest {
                persona: &scenario.persona_ids[speaker],
                knowledge: &prepared.knowledge[speaker],
                index,
                u_prev: &last,
                u_prev_encoding: &features.utterance,
            };
            let utterance = responder.respond(model, &request, &mut *rng)?;
            if utterance.is_empty() {
                return Err(Error::Empty("generated utterance"));
            }
            let record = TurnRecord {
                speaker,
                knowledge_index: index,
                log_prob,
                utterance: utterance.clone(),
                prior: prior.probs().to_vec(),
            };
            Ok((record, Decision { features, index, log_prob }, utterance))
        };
        let (record, decision, utterance) = step().map_err(|e| Error::at_turn(t, e))?;
        let h = context.take().unwrap_or_else(|| model.context_encoder.initial_state());
        context = Some(model.context_encoder.encode_from(embedding, &last, h)?);
        last = utterance;
        turns.push(record);
        decisions.push(decision);
    }
    let spoken: Vec<(usize, Vec<TokenId>)> = turns.iter().map(|r| (r.speaker, r.utterance.clone())).collect();
    let reward = judge.judge(scenario, &spoken)?;
    Ok(Trajectory {
        scenario: Arc::clone(scenario),
        turns,
        decisions,
        reward,
    })
}

/// Arithmetic mean of rollout rewards.
pub fn baseline_from_rewards(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::Empty("baseline needs at least one reward"));
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

/// Mean reward of `k` independent rollouts from the same scenario.
pub fn estimate_baseline<Rs, J>(
    model: &GenerationModel,
    responder: &Rs,
    judge: &J,
    prepared: &PreparedScenario,
    config: &RolloutConfig,
    k: usize,
    rng: &mut Rng,
) -> Result<f64>
where
    Rs: Responder + ?Sized,
    J: Judge + ?Sized,
{
    if k == 0 {
        return Err(Error::InvalidArgument("baseline needs K ≥ 1".into()));
    }
    let rewards = rng::children(rng, k)
        .into_iter()
        .map(|mut child| rollout(model, responder, judge, prepared, config, &mut child).map(|t| t.reward.total))
        .collect::<Result<Vec<_>>>()?;
    baseline_from_rewards(&rewards)
}
