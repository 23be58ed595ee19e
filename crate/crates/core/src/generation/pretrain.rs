use ndarray::{concatenate, s, Array1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Backbone, GenerationModel, ParamGroup};
use crate::corpus::{DialogueSample, KeywordRule, Vocab, BOS, EOS};
use crate::exec::{self, Execution};
use crate::nn::{log_softmax, Adam, Params};
use crate::rng::{stream, Stream};
use crate::{Error, Result, TokenId};

/// One `{u_{t-1}, z_i, u_t}` triple in id form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PretrainExample {
    pub knowledge: Vec<TokenId>,
    pub last_utterance: Vec<TokenId>,
    pub target: Vec<TokenId>,
    /// Content words of the target, the bag-of-words objective.
    pub bag_of_words: Vec<TokenId>,
}

pub fn pretrain_examples(samples: &[DialogueSample], vocab: &Vocab, rule: &KeywordRule) -> Result<Vec<PretrainExample>> {
    samples
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let k = s
                .knowledge_index
                .ok_or_else(|| Error::InvalidArgument(format!("sample {n} has no knowledge_index")))?;
            let entry = s
                .knowledge
                .entries
                .get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("sample {n}: knowledge_index {k} out of range")))?;
            if s.target.is_empty() || s.last_utterance.is_empty() {
                return Err(Error::InvalidArgument(format!("sample {n} has an empty utterance")));
            }
            let bag: Vec<String> = s.target.iter().filter(|t| rule.is_keyword(t)).cloned().collect();
            Ok(PretrainExample {
                knowledge: vocab.encode(entry),
                last_utterance: vocab.encode(&s.last_utterance),
                target: vocab.encode(&s.target),
                bag_of_words: vocab.encode(&bag),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub aux_weight: f64,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 10,
            lr: 5e-3,
            batch: 16,
            aux_weight: 1.0,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// Losses of one example: summed token NLL, token count, and mean BOW NLL.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExampleLoss {
    pub nll_sum: f64,
    pub tokens: usize,
    pub bag_of_words: f64,
}

impl ExampleLoss {
    /// Per-token NLL plus weighted bag-of-words loss.
    pub fn objective(&self, aux_weight: f64) -> f64 {
        self.nll_sum / self.tokens as f64 + aux_weight * self.bag_of_words
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Per-token negative log-likelihood over the epoch.
    pub nll: f64,
    pub bag_of_words: f64,
    /// Mean training objective.
    pub total: f64,
}

fn ensure_ids(backbone: &Backbone, ex: &PretrainExample) -> Result<()> {
    if ex.knowledge.is_empty() || ex.last_utterance.is_empty() || ex.target.is_empty() {
        return Err(Error::Empty("pre-training example"));
    }
    let v = backbone.embedding.vocab_size() as TokenId;
    let all = ex.knowledge.iter().chain(&ex.last_utterance).chain(&ex.target).chain(&ex.bag_of_words);
    if let Some(bad) = all.copied().find(|&id| id >= v) {
        return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary of {v}")));
    }
    Ok(())
}

fn decoder_io(target: &[TokenId]) -> (Vec<TokenId>, Vec<TokenId>) {
    let mut inputs = vec![BOS];
    inputs.extend_from_slice(target);
    let mut outputs = target.to_vec();
    outputs.push(EOS);
    (inputs, outputs)
}

/// Forward pass only.
pub fn example_loss(backbone: &Backbone, ex: &PretrainExample) -> Result<ExampleLoss> {
    ensure_ids(backbone, ex)?;
    let emb = &backbone.embedding;
    let dec = &backbone.decoder;
    let z = backbone.knowledge_encoder.encode(emb, &ex.knowledge)?;
    let u = backbone.utterance_encoder.encode(emb, &ex.last_utterance)?;
    let cat = concatenate(Axis(0), &[z.view(), u.view()]).expect("vectors");
    let h0 = dec.bridge.forward(cat.view()).mapv(f64::tanh);
    let bag_of_words = if ex.bag_of_words.is_empty() {
        0.0
    } else {
        let lp = log_softmax(dec.bag_of_words.forward(h0.view()).as_slice().expect("contiguous"))?;
        -ex.bag_of_words.iter().map(|&w| lp[w as usize]).sum::<f64>() / ex.bag_of_words.len() as f64
    };
    let (inputs, outputs) = decoder_io(&ex.target);
    let mut h = h0;
    let mut nll_sum = 0.0;
    for (&x, &y) in inputs.iter().zip(&outputs) {
        h = dec.cell.step(emb.lookup(x)?, &h);
        let lp = log_softmax(dec.output.forward(h.view()).as_slice().expect("contiguous"))?;
        nll_sum -= lp[y as usize];
    }
    Ok(ExampleLoss {
        nll_sum,
        tokens: outputs.len(),
        bag_of_words,
    })
}

/// Loss and gradient of [`ExampleLoss::objective`] with respect to the backbone.
pub fn example_gradient(backbone: &Backbone, ex: &PretrainExample, aux_weight: f64) -> Result<(ExampleLoss, Backbone)> {
    ensure_ids(backbone, ex)?;
    let emb = &backbone.embedding;
    let dec = &backbone.decoder;
    let mut g = backbone.zeros_like();

    let z_trace = backbone.knowledge_encoder.encode_traced(emb, &ex.knowledge)?;
    let u_trace = backbone.utterance_encoder.encode_traced(emb, &ex.last_utterance)?;
    let cat = concatenate(Axis(0), &[z_trace.last_state().view(), u_trace.last_state().view()]).expect("vectors");
    let h0 = dec.bridge.forward(cat.view()).mapv(f64::tanh);
    let mut d_h0 = Array1::zeros(h0.len());

    let mut bag_of_words = 0.0;
    if !ex.bag_of_words.is_empty() {
        let lp = log_softmax(dec.bag_of_words.forward(h0.view()).as_slice().expect("contiguous"))?;
        let n = ex.bag_of_words.len() as f64;
        bag_of_words = -ex.bag_of_words.iter().map(|&w| lp[w as usize]).sum::<f64>() / n;
        let mut d_logits = Array1::from_iter(lp.iter().map(|l| aux_weight * l.exp()));
        for &w in &ex.bag_of_words {
            d_logits[w as usize] -= aux_weight / n;
        }
        d_h0 += &dec.bag_of_words.backward(h0.view(), &d_logits, &mut g.decoder.bag_of_words);
    }

    let (inputs, outputs) = decoder_io(&ex.target);
    let rows = inputs.iter().map(|&x| emb.lookup(x)).collect::<Result<Vec<_>>>()?;
    let trace = dec.cell.run(rows, h0.clone())?;
    let scale = 1.0 / outputs.len() as f64;
    let mut nll_sum = 0.0;
    let mut d_states = Vec::with_capacity(outputs.len());
    for (step, &y) in trace.steps.iter().zip(&outputs) {
        let lp = log_softmax(dec.output.forward(step.state.view()).as_slice().expect("contiguous"))?;
        nll_sum -= lp[y as usize];
        let mut d_logits = Array1::from_iter(lp.iter().map(|l| scale * l.exp()));
        d_logits[y as usize] -= scale;
        d_states.push(dec.output.backward(step.state.view(), &d_logits, &mut g.decoder.output));
    }
    let zero = Array1::zeros(h0.len());
    let dec_grads = dec.cell.backward(&trace, &zero, Some(&d_states), &mut g.decoder.cell);
    for (&x, d_x) in inputs.iter().zip(&dec_grads.inputs) {
        g.embedding.accumulate(x, d_x);
    }
    d_h0 += &dec_grads.initial;

    let d_pre = &d_h0 * &h0.mapv(|h| 1.0 - h * h);
    let d_cat = dec.bridge.backward(cat.view(), &d_pre, &mut g.decoder.bridge);
    let d = h0.len();
    let d_z = d_cat.slice(s![..d]).to_owned();
    let d_u = d_cat.slice(s![d..]).to_owned();
    backbone
        .knowledge_encoder
        .backward_tokens(&z_trace, &ex.knowledge, &d_z, &mut g.knowledge_encoder, Some(&mut g.embedding));
    backbone.utterance_encoder.backward_tokens(
        &u_trace,
        &ex.last_utterance,
        &d_u,
        &mut g.utterance_encoder,
        Some(&mut g.embedding),
    );
    let loss = ExampleLoss {
        nll_sum,
        tokens: outputs.len(),
        bag_of_words,
    };
    Ok((loss, g))
}

/// Supervised training of embeddings, encoders and decoder with Adam.
/// The selector is never touched. On return the context encoder is a copy
/// of the trained utterance encoder.
pub fn pretrain(model: &mut GenerationModel, examples: &[PretrainExample], config: &PretrainConfig) -> Result<Vec<EpochLoss>> {
    for group in [
        ParamGroup::Embedding,
        ParamGroup::KnowledgeEncoder,
        ParamGroup::UtteranceEncoder,
        ParamGroup::Decoder,
    ] {
        if !model.is_trainable(group) {
            return Err(Error::InvalidArgument(format!("parameter group {} is frozen", group.name())));
        }
    }
    if examples.is_empty() {
        return Err(Error::Empty("pre-training examples"));
    }
    if config.batch == 0 || !(config.lr > 0.0) || !(config.aux_weight >= 0.0) {
        return Err(Error::InvalidArgument("batch and lr must be positive, aux_weight non-negative".into()));
    }
    let mut rng = stream(config.seed, Stream::Pretrain);
    let mut adam = Adam::for_params(config.lr, &model.backbone);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut nll, mut tokens, mut bow, mut total) = (0.0, 0usize, 0.0, 0.0);
        for chunk in order.chunks(config.batch) {
            let backbone = &model.backbone;
            let results = exec::try_map(config.execution, chunk.to_vec(), |i| {
                example_gradient(backbone, &examples[i], config.aux_weight)
            })?;
            let mut grad = backbone.zeros_like();
            for (loss, g) in &results {
                grad.add_scaled(g, 1.0 / chunk.len() as f64);
                nll += loss.nll_sum;
                tokens += loss.tokens;
                bow += loss.bag_of_words;
                total += loss.objective(config.aux_weight);
            }
            adam.step(&mut model.backbone, &grad)?;
        }
        let n = examples.len() as f64;
        let row = EpochLoss {
            epoch: epoch + 1,
            nll: nll / tokens as f64,
            bag_of_words: bow / n,
            total: total / n,
        };
        log::info!("pretrain epoch {}: nll {:.4} bow {:.4}", row.epoch, row.nll, row.bag_of_words);
        curve.push(row);
    }
    model.context_encoder = model.backbone.utterance_encoder.clone();
    Ok(curve)
}

/// Per-token NLL over `examples` without training.
pub fn evaluate_nll(backbone: &Backbone, examples: &[PretrainExample], execution: Execution) -> Result<f64> {
    let losses = exec::try_map(execution, examples.iter().collect(), |ex| example_loss(backbone, ex))?;
    let tokens: usize = losses.iter().map(|l| l.tokens).sum();
    if tokens == 0 {
        return Err(Error::Empty("evaluation examples"));
    }
    Ok(losses.iter().map(|l| l.nll_sum).sum::<f64>() / tokens as f64)
}
