use ndarray::{concatenate, s, Array1, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::exec::{self, Execution};
use crate::metrics::roc_auc;
use crate::generation::Backbone;
use crate::nn::{log_sigmoid, sigmoid, Adam, Embedding, Gru, HierGru, Mlp2, Params};
use crate::rng::{self, Stream};
use crate::{Error, Result, TokenId};

/// Symmetric scorer `σ(MLP(u^G) · MLP([c^H; z^H]))`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceScorer {
    pub embedding: Embedding,
    pub utterance: Gru,
    pub context: HierGru,
    pub background: HierGru,
    pub utterance_head: Mlp2,
    pub background_head: Mlp2,
}
crate::impl_params!(CoherenceScorer {
    embedding,
    utterance,
    context,
    background,
    utterance_head,
    background_head
});

/// One scoring input: a candidate utterance, the history before it and the
/// speaker's background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoherenceExample {
    pub utterance: Vec<TokenId>,
    pub context: Vec<Vec<TokenId>>,
    pub background: Vec<Vec<TokenId>>,
}

/// Uniform init half-width for the scorer. Wider than the generator's so the
/// bilinear logit does not start on its flat saddle.
pub const SCORER_INIT_SCALE: f64 = 0.3;

impl CoherenceScorer {
    pub fn new<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let s = SCORER_INIT_SCALE;
        CoherenceScorer {
            embedding: Embedding::new(vocab_size, dim, rng, s),
            utterance: Gru::new(dim, dim, rng, s),
            context: HierGru::new(dim, dim, rng, s),
            background: HierGru::new(dim, dim, rng, s),
            utterance_head: Mlp2::new(dim, dim, dim, rng, s),
            background_head: Mlp2::new(2 * dim, dim, dim, rng, s),
        }
    }

    /// Starts from a pre-trained token embedding and sentence encoders
    /// (utterance encoder for utterances and context sentences, knowledge
    /// encoder for background sentences). Document GRUs and heads are random.
    pub fn from_backbone<R: Rng + ?Sized>(backbone: &Backbone, rng: &mut R) -> Self {
        let mut scorer = Self::new(backbone.embedding.vocab_size(), backbone.embedding.dim(), rng);
        scorer.embedding = backbone.embedding.clone();
        scorer.utterance = backbone.utterance_encoder.clone();
        scorer.context.sentence = backbone.utterance_encoder.clone();
        scorer.background.sentence = backbone.knowledge_encoder.clone();
        scorer
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.vocab_size()
    }

    pub fn encode_utterance(&self, utterance: &[TokenId]) -> Result<Array1<f64>> {
        if utterance.is_empty() {
            return Err(Error::Empty("coherence utterance"));
        }
        self.utterance.encode(&self.embedding, utterance)
    }

    /// Sentence-level encodings for the context branch, reusable across turns.
    pub fn context_sentence(&self, sentence: &[TokenId]) -> Result<Array1<f64>> {
        self.context.sentence.encode(&self.embedding, sentence)
    }

    pub fn context_step(&self, state: &Array1<f64>, sentence: &Array1<f64>) -> Array1<f64> {
        self.context.document.step(sentence.view(), state)
    }

    pub fn encode_background<S: AsRef<[TokenId]>>(&self, background: &[S]) -> Result<Array1<f64>> {
        self.background.encode(&self.embedding, background)
    }

    /// Logit from already-encoded branches `u^G`, `c^H`, `z^H`.
    pub fn logit_encoded(&self, u: &Array1<f64>, c: &Array1<f64>, z: &Array1<f64>) -> Result<f64> {
        let left = self.utterance_head.forward(u.view())?;
        let cz = concatenate(Axis(0), &[c.view(), z.view()]).expect("vectors");
        let right = self.background_head.forward(cz.view())?;
        Ok(left.dot(&right))
    }

    pub fn logit(&self, ex: &CoherenceExample) -> Result<f64> {
        let u = self.encode_utterance(&ex.utterance)?;
        let c = self.context.encode(&self.embedding, &ex.context)?;
        let z = self.encode_background(&ex.background)?;
        self.logit_encoded(&u, &c, &z)
    }

    /// Coherence in `(0, 1)`.
    pub fn score(&self, ex: &CoherenceExample) -> Result<f64> {
        Ok(sigmoid(self.logit(ex)?))
    }

    /// Binary cross-entropy of one labelled example and its gradient.
    pub fn loss_gradient(&self, ex: &CoherenceExample, label: bool) -> Result<(f64, CoherenceScorer)> {
        if ex.utterance.is_empty() {
            return Err(Error::Empty("coherence utterance"));
        }
        let mut g = self.zeros_like();
        let u_trace = self.utterance.encode_traced(&self.embedding, &ex.utterance)?;
        let c_trace = self.context.encode_traced(&self.embedding, &ex.context)?;
        let z_trace = self.background.encode_traced(&self.embedding, &ex.background)?;
        let left = self.utterance_head.trace(u_trace.last_state().view())?;
        let cz = concatenate(
            Axis(0),
            &[c_trace.document.last_state().view(), z_trace.document.last_state().view()],
        )
        .expect("vectors");
        let right = self.background_head.trace(cz.view())?;
        let logit = left.output.dot(&right.output);
        let y = if label { 1.0 } else { 0.0 };
        let loss = -(y * log_sigmoid(logit) + (1.0 - y) * log_sigmoid(-logit));
        let d_logit = sigmoid(logit) - y;

        let d_left = &right.output * d_logit;
        let d_right = &left.output * d_logit;
        let d_u = self.utterance_head.backward(&left, &d_left, &mut g.utterance_head);
        let d_cz = self.background_head.backward(&right, &d_right, &mut g.background_head);
        let d = self.dim();
        self.utterance
            .backward_tokens(&u_trace, &ex.utterance, &d_u, &mut g.utterance, Some(&mut g.embedding));
        let d_c = d_cz.slice(s![..d]).to_owned();
        let d_z = d_cz.slice(s![d..]).to_owned();
        self.context
            .backward(&c_trace, &ex.context, &d_c, &mut g.context, Some(&mut g.embedding));
        self.background
            .backward(&z_trace, &ex.background, &d_z, &mut g.background, Some(&mut g.embedding));
        Ok((loss, g))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceConfig {
    /// Negatives drawn per positive.
    pub negative_ratio: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Fraction of dialogues held out for the AUC.
    pub holdout: f64,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        CoherenceConfig {
            negative_ratio: 1,
            epochs: 5,
            lr: 5e-3,
            batch: 16,
            holdout: 0.2,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub epoch_losses: Vec<f64>,
    pub initial_auc: f64,
    pub auc: f64,
    /// Mean held-out score of true continuations after training.
    pub positive_score: f64,
    /// Mean held-out score of sampled negatives after training.
    pub negative_score: f64,
    pub train_examples: usize,
    pub heldout_examples: usize,
}

/// Labelled examples: each turn after the first is a positive with its
/// history and the speaker's background; negatives swap in an utterance
/// from a different dialogue.
pub fn coherence_examples<R: Rng + ?Sized>(
    corpus: &Corpus,
    dialogues: std::ops::Range<usize>,
    negative_ratio: usize,
    rng: &mut R,
) -> Result<Vec<(CoherenceExample, bool)>> {
    let n = corpus.dialogues.len();
    if n < 2 {
        return Err(Error::InvalidArgument("negative sampling needs at least two dialogues".into()));
    }
    let encoded: Vec<Vec<Vec<TokenId>>> = corpus
        .dialogues
        .iter()
        .map(|d| d.turns.iter().map(|t| corpus.vocab.encode(&t.text)).collect())
        .collect();
    let mut out = Vec::new();
    for d in dialogues {
        let dialogue = &corpus.dialogues[d];
        let others: Vec<usize> = (0..n).filter(|&o| o != d && encoded[o].len() > 1).collect();
        for t in 1..dialogue.turns.len() {
            let speaker = dialogue.turns[t].speaker;
            let background: Vec<Vec<TokenId>> = dialogue.personas[speaker]
                .entries
                .iter()
                .map(|e| corpus.vocab.encode(e))
                .collect();
            let context = encoded[d][..t].to_vec();
            out.push((
                CoherenceExample {
                    utterance: encoded[d][t].clone(),
                    context: context.clone(),
                    background: background.clone(),
                },
                true,
            ));
            for _ in 0..negative_ratio {
                let &other = others
                    .choose(rng)
                    .ok_or_else(|| Error::InvalidArgument("no other dialogue to sample negatives from".into()))?;
                let turn = rng.random_range(1..encoded[other].len());
                out.push((
                    CoherenceExample {
                        utterance: encoded[other][turn].clone(),
                        context: context.clone(),
                        background: background.clone(),
                    },
                    false,
                ));
            }
        }
    }
    Ok(out)
}

fn heldout_logits(
    scorer: &CoherenceScorer,
    examples: &[(CoherenceExample, bool)],
    execution: Execution,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let logits = exec::try_map(execution, examples.iter().collect(), |(ex, _)| scorer.logit(ex))?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (l, (_, label)) in logits.into_iter().zip(examples) {
        if *label {
            pos.push(l);
        } else {
            neg.push(l);
        }
    }
    Ok((pos, neg))
}

pub fn heldout_auc(scorer: &CoherenceScorer, examples: &[(CoherenceExample, bool)], execution: Execution) -> Result<f64> {
    let (pos, neg) = heldout_logits(scorer, examples, execution)?;
    roc_auc(&pos, &neg)
}

fn mean_score(logits: &[f64]) -> f64 {
    logits.iter().map(|&l| sigmoid(l)).sum::<f64>() / logits.len().max(1) as f64
}

/// Negative-sampling BCE training; reports held-out AUC before and after.
pub fn train_coherence(scorer: &mut CoherenceScorer, corpus: &Corpus, config: &CoherenceConfig) -> Result<CoherenceReport> {
    if config.negative_ratio == 0 {
        return Err(Error::InvalidArgument(
            "negative_ratio 0 leaves only positive labels".into(),
        ));
    }
    if config.batch == 0 || !(config.lr > 0.0) {
        return Err(Error::InvalidArgument("batch and lr must be positive".into()));
    }
    let n = corpus.dialogues.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split a corpus of {n} dialogue(s)")));
    }
    let held = ((n as f64 * config.holdout).round() as usize).clamp(1, n - 1);
    let mut rng = rng::stream(config.seed, Stream::Coherence);
    let test = coherence_examples(corpus, n - held..n, config.negative_ratio, &mut rng)?;
    let mut train = coherence_examples(corpus, 0..n - held, config.negative_ratio, &mut rng)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("corpus split yields no coherence examples".into()));
    }
    let initial_auc = heldout_auc(scorer, &test, config.execution)?;
    let mut adam = Adam::for_params(config.lr, scorer);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if epoch > 0 {
            // Fresh negatives every epoch.
            train = coherence_examples(corpus, 0..n - held, config.negative_ratio, &mut rng)?;
        }
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch) {
            let current = &*scorer;
            let results = exec::try_map(config.execution, chunk.to_vec(), |i| {
                current.loss_gradient(&train[i].0, train[i].1)
            })?;
            let mut grad = scorer.zeros_like();
            for (loss, g) in &results {
                total += loss;
                grad.add_scaled(g, 1.0 / chunk.len() as f64);
            }
            adam.step(scorer, &grad)?;
        }
        let mean = total / train.len() as f64;
        log::info!("coherence epoch {}: bce {:.4}", epoch + 1, mean);
        epoch_losses.push(mean);
    }
    let (pos, neg) = heldout_logits(scorer, &test, config.execution)?;
    Ok(CoherenceReport {
        epoch_losses,
        initial_auc,
        auc: roc_auc(&pos, &neg)?,
        positive_score: mean_score(&pos),
        negative_score: mean_score(&neg),
        train_examples: train.len(),
        heldout_examples: test.len(),
    })
}
