//! Five-class penalty-term classifiers over fact-article
//! correspondences: per-fact (fine) and whole-paragraph (coarse).

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, TokenSequence, PAD_ID};
use crate::model::DenseLayer;
use crate::numerics::{dense, softmax_axis, Tape, Tensor, Var};
use crate::training::ArticleStore;

use super::bilstm::{bilstm_encode, BiLstm, BoundBiLstm, BoundCell, LstmCell};
use super::DecisionError;

type T = Tensor<f64>;
type V = Var<f64>;

pub const N_CLASSES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig {
    pub embed_dim: usize,
    /// Hidden width per LSTM direction.
    pub hidden: usize,
    pub correspondence_width: usize,
    /// Paragraph length for the coarse classifier.
    pub coarse_length: usize,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            hidden: 64,
            correspondence_width: 64,
            coarse_length: 200,
        }
    }
}

impl DecisionConfig {
    pub fn tiny(embed_dim: usize) -> Self {
        Self {
            embed_dim,
            hidden: 3,
            correspondence_width: 4,
            coarse_length: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionParams {
    pub embedding: EmbeddingTable,
    pub fact_encoder: BiLstm,
    pub article_encoder: BiLstm,
    /// `[4h, c]`: concatenated fact and article-sum encodings in.
    pub correspondence: DenseLayer,
    /// `[c, 5]`
    pub output: DenseLayer,
}

fn dense_init(rng: &mut impl rand::Rng, inw: usize, outw: usize) -> DenseLayer {
    let limit = (6.0 / (inw + outw) as f64).sqrt();
    let data: Vec<f64> = (0..inw * outw).map(|_| rng.gen_range(-limit..limit)).collect();
    DenseLayer {
        weight: T::from_vec(vec![inw, outw], data).unwrap(),
        bias: T::zeros(vec![outw]),
    }
}

impl DecisionParams {
    pub fn init(
        config: &DecisionConfig,
        embedding: EmbeddingTable,
        seed: u64,
    ) -> Result<Self, DecisionError> {
        if embedding.dim != config.embed_dim {
            return Err(DecisionError::BadData(format!(
                "embedding width {} does not match configured {}",
                embedding.dim, config.embed_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fact_encoder = BiLstm::init(&mut rng, config.embed_dim, config.hidden);
        let article_encoder = BiLstm::init(&mut rng, config.embed_dim, config.hidden);
        let correspondence = dense_init(&mut rng, 4 * config.hidden, config.correspondence_width);
        // zero output weights keep the initial logits at zero however
        // many per-fact correspondence vectors are summed; nonzero
        // init saturates the softmax on many-fact cases
        let output = DenseLayer {
            weight: T::zeros(vec![config.correspondence_width, N_CLASSES]),
            bias: T::zeros(vec![N_CLASSES]),
        };
        Ok(Self {
            embedding,
            fact_encoder,
            article_encoder,
            correspondence,
            output,
        })
    }

    fn cells(&self) -> [&LstmCell; 4] {
        [
            &self.fact_encoder.forward,
            &self.fact_encoder.backward,
            &self.article_encoder.forward,
            &self.article_encoder.backward,
        ]
    }

    pub fn trainable(&self) -> Vec<&T> {
        let mut out = Vec::new();
        for cell in self.cells() {
            out.push(&cell.w);
            out.push(&cell.u);
            out.push(&cell.b);
        }
        for layer in [&self.correspondence, &self.output] {
            out.push(&layer.weight);
            out.push(&layer.bias);
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        for cell in [
            &mut self.fact_encoder.forward,
            &mut self.fact_encoder.backward,
            &mut self.article_encoder.forward,
            &mut self.article_encoder.backward,
        ] {
            out.push(&mut cell.w);
            out.push(&mut cell.u);
            out.push(&mut cell.b);
        }
        for layer in [&mut self.correspondence, &mut self.output] {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        out
    }

    pub fn bind(&self, tape: &Tape<f64>) -> BoundDecision {
        self.bind_with(tape, true)
    }

    pub fn bind_frozen(&self, tape: &Tape<f64>) -> BoundDecision {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &Tape<f64>, trainable: bool) -> BoundDecision {
        let leaf = |t: &T| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let cell = |c: &LstmCell| BoundCell {
            w: leaf(&c.w),
            u: leaf(&c.u),
            b: leaf(&c.b),
        };
        BoundDecision {
            fact: BoundBiLstm {
                forward: cell(&self.fact_encoder.forward),
                backward: cell(&self.fact_encoder.backward),
                hidden: self.fact_encoder.hidden(),
            },
            article: BoundBiLstm {
                forward: cell(&self.article_encoder.forward),
                backward: cell(&self.article_encoder.backward),
                hidden: self.article_encoder.hidden(),
            },
            correspondence: (leaf(&self.correspondence.weight), leaf(&self.correspondence.bias)),
            output: (leaf(&self.output.weight), leaf(&self.output.bias)),
        }
    }
}

pub struct BoundDecision {
    pub fact: BoundBiLstm,
    pub article: BoundBiLstm,
    pub correspondence: (V, V),
    pub output: (V, V),
}

impl BoundDecision {
    pub fn trainable(&self) -> Vec<&V> {
        let mut out = Vec::new();
        for enc in [&self.fact, &self.article] {
            for cell in [&enc.forward, &enc.backward] {
                out.push(&cell.w);
                out.push(&cell.u);
                out.push(&cell.b);
            }
        }
        for (w, b) in [&self.correspondence, &self.output] {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn gradients(&self) -> Vec<T> {
        self.trainable()
            .into_iter()
            .map(|v| v.grad().unwrap_or_else(|| T::zeros(v.shape())))
            .collect()
    }
}

fn embed_sequence(
    tape: &Tape<f64>,
    embedding: &EmbeddingTable,
    seq: &TokenSequence,
) -> Result<V, DecisionError> {
    let ids = if seq.true_length == 0 {
        // a silent fact still occupies one step
        &[PAD_ID][..]
    } else {
        seq.unpadded()
    };
    Ok(tape.constant(embedding.lookup(ids)))
}

/// Shared forward pass. Each fact's encoding is concatenated with the
/// sum of its related articles' encodings, mapped through the
/// correspondence layer and summed over facts. Facts are processed in
/// a canonical order so the output is exactly permutation-invariant.
pub fn decision_logits(
    tape: &Tape<f64>,
    bound: &BoundDecision,
    embedding: &EmbeddingTable,
    facts: &[TokenSequence],
    related: &[BTreeSet<String>],
    store: &ArticleStore,
) -> Result<V, DecisionError> {
    if facts.is_empty() || facts.len() != related.len() {
        return Err(DecisionError::BadData(format!(
            "{} facts with {} related sets",
            facts.len(),
            related.len()
        )));
    }
    let mut article_enc: BTreeMap<&String, V> = BTreeMap::new();
    for set in related {
        for id in set {
            if !article_enc.contains_key(id) {
                let (tokens, _) = store
                    .get(id)
                    .ok_or_else(|| DecisionError::MissingArticle(id.clone()))?;
                let emb = embed_sequence(tape, embedding, tokens)?;
                article_enc.insert(id, bilstm_encode(&emb, &bound.article)?);
            }
        }
    }

    let mut order: Vec<usize> = (0..facts.len()).collect();
    order.sort_by(|&a, &b| {
        facts[a]
            .ids
            .cmp(&facts[b].ids)
            .then_with(|| related[a].cmp(&related[b]))
    });

    let zero = tape.constant(T::zeros(vec![2 * bound.article.hidden]));
    let mut total: Option<V> = None;
    for &i in &order {
        let emb = embed_sequence(tape, embedding, &facts[i])?;
        let fact_vec = bilstm_encode(&emb, &bound.fact)?;
        let mut art_sum = zero.clone();
        for id in &related[i] {
            art_sum = art_sum.add(&article_enc[id])?;
        }
        let joint = V::concat_flat(&[fact_vec, art_sum])?;
        let corr = dense(&joint, &bound.correspondence.0, &bound.correspondence.1, true)?;
        total = Some(match total {
            Some(t) => t.add(&corr)?,
            None => corr,
        });
    }
    Ok(dense(
        &total.expect("at least one fact"),
        &bound.output.0,
        &bound.output.1,
        false,
    )?)
}

fn probabilities(logits: &V) -> Result<Vec<f64>, DecisionError> {
    let probs = softmax_axis(&logits.value(), 0)?;
    Ok(probs.data().to_vec())
}

/// Class probabilities from per-fact correspondences.
pub fn classify_fine(
    params: &DecisionParams,
    facts: &[TokenSequence],
    related: &[BTreeSet<String>],
    store: &ArticleStore,
) -> Result<Vec<f64>, DecisionError> {
    let tape = Tape::new();
    let bound = params.bind_frozen(&tape);
    let logits = decision_logits(&tape, &bound, &params.embedding, facts, related, store)?;
    probabilities(&logits)
}

/// Class probabilities from one whole-paragraph interaction with the
/// case-level article set.
pub fn classify_coarse(
    params: &DecisionParams,
    paragraph: &TokenSequence,
    articles: &BTreeSet<String>,
    store: &ArticleStore,
) -> Result<Vec<f64>, DecisionError> {
    let tape = Tape::new();
    let bound = params.bind_frozen(&tape);
    let logits = decision_logits(
        &tape,
        &bound,
        &params.embedding,
        std::slice::from_ref(paragraph),
        std::slice::from_ref(articles),
        store,
    )?;
    probabilities(&logits)
}
