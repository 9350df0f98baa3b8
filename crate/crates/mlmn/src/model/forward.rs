//! Forward pass of the matcher: multi-level pattern extraction,
//! attention-over-attention alignment, knowledge-aware fusion and the
//! match prediction head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::corpus::{EmbeddingTable, TokenSequence};
use crate::numerics::{dense, dropout, softmax_axis, Tape, Tensor, Var};
use crate::parser::KnowledgeMatrix;

use super::config::{AoaDirection, CompressOp, ModelConfig};
use super::params::{BoundParams, ModelParams};
use super::ModelError;

type V = Var<f64>;

/// Index of the "match" class in the two-way logits.
pub const MATCH_CLASS: usize = 1;

/// One level's attention alignment between a fact and an article.
pub struct Alignment {
    /// Similarity matrix, `[m, n]`.
    pub sim: V,
    /// Row-wise softmax of `sim`: fact-to-article attention.
    pub alpha: V,
    /// Column-wise softmax of `sim`: article-to-fact attention.
    pub beta: V,
    /// Compressed attention over the source side.
    pub nu: V,
    /// Comprehensive weights over the target side.
    pub omega: V,
}

/// Embedding plus each convolution layer's output, all `[len, width]`.
/// Index 0 is the raw embedding.
pub fn extract_patterns(
    tape: &Tape<f64>,
    embedding: &EmbeddingTable,
    ids: &[u32],
    conv: &[(V, V)],
) -> Result<Vec<V>, ModelError> {
    let mut levels = Vec::with_capacity(conv.len() + 1);
    let mut current = tape.constant(embedding.lookup(ids));
    levels.push(current.clone());
    for (kernel, bias) in conv {
        current = current.conv1d_same(kernel, bias)?.relu();
        levels.push(current.clone());
    }
    Ok(levels)
}

/// Attention-over-attention between a fact pattern `[m, d]` and an
/// article pattern `[n, d]`. The compressed vector of the source side
/// reweights the target-side attention into one comprehensive weight
/// per target word.
pub fn aoa_align(
    fact: &V,
    article: &V,
    direction: AoaDirection,
    compress: CompressOp,
    sim_mask: Option<&V>,
) -> Result<Alignment, ModelError> {
    let mut sim = fact.matmul(&article.transpose())?;
    if let Some(mask) = sim_mask {
        sim = sim.add(mask)?;
    }
    let shape = sim.shape();
    let (m, n) = (shape[0], shape[1]);
    let alpha = sim.softmax(1)?;
    let beta = sim.softmax(0)?;
    let (nu, omega) = match direction {
        AoaDirection::FactToArticle => {
            let mut nu = beta.row_sum()?;
            if compress == CompressOp::Avg {
                nu = nu.scale(1.0 / n as f64);
            }
            let omega = nu
                .reshape(vec![1, m])?
                .matmul(&alpha)?
                .reshape(vec![n])?;
            (nu, omega)
        }
        AoaDirection::ArticleToFact => {
            let mut nu = alpha.transpose().row_sum()?;
            if compress == CompressOp::Avg {
                nu = nu.scale(1.0 / m as f64);
            }
            let omega = beta.matmul(&nu.reshape(vec![n, 1])?)?.reshape(vec![m])?;
            (nu, omega)
        }
    };
    Ok(Alignment {
        sim,
        alpha,
        beta,
        nu,
        omega,
    })
}

/// Builds one level's matching pattern: target rows weighted by omega,
/// concatenated with per-word knowledge, mapped through G1 and pooled.
pub fn fuse(omega: &V, pattern: &V, knowledge: &V, g1: &(V, V)) -> Result<V, ModelError> {
    let weighted = pattern.row_scale(omega)?;
    let with_knowledge = weighted.concat_cols(knowledge)?;
    let mapped = dense(&with_knowledge, &g1.0, &g1.1, true)?;
    Ok(mapped.max_pool_last()?)
}

/// Full forward pass for one fact/article pair.
pub struct Forward {
    pub logits: V,
    /// Matching pattern per level, keyed by level index.
    pub patterns: Vec<(usize, V)>,
    pub alignments: Vec<(usize, Alignment)>,
}

fn check_lengths(
    config: &ModelConfig,
    fact: &TokenSequence,
    article: &TokenSequence,
    q: &KnowledgeMatrix,
) -> Result<(), ModelError> {
    if fact.padded_length() != config.fact_length {
        return Err(ModelError::BadConfig(format!(
            "fact length {} != configured {}",
            fact.padded_length(),
            config.fact_length
        )));
    }
    if article.padded_length() != config.article_length || q.len() != config.article_length {
        return Err(ModelError::BadConfig(format!(
            "article/knowledge length {}/{} != configured {}",
            article.padded_length(),
            q.len(),
            config.article_length
        )));
    }
    Ok(())
}

fn padding_mask(fact: &TokenSequence, article: &TokenSequence) -> Tensor<f64> {
    let (m, n) = (fact.padded_length(), article.padded_length());
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            if i >= fact.true_length || j >= article.true_length {
                data[i * n + j] = -1e9;
            }
        }
    }
    Tensor::from_vec(vec![m, n], data).expect("mask")
}

pub fn forward(
    tape: &Tape<f64>,
    config: &ModelConfig,
    bound: &BoundParams,
    embedding: &EmbeddingTable,
    fact: &TokenSequence,
    article: &TokenSequence,
    q: &KnowledgeMatrix,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Forward, ModelError> {
    check_lengths(config, fact, article, q)?;
    let fact_patterns = extract_patterns(tape, embedding, &fact.ids, &bound.fact_conv)?;
    let article_patterns = extract_patterns(tape, embedding, &article.ids, &bound.article_conv)?;

    let mask = if config.mask_padding {
        Some(tape.constant(padding_mask(fact, article)))
    } else {
        None
    };
    // the weighted side carries the knowledge; when integrating into
    // the fact there is no clause structure, so every word reads as a
    // premise word
    let knowledge = match config.aoa_direction {
        AoaDirection::FactToArticle => tape.constant(q.as_tensor()),
        AoaDirection::ArticleToFact => {
            let m = config.fact_length;
            let data: Vec<f64> = (0..m).flat_map(|_| [1.0, 0.0]).collect();
            tape.constant(Tensor::from_vec(vec![m, 2], data).expect("neutral knowledge"))
        }
    };

    let mut patterns = Vec::new();
    let mut alignments = Vec::new();
    for (slot, &level) in config.levels().iter().enumerate() {
        let alignment = aoa_align(
            &fact_patterns[level],
            &article_patterns[level],
            config.aoa_direction,
            config.compress_op,
            mask.as_ref(),
        )?;
        let target = match config.aoa_direction {
            AoaDirection::FactToArticle => &article_patterns[level],
            AoaDirection::ArticleToFact => &fact_patterns[level],
        };
        let h = fuse(&alignment.omega, target, &knowledge, &bound.g1[slot])?;
        patterns.push((level, h));
        alignments.push((level, alignment));
    }

    let parts: Vec<V> = config
        .prediction_levels()
        .iter()
        .map(|l| {
            patterns
                .iter()
                .find(|(level, _)| level == l)
                .map(|(_, h)| h.clone())
                .expect("prediction level computed")
        })
        .collect();
    let features = V::concat_flat(&parts)?;
    let features = dropout(&features, config.dropout, training, rng)?;
    let hidden = dense(&features, &bound.g2_hidden.0, &bound.g2_hidden.1, true)?;
    let logits = dense(&hidden, &bound.g2_out.0, &bound.g2_out.1, false)?;
    Ok(Forward {
        logits,
        patterns,
        alignments,
    })
}

/// Inference output for one pair.
#[derive(Debug, Clone)]
pub struct MatchPrediction {
    pub prob_match: f64,
    pub matched: bool,
    /// Matching pattern values per level.
    pub patterns: Vec<(usize, Vec<f64>)>,
}

/// Scores one pair with a fresh constant-bound tape.
pub fn match_score(
    config: &ModelConfig,
    params: &ModelParams,
    fact: &TokenSequence,
    article: &TokenSequence,
    q: &KnowledgeMatrix,
) -> Result<MatchPrediction, ModelError> {
    let tape = Tape::new();
    let bound = params.bind_frozen(&tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0); // inference ignores dropout
    let out = forward(
        &tape,
        config,
        &bound,
        &params.embedding,
        fact,
        article,
        q,
        false,
        &mut rng,
    )?;
    let probs = softmax_axis(&out.logits.value(), 0)?;
    let prob_match = probs.data()[MATCH_CLASS];
    if !prob_match.is_finite() {
        return Err(ModelError::Numeric("non-finite match probability".into()));
    }
    Ok(MatchPrediction {
        prob_match,
        matched: prob_match > config.threshold,
        patterns: out
            .patterns
            .iter()
            .map(|(level, h)| (*level, h.value().data().to_vec()))
            .collect(),
    })
}

/// One scoreable article: its padded tokens and aligned knowledge rows.
#[derive(Debug, Clone)]
pub struct ArticleInput {
    pub article_id: String,
    pub tokens: TokenSequence,
    pub knowledge: KnowledgeMatrix,
}

/// Articles whose match probability clears the threshold, best first.
/// Ties order by article id so the ranking is reproducible.
pub fn recommend(
    config: &ModelConfig,
    params: &ModelParams,
    fact: &TokenSequence,
    articles: &[ArticleInput],
) -> Result<Vec<(String, f64)>, ModelError> {
    let mut scored = Vec::new();
    for article in articles {
        let pred = match_score(config, params, fact, &article.tokens, &article.knowledge)?;
        if pred.matched {
            scored.push((article.article_id.clone(), pred.prob_match));
        }
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(scored)
}
