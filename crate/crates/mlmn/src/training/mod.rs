//! Matcher training loop with fresh per-epoch negatives, Adam, early
//! stopping on validation F1, and fine/coarse evaluation.

mod metrics;

pub use metrics::{
    read_ratio_csv, write_epoch_log, write_metrics_csv, write_ratio_csv, EpochLog, Metrics,
    RatioRow,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{
    sample_negatives, Case, CorpusError, MatchExample, NegativeScope, TokenSequence, PAD_ID,
};
use crate::model::{forward, match_score, ArticleInput, ModelConfig, ModelError, ModelParams};
use crate::numerics::{AdamConfig, AdamState, Tape, Var};
use crate::parser::KnowledgeMatrix;

#[derive(Error, Debug)]
pub enum TrainingError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("article {0} is not in the store")]
    MissingArticle(String),
    #[error("{0}")]
    BadData(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Candidate pool: encoded article tokens plus aligned knowledge rows,
/// keyed by article id. Iteration order is the id order.
#[derive(Debug, Clone, Default)]
pub struct ArticleStore {
    entries: BTreeMap<String, (TokenSequence, KnowledgeMatrix)>,
}

impl ArticleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: String, tokens: TokenSequence, knowledge: KnowledgeMatrix) {
        self.entries.insert(id, (tokens, knowledge));
    }

    pub fn get(&self, id: &str) -> Option<&(TokenSequence, KnowledgeMatrix)> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &(TokenSequence, KnowledgeMatrix))> {
        self.entries.iter()
    }

    pub fn inputs(&self) -> Vec<ArticleInput> {
        self.entries
            .iter()
            .map(|(id, (tokens, knowledge))| ArticleInput {
                article_id: id.clone(),
                tokens: tokens.clone(),
                knowledge: knowledge.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub negative_ratio: usize,
    pub negative_scope: NegativeScope,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-3,
            max_epochs: 100,
            patience: 5,
            negative_ratio: 5,
            negative_scope: NegativeScope::PerFact,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_val: Metrics,
    pub logs: Vec<EpochLog>,
}

/// Gold article ids per fact index.
pub fn fact_gold(case: &Case) -> BTreeMap<usize, BTreeSet<String>> {
    let mut gold: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (fact_idx, article_id) in &case.fact_article_pairs {
        gold.entry(*fact_idx).or_default().insert(article_id.clone());
    }
    gold
}

/// All gold (fact, article) pairs of the cases as positive examples,
/// each carrying its fact's full gold set for negative exclusion.
fn positives(cases: &[Case]) -> Vec<(MatchExample, BTreeSet<String>)> {
    let mut out = Vec::new();
    for case in cases {
        let gold = fact_gold(case);
        for (fact_idx, articles) in &gold {
            for article_id in articles {
                out.push((
                    MatchExample {
                        fact: case.facts[*fact_idx].clone(),
                        article_id: article_id.clone(),
                        label: true,
                    },
                    articles.clone(),
                ));
            }
        }
    }
    out
}

/// Concatenates a case's facts into one paragraph sequence of `length`.
pub fn paragraph_sequence(case: &Case, length: usize) -> TokenSequence {
    let mut ids: Vec<u32> = Vec::new();
    for fact in &case.facts {
        ids.extend_from_slice(fact.unpadded());
    }
    ids.truncate(length);
    let true_length = ids.len();
    ids.resize(length, PAD_ID);
    TokenSequence { ids, true_length }
}

fn batch_loss(
    config: &ModelConfig,
    params: &ModelParams,
    store: &ArticleStore,
    batch: &[MatchExample],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<crate::numerics::Tensor<f64>>), TrainingError> {
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let mut total: Option<Var<f64>> = None;
    for example in batch {
        let (article, q) = store
            .get(&example.article_id)
            .ok_or_else(|| TrainingError::MissingArticle(example.article_id.clone()))?;
        let out = forward(
            &tape,
            config,
            &bound,
            &params.embedding,
            &example.fact,
            article,
            q,
            true,
            rng,
        )?;
        let label = example.label as usize;
        let loss = out.logits.cross_entropy(label)?;
        total = Some(match total {
            Some(t) => t.add(&loss)?,
            None => loss,
        });
    }
    let mean = total
        .expect("non-empty batch")
        .scale(1.0 / batch.len() as f64);
    let value = mean.value().scalar_value();
    mean.backward()?;
    Ok((value, bound.gradients()))
}

/// Trains the matcher. Each epoch shuffles the positives, draws fresh
/// negatives at the configured ratio, and minimizes mean cross-entropy
/// with Adam; early stopping keeps the best validation-F1 parameters.
pub fn train_matcher(
    config: &ModelConfig,
    tcfg: &TrainConfig,
    mut params: ModelParams,
    train_cases: &[Case],
    val_cases: &[Case],
    store: &ArticleStore,
) -> Result<TrainOutcome, TrainingError> {
    if train_cases.is_empty() || val_cases.is_empty() {
        return Err(TrainingError::BadData(
            "train and validation sets must be non-empty".into(),
        ));
    }
    let pos = positives(train_cases);
    if pos.is_empty() {
        return Err(TrainingError::BadData("no positive pairs in training set".into()));
    }
    let mut sampling_pool: Vec<(TokenSequence, BTreeSet<String>)> = pos
        .iter()
        .map(|(ex, gold)| (ex.fact.clone(), gold.clone()))
        .collect();
    // facts with no gold article still need negatives, otherwise the
    // model never trains on near-miss facts and fires on them at eval
    for case in train_cases {
        let gold = fact_gold(case);
        for (fact_idx, fact) in case.facts.iter().enumerate() {
            if !gold.contains_key(&fact_idx) {
                sampling_pool.push((fact.clone(), BTreeSet::new()));
            }
        }
    }
    let candidate_ids = store.ids();

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut adam = AdamState::new(
        AdamConfig::with_lr(tcfg.learning_rate),
        &params.trainable(),
    );

    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_val = Metrics::from_counts(0, 0, 0);
    let mut best_f1 = -1.0f64;
    let mut stale = 0usize;
    let mut logs = Vec::new();

    for epoch in 1..=tcfg.max_epochs {
        let negatives = sample_negatives(
            &sampling_pool,
            &candidate_ids,
            tcfg.negative_ratio,
            tcfg.negative_scope,
            &mut rng,
        );
        let mut examples: Vec<MatchExample> =
            pos.iter().map(|(ex, _)| ex.clone()).collect();
        examples.extend(negatives);
        examples.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (batch_idx, batch) in examples.chunks(tcfg.batch_size).enumerate() {
            let (loss, grads) = batch_loss(config, &params, store, batch, &mut rng)?;
            if !loss.is_finite() {
                return Err(TrainingError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let grad_refs: Vec<_> = grads.iter().collect();
            adam.step(&mut params.trainable_mut(), &grad_refs)?;
            epoch_loss += loss;
            n_batches += 1;
        }
        let train_loss = epoch_loss / n_batches as f64;

        let val = evaluate_fine(config, &params, val_cases, store)?;
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_precision: val.precision,
            val_recall: val.recall,
            val_f1: val.f1,
        });

        if val.f1 > best_f1 {
            best_f1 = val.f1;
            best_val = val;
            best_epoch = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= tcfg.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        best_epoch,
        best_val,
        logs,
    })
}

/// Pairwise evaluation: every (fact, candidate article) combination is
/// scored against the full store; no sampling.
pub fn evaluate_fine(
    config: &ModelConfig,
    params: &ModelParams,
    cases: &[Case],
    store: &ArticleStore,
) -> Result<Metrics, TrainingError> {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for case in cases {
        let gold = fact_gold(case);
        for (fact_idx, fact) in case.facts.iter().enumerate() {
            let empty = BTreeSet::new();
            let gold_set = gold.get(&fact_idx).unwrap_or(&empty);
            for (article_id, (article, q)) in store.iter() {
                let pred = match_score(config, params, fact, article, q)?;
                match (pred.matched, gold_set.contains(article_id)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseMode {
    /// Union of per-fact recommendations against case-level gold.
    FineUnion,
    /// One whole-paragraph recommendation per case; the model must
    /// have been trained on paragraph-length facts.
    CoarseModel,
}

/// Case-level evaluation against the union of gold articles.
pub fn evaluate_coarse(
    config: &ModelConfig,
    params: &ModelParams,
    cases: &[Case],
    store: &ArticleStore,
    mode: CoarseMode,
) -> Result<Metrics, TrainingError> {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for case in cases {
        let mut predicted: BTreeSet<String> = BTreeSet::new();
        match mode {
            CoarseMode::FineUnion => {
                for fact in &case.facts {
                    for (article_id, (article, q)) in store.iter() {
                        if match_score(config, params, fact, article, q)?.matched {
                            predicted.insert(article_id.clone());
                        }
                    }
                }
            }
            CoarseMode::CoarseModel => {
                let paragraph = paragraph_sequence(case, config.fact_length);
                for (article_id, (article, q)) in store.iter() {
                    if match_score(config, params, &paragraph, article, q)?.matched {
                        predicted.insert(article_id.clone());
                    }
                }
            }
        }
        let gold = &case.cited_articles;
        tp += predicted.intersection(gold).count();
        fp += predicted.difference(gold).count();
        fn_ += gold.difference(&predicted).count();
    }
    Ok(Metrics::from_counts(tp, fp, fn_))
}

/// Trains one model per ratio from the same initial parameters and
/// seed, reporting validation metrics of the best epoch.
pub fn sweep_ratio(
    config: &ModelConfig,
    tcfg: &TrainConfig,
    init: &ModelParams,
    train_cases: &[Case],
    val_cases: &[Case],
    store: &ArticleStore,
    ratios: &[usize],
) -> Result<Vec<RatioRow>, TrainingError> {
    if ratios.is_empty() {
        return Err(TrainingError::BadData("ratio list is empty".into()));
    }
    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let cfg = TrainConfig {
            negative_ratio: ratio,
            ..tcfg.clone()
        };
        let outcome = train_matcher(config, &cfg, init.clone(), train_cases, val_cases, store)?;
        rows.push(RatioRow {
            ratio,
            metrics: outcome.best_val,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EmbeddingTable;
    use crate::parser::PAD_ROW;

    fn seq(ids: Vec<u32>, len: usize) -> TokenSequence {
        let true_length = ids.len().min(len);
        let mut ids = ids;
        ids.truncate(len);
        ids.resize(len, PAD_ID);
        TokenSequence { ids, true_length }
    }

    fn toy_world() -> (ModelConfig, ModelParams, Vec<Case>, ArticleStore) {
        let config = ModelConfig::tiny(4, 5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let emb = EmbeddingTable::random(20, 4, &mut rng);
        let params = ModelParams::init(&config, emb, 5).unwrap();

        let mut store = ArticleStore::new();
        for (i, id) in ["a1", "a2", "a3"].iter().enumerate() {
            let tokens = seq(vec![2 + i as u32 * 3, 3 + i as u32 * 3, 4 + i as u32 * 3], 6);
            let mut rows = vec![[1, 0], [1, 0], [0, 1]];
            rows.resize(6, PAD_ROW);
            store.insert(id.to_string(), tokens, KnowledgeMatrix::from_rows(rows));
        }

        let mut cases = Vec::new();
        for c in 0..6 {
            let fact = seq(vec![2 + c as u32, 5, 8], 5);
            let article = format!("a{}", (c % 3) + 1);
            cases.push(Case {
                case_id: format!("c{c}"),
                facts: vec![fact],
                fact_texts: vec![String::new()],
                cited_articles: [article.clone()].into_iter().collect(),
                fact_article_pairs: [(0usize, article)].into_iter().collect(),
                decision_class: 0,
            });
        }
        (config, params, cases, store)
    }

    #[test]
    fn zero_lr_patience_one_stops_after_two_epochs() {
        let (config, params, cases, store) = toy_world();
        let tcfg = TrainConfig {
            learning_rate: 0.0,
            patience: 1,
            max_epochs: 50,
            batch_size: 8,
            ..Default::default()
        };
        let outcome =
            train_matcher(&config, &tcfg, params, &cases[..4], &cases[4..], &store).unwrap();
        assert_eq!(outcome.logs.len(), 2);
        assert_eq!(outcome.best_epoch, 1);
    }

    #[test]
    fn same_seed_identical_logs() {
        let (config, params, cases, store) = toy_world();
        let tcfg = TrainConfig {
            max_epochs: 3,
            patience: 10,
            batch_size: 8,
            ..Default::default()
        };
        let a = train_matcher(&config, &tcfg, params.clone(), &cases[..4], &cases[4..], &store)
            .unwrap();
        let b =
            train_matcher(&config, &tcfg, params, &cases[..4], &cases[4..], &store).unwrap();
        assert_eq!(a.logs, b.logs);
    }

    #[test]
    fn evaluation_counts_cover_gold() {
        let (config, params, cases, store) = toy_world();
        let m = evaluate_fine(&config, &params, &cases, &store).unwrap();
        let gold_pairs: usize = cases.iter().map(|c| c.fact_article_pairs.len()).sum();
        assert_eq!(m.tp + m.fn_, gold_pairs);
    }

    #[test]
    fn evaluation_does_not_mutate_params() {
        let (config, params, cases, store) = toy_world();
        let before = params.clone();
        evaluate_fine(&config, &params, &cases, &store).unwrap();
        evaluate_coarse(&config, &params, &cases, &store, CoarseMode::FineUnion).unwrap();
        assert_eq!(before, params);
    }

    #[test]
    fn coarse_set_arithmetic() {
        // facts predict {1,3} and {3,5}, gold {1,3,4}: TP=2 FP=1 FN=1
        let predicted: BTreeSet<String> =
            ["1", "3", "5"].iter().map(|s| s.to_string()).collect();
        let gold: BTreeSet<String> = ["1", "3", "4"].iter().map(|s| s.to_string()).collect();
        let tp = predicted.intersection(&gold).count();
        let fp = predicted.difference(&gold).count();
        let fn_ = gold.difference(&predicted).count();
        let m = Metrics::from_counts(tp, fp, fn_);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn paragraph_concatenates_and_pads() {
        let (_, _, cases, _) = toy_world();
        let p = paragraph_sequence(&cases[0], 8);
        assert_eq!(p.true_length, 3);
        assert_eq!(p.padded_length(), 8);
        assert_eq!(&p.ids[..3], cases[0].facts[0].unpadded());
    }

    #[test]
    fn sweep_emits_one_row_per_ratio() {
        let (config, params, cases, store) = toy_world();
        let tcfg = TrainConfig {
            max_epochs: 1,
            batch_size: 8,
            ..Default::default()
        };
        let rows = sweep_ratio(
            &config,
            &tcfg,
            &params,
            &cases[..4],
            &cases[4..],
            &store,
            &[1, 2],
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].ratio, 1);
        assert_eq!(rows[1].ratio, 2);
    }

    #[test]
    fn missing_article_reported() {
        let (config, params, mut cases, store) = toy_world();
        cases[0].fact_article_pairs = [(0usize, "ghost".to_string())].into_iter().collect();
        let tcfg = TrainConfig {
            max_epochs: 1,
            batch_size: 4,
            ..Default::default()
        };
        let err = train_matcher(&config, &tcfg, params, &cases[..4], &cases[4..], &store)
            .unwrap_err();
        assert!(matches!(err, TrainingError::MissingArticle(_)));
    }
}
