//! Downstream five-class term-of-penalty prediction from fact-article
//! correspondences, fine (per fact) versus coarse (whole paragraph).

mod bilstm;
mod classifier;

pub use bilstm::{bilstm_encode, BiLstm, BoundBiLstm, BoundCell, LstmCell};
pub use classifier::{
    classify_coarse, classify_fine, decision_logits, BoundDecision, DecisionConfig,
    DecisionParams, N_CLASSES,
};

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Case, TokenSequence};
use crate::model::{recommend, ModelConfig, ModelError, ModelParams};
use crate::numerics::{AdamConfig, AdamState, NumericsError, Tape};
use crate::training::{fact_gold, paragraph_sequence, ArticleStore};

#[derive(Error, Debug)]
pub enum DecisionError {
    #[error("{0}")]
    BadData(String),
    #[error("article {0} is not in the store")]
    MissingArticle(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One classification instance: per-fact related-article sets for the
/// fine classifier, or a single paragraph with the case-level set for
/// the coarse one.
#[derive(Debug, Clone)]
pub struct DecisionExample {
    pub facts: Vec<TokenSequence>,
    pub related: Vec<BTreeSet<String>>,
    pub label: u8,
}

/// Fine examples with gold correspondences.
pub fn gold_fine_examples(cases: &[Case]) -> Vec<DecisionExample> {
    cases
        .iter()
        .map(|case| {
            let gold = fact_gold(case);
            DecisionExample {
                facts: case.facts.clone(),
                related: (0..case.facts.len())
                    .map(|i| gold.get(&i).cloned().unwrap_or_default())
                    .collect(),
                label: case.decision_class,
            }
        })
        .collect()
}

/// Coarse examples: one paragraph per case with its cited-article set.
pub fn coarse_examples(cases: &[Case], coarse_length: usize) -> Vec<DecisionExample> {
    cases
        .iter()
        .map(|case| DecisionExample {
            facts: vec![paragraph_sequence(case, coarse_length)],
            related: vec![case.cited_articles.clone()],
            label: case.decision_class,
        })
        .collect()
}

/// Fine examples whose correspondences come from a trained matcher.
pub fn predicted_fine_examples(
    matcher_config: &ModelConfig,
    matcher: &ModelParams,
    cases: &[Case],
    store: &ArticleStore,
) -> Result<Vec<DecisionExample>, DecisionError> {
    let pool = store.inputs();
    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        let mut related = Vec::with_capacity(case.facts.len());
        for fact in &case.facts {
            let recs = recommend(matcher_config, matcher, fact, &pool)?;
            related.push(recs.into_iter().map(|(id, _)| id).collect());
        }
        out.push(DecisionExample {
            facts: case.facts.clone(),
            related,
            label: case.decision_class,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DecisionTrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for DecisionTrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 1e-3,
            max_epochs: 100,
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionEpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug)]
pub struct DecisionOutcome {
    pub params: DecisionParams,
    pub best_epoch: usize,
    pub best_val: DecisionMetrics,
    pub logs: Vec<DecisionEpochLog>,
}

fn batch_step(
    params: &DecisionParams,
    store: &ArticleStore,
    batch: &[&DecisionExample],
) -> Result<(f64, Vec<crate::numerics::Tensor<f64>>), DecisionError> {
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let mut total = None;
    for example in batch {
        let logits = decision_logits(
            &tape,
            &bound,
            &params.embedding,
            &example.facts,
            &example.related,
            store,
        )?;
        let loss = logits.cross_entropy(example.label as usize)?;
        total = Some(match total {
            Some(t) => loss.add(&t)?,
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

/// Trains the classifier with Adam and early stopping on validation
/// macro F1; returns the best epoch's parameters.
pub fn train_decision(
    tcfg: &DecisionTrainConfig,
    mut params: DecisionParams,
    train: &[DecisionExample],
    val: &[DecisionExample],
    store: &ArticleStore,
) -> Result<DecisionOutcome, DecisionError> {
    if train.is_empty() || val.is_empty() {
        return Err(DecisionError::BadData(
            "train and validation sets must be non-empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut adam = AdamState::new(
        AdamConfig::with_lr(tcfg.learning_rate),
        &params.trainable(),
    );

    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_val = evaluate_examples(&params, val, store)?;
    let mut best_f1 = -1.0f64;
    let mut stale = 0usize;
    let mut logs = Vec::new();

    for epoch in 1..=tcfg.max_epochs {
        let mut order: Vec<&DecisionExample> = train.iter().collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (batch_idx, batch) in order.chunks(tcfg.batch_size).enumerate() {
            let (loss, grads) = batch_step(&params, store, batch)?;
            if !loss.is_finite() {
                return Err(DecisionError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let grad_refs: Vec<_> = grads.iter().collect();
            adam.step(&mut params.trainable_mut(), &grad_refs)?;
            epoch_loss += loss;
            n_batches += 1;
        }

        let val_metrics = evaluate_examples(&params, val, store)?;
        logs.push(DecisionEpochLog {
            epoch,
            train_loss: epoch_loss / n_batches as f64,
            val_macro_f1: val_metrics.macro_f1,
        });
        if val_metrics.macro_f1 > best_f1 {
            best_f1 = val_metrics.macro_f1;
            best_val = val_metrics;
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

    Ok(DecisionOutcome {
        params: best_params,
        best_epoch,
        best_val,
        logs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMetrics {
    pub macro_f1: f64,
    pub weighted_f1: f64,
    /// One-vs-rest F1 per class; `None` when the class appears in
    /// neither gold labels nor predictions.
    pub per_class: [Option<f64>; N_CLASSES],
}

pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Macro and support-weighted F1 over argmax predictions.
pub fn evaluate_examples(
    params: &DecisionParams,
    examples: &[DecisionExample],
    store: &ArticleStore,
) -> Result<DecisionMetrics, DecisionError> {
    let mut pairs = Vec::with_capacity(examples.len());
    for example in examples {
        let probs = classify_fine(params, &example.facts, &example.related, store)?;
        pairs.push((example.label as usize, argmax(&probs)));
    }
    Ok(decision_metrics(&pairs))
}

/// F1s from (gold, predicted) class pairs.
pub fn decision_metrics(pairs: &[(usize, usize)]) -> DecisionMetrics {
    let mut tp = [0usize; N_CLASSES];
    let mut fp = [0usize; N_CLASSES];
    let mut fn_ = [0usize; N_CLASSES];
    for &(gold, pred) in pairs {
        if gold == pred {
            tp[gold] += 1;
        } else {
            fp[pred] += 1;
            fn_[gold] += 1;
        }
    }
    let mut per_class = [None; N_CLASSES];
    let mut macro_sum = 0.0;
    let mut macro_n = 0usize;
    let mut weighted_sum = 0.0;
    let mut support_total = 0usize;
    for c in 0..N_CLASSES {
        let present = tp[c] + fp[c] + fn_[c] > 0;
        if !present {
            continue;
        }
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        let f1 = if denom == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / denom as f64
        };
        per_class[c] = Some(f1);
        macro_sum += f1;
        macro_n += 1;
        let support = tp[c] + fn_[c];
        weighted_sum += f1 * support as f64;
        support_total += support;
    }
    DecisionMetrics {
        macro_f1: if macro_n == 0 { 0.0 } else { macro_sum / macro_n as f64 },
        weighted_f1: if support_total == 0 {
            0.0
        } else {
            weighted_sum / support_total as f64
        },
        per_class,
    }
}

/// `source,macroF1,weightedF1,perClassF1_0..4`; excluded classes print
/// as `NA`.
pub fn write_decision_csv(
    path: &Path,
    rows: &[(String, DecisionMetrics)],
) -> Result<(), DecisionError> {
    let mut out = String::from(
        "source,macroF1,weightedF1,perClassF1_0,perClassF1_1,perClassF1_2,perClassF1_3,perClassF1_4\n",
    );
    for (source, m) in rows {
        out.push_str(&format!("{source},{},{}", m.macro_f1, m.weighted_f1));
        for c in m.per_class {
            match c {
                Some(f1) => out.push_str(&format!(",{f1}")),
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_full_marks() {
        let pairs = vec![(0, 0), (1, 1), (2, 2), (1, 1)];
        let m = decision_metrics(&pairs);
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.weighted_f1, 1.0);
    }

    #[test]
    fn two_class_toy_confusion() {
        // class 0: TP=1 FP=1 FN=0 -> 2/3; class 1: TP=0 FP=0 FN=1 -> 0
        let pairs = vec![(0, 0), (1, 0)];
        let m = decision_metrics(&pairs);
        assert!((m.per_class[0].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.per_class[1].unwrap(), 0.0);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_excluded_from_macro() {
        let pairs = vec![(0, 0), (1, 1)];
        let m = decision_metrics(&pairs);
        assert!(m.per_class[2].is_none());
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn csv_has_na_for_excluded_classes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decision.csv");
        let m = decision_metrics(&[(0, 0)]);
        write_decision_csv(&path, &[("fine_gold".into(), m)]).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert!(content.starts_with("source,macroF1,weightedF1"));
        assert!(content.contains("fine_gold,1,1,1,NA,NA,NA,NA"));
    }

    #[test]
    fn argmax_picks_first_max() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5, 0.2]), 1);
    }
}
