//! Corpus data model: tokenization, padding, cases, splits and
//! negative sampling.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, PAD_ID};
use super::CorpusError;

/// Pluggable text tokenizer.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Whitespace tokenization with a per-character fallback for
/// unsegmented CJK runs.
#[derive(Debug, Default, Clone)]
pub struct DefaultTokenizer;

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{3000}'..='\u{303F}'
        | '\u{FF00}'..='\u{FFEF}')
}

impl Tokenizer for DefaultTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            if chunk.chars().any(is_cjk) {
                // emit CJK chars one by one, keep non-CJK runs together
                let mut run = String::new();
                for c in chunk.chars() {
                    if is_cjk(c) {
                        if !run.is_empty() {
                            out.push(std::mem::take(&mut run));
                        }
                        out.push(c.to_string());
                    } else {
                        run.push(c);
                    }
                }
                if !run.is_empty() {
                    out.push(run);
                }
            } else {
                out.push(chunk.to_string());
            }
        }
        out
    }
}

/// Token ids padded to a fixed length, remembering the true length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub true_length: usize,
}

impl TokenSequence {
    pub fn padded_length(&self) -> usize {
        self.ids.len()
    }

    pub fn unpadded(&self) -> &[u32] {
        &self.ids[..self.true_length]
    }
}

/// Maps tokens to ids, truncates to `length` and right-pads with PAD.
pub fn encode_and_pad<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    length: usize,
) -> TokenSequence {
    assert!(length >= 1, "padded length must be >= 1");
    let mut ids: Vec<u32> = tokens
        .iter()
        .take(length)
        .map(|t| vocab.id(t.as_ref()))
        .collect();
    let true_length = ids.len();
    ids.resize(length, PAD_ID);
    TokenSequence { ids, true_length }
}

/// Splits a fact section into sentence-level facts on terminal
/// punctuation, dropping empty fragments.
pub fn split_facts(section: &str) -> Vec<String> {
    split_facts_with(section, &['。', '！', '？', '.'])
}

pub fn split_facts_with(section: &str, delimiters: &[char]) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in section.chars() {
        if delimiters.contains(&c) {
            let trimmed = current.trim();
            if !trimmed.is_empty() {
                out.push(trimmed.to_string());
            }
            current.clear();
        } else {
            current.push(c);
        }
    }
    let trimmed = current.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
    out
}

/// One case as stored in the cases JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub facts: Vec<String>,
    pub articles: Vec<String>,
    pub pairs: Vec<(usize, String)>,
    pub decision: u8,
}

/// One law article as stored in the articles JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ArticleRecord {
    pub article_id: String,
    pub law: String,
    pub text: String,
}

/// Encoded case ready for model consumption.
#[derive(Debug, Clone)]
pub struct Case {
    pub case_id: String,
    pub facts: Vec<TokenSequence>,
    pub fact_texts: Vec<String>,
    pub cited_articles: BTreeSet<String>,
    pub fact_article_pairs: BTreeSet<(usize, String)>,
    pub decision_class: u8,
}

impl Case {
    pub fn from_record(
        record: &CaseRecord,
        vocab: &Vocabulary,
        tokenizer: &dyn Tokenizer,
        fact_length: usize,
        known_articles: &BTreeSet<String>,
    ) -> Result<Self, CorpusError> {
        if record.decision > 4 {
            return Err(CorpusError::InvalidCase {
                case_id: record.case_id.clone(),
                reason: format!("decision class {} outside 0..=4", record.decision),
            });
        }
        let mut pairs = BTreeSet::new();
        for (fact_idx, article_id) in &record.pairs {
            if *fact_idx >= record.facts.len() {
                return Err(CorpusError::InvalidCase {
                    case_id: record.case_id.clone(),
                    reason: format!("pair references fact index {fact_idx} out of range"),
                });
            }
            if !known_articles.contains(article_id) {
                return Err(CorpusError::InvalidCase {
                    case_id: record.case_id.clone(),
                    reason: format!("pair references unknown article {article_id}"),
                });
            }
            pairs.insert((*fact_idx, article_id.clone()));
        }
        let facts = record
            .facts
            .iter()
            .map(|f| encode_and_pad(&tokenizer.tokenize(f), vocab, fact_length))
            .collect();
        Ok(Self {
            case_id: record.case_id.clone(),
            facts,
            fact_texts: record.facts.clone(),
            cited_articles: record.articles.iter().cloned().collect(),
            fact_article_pairs: pairs,
            decision_class: record.decision,
        })
    }

    /// Gold article ids for one fact.
    pub fn gold_articles(&self, fact_idx: usize) -> BTreeSet<&str> {
        self.fact_article_pairs
            .iter()
            .filter(|(i, _)| *i == fact_idx)
            .map(|(_, a)| a.as_str())
            .collect()
    }
}

/// One (fact, article) training example.
#[derive(Debug, Clone)]
pub struct MatchExample {
    pub fact: TokenSequence,
    pub article_id: String,
    pub label: bool,
}

/// Case-granularity split: floor(f_train*N) / floor(f_val*N) / rest,
/// after a seed-deterministic shuffle.
pub fn split_dataset<T: Clone>(
    cases: &[T],
    fractions: (f64, f64, f64),
    rng: &mut impl Rng,
) -> Result<(Vec<T>, Vec<T>, Vec<T>), CorpusError> {
    let (ft, fv, fe) = fractions;
    if (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadFractions(ft, fv, fe));
    }
    if cases.len() < 3 {
        return Err(CorpusError::TooFewCases(cases.len()));
    }
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.shuffle(rng);
    let n = cases.len();
    let n_train = (ft * n as f64).floor() as usize;
    let n_val = (fv * n as f64).floor() as usize;
    let train = order[..n_train].iter().map(|&i| cases[i].clone()).collect();
    let val = order[n_train..n_train + n_val]
        .iter()
        .map(|&i| cases[i].clone())
        .collect();
    let test = order[n_train + n_val..]
        .iter()
        .map(|&i| cases[i].clone())
        .collect();
    Ok((train, val, test))
}

/// How the negative pool is scoped when drawing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeScope {
    /// r negatives drawn per positive from that fact's non-gold pool.
    PerFact,
    /// r * positives negatives drawn over the whole batch.
    PerBatch,
}

/// Draws negatives for a batch of positive examples. `candidates` is
/// the full article id pool; gold pairs of the owning case are always
/// excluded. The count is capped by the available pool.
pub fn sample_negatives(
    positives: &[(TokenSequence, BTreeSet<String>)],
    candidates: &[String],
    ratio: usize,
    scope: NegativeScope,
    rng: &mut impl Rng,
) -> Vec<MatchExample> {
    let mut negatives = Vec::new();
    match scope {
        NegativeScope::PerFact => {
            for (fact, gold) in positives {
                let pool: Vec<&String> =
                    candidates.iter().filter(|a| !gold.contains(*a)).collect();
                let take = ratio.min(pool.len());
                let chosen = pool.choose_multiple(rng, take);
                for article in chosen {
                    negatives.push(MatchExample {
                        fact: fact.clone(),
                        article_id: (*article).clone(),
                        label: false,
                    });
                }
            }
        }
        NegativeScope::PerBatch => {
            // flat pool of every admissible (fact, article) combination
            let mut flat: Vec<(usize, &String)> = Vec::new();
            for (idx, (_, gold)) in positives.iter().enumerate() {
                for article in candidates.iter().filter(|a| !gold.contains(*a)) {
                    flat.push((idx, article));
                }
            }
            let want = ratio * positives.len();
            let take = want.min(flat.len());
            for (idx, article) in flat.choose_multiple(rng, take) {
                negatives.push(MatchExample {
                    fact: positives[*idx].0.clone(),
                    article_id: (*article).clone(),
                    label: false,
                });
            }
        }
    }
    negatives
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &std::path::Path) -> Result<Vec<T>, CorpusError> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
            path: path.display().to_string(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &std::path::Path, items: &[T]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
