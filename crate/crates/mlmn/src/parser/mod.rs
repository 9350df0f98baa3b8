//! Law-article parsing into premise/conclusion clauses and the
//! per-word knowledge matrix.

mod clause;
mod features;
mod forest;
mod knowledge;

pub use clause::{split_clauses, Clause, ClauseLabel};
pub use features::{featurize, ClauseFeatures, Lexicon};
pub use forest::{train_forest, RandomForest};
pub use knowledge::{project_knowledge, KnowledgeMatrix, PAD_ROW};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{encode_and_pad, LabeledClause, TokenSequence, Tokenizer, Vocabulary};

#[derive(Error, Debug)]
pub enum ParserError {
    #[error("cannot read {path}: {source}")]
    LexiconIo {
        path: String,
        source: std::io::Error,
    },
    #[error("bad lexicon: {0}")]
    BadLexicon(String),
    #[error("bad training set: {0}")]
    BadTrainingSet(String),
    #[error("feature width mismatch: forest expects {expected}, got {got}")]
    FeatureWidth { expected: usize, got: usize },
    #[error("token {word_idx} not covered by any clause span")]
    UncoveredToken { word_idx: usize },
}

/// Parsed-article JSONL record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParsedArticleRecord {
    pub article_id: String,
    pub clauses: Vec<LabeledClause>,
}

/// One fully processed article: filtered tokens, labeled clauses with
/// spans over those tokens, and the padded knowledge matrix.
#[derive(Debug, Clone)]
pub struct ParsedArticle {
    pub article_id: String,
    pub tokens: Vec<String>,
    pub clauses: Vec<Clause>,
}

/// Clause classifier plus the token filtering used for articles
/// (punctuation always removed, stop words when configured).
pub struct ArticleParser<'a> {
    pub forest: &'a RandomForest,
    pub lexicon: &'a Lexicon,
    pub stopwords: HashSet<String>,
}

fn is_punct_token(token: &str) -> bool {
    token
        .chars()
        .all(|c| matches!(c, '，' | '；' | '：' | '、' | ',' | ';' | '。' | '！' | '？' | '.'))
}

impl<'a> ArticleParser<'a> {
    pub fn new(forest: &'a RandomForest, lexicon: &'a Lexicon) -> Self {
        Self {
            forest,
            lexicon,
            stopwords: HashSet::new(),
        }
    }

    pub fn with_stopwords(mut self, stopwords: HashSet<String>) -> Self {
        self.stopwords = stopwords;
        self
    }

    fn keep_token(&self, token: &str) -> bool {
        !is_punct_token(token) && !self.stopwords.contains(token)
    }

    /// Splits, classifies and tokenizes one article. Clause spans are
    /// recomputed over the filtered token stream so they tile it.
    pub fn parse(
        &self,
        article_id: &str,
        text: &str,
        tokenizer: &dyn Tokenizer,
    ) -> Result<ParsedArticle, ParserError> {
        let mut clauses = split_clauses(text);
        let n = clauses.len();
        for (idx, clause) in clauses.iter_mut().enumerate() {
            let features = featurize(clause, idx, n, self.lexicon);
            clause.label = self.forest.predict(&features)?;
        }
        let mut tokens = Vec::new();
        let mut offset = 0usize;
        for clause in clauses.iter_mut() {
            let clause_tokens: Vec<String> = tokenizer
                .tokenize(&clause.text)
                .into_iter()
                .filter(|t| self.keep_token(t))
                .collect();
            clause.span = (offset, offset + clause_tokens.len());
            offset += clause_tokens.len();
            tokens.extend(clause_tokens);
        }
        Ok(ParsedArticle {
            article_id: article_id.to_string(),
            tokens,
            clauses,
        })
    }
}

impl ParsedArticle {
    /// Rebuilds the token stream and spans from a stored record,
    /// applying the same punctuation filtering as parsing.
    pub fn from_record(record: &ParsedArticleRecord, tokenizer: &dyn Tokenizer) -> Self {
        let mut tokens = Vec::new();
        let mut clauses = Vec::new();
        let mut offset = 0usize;
        for labeled in &record.clauses {
            let clause_tokens: Vec<String> = tokenizer
                .tokenize(&labeled.text)
                .into_iter()
                .filter(|t| !is_punct_token(t))
                .collect();
            let label = match labeled.label.as_str() {
                "conclusion" => ClauseLabel::Conclusion,
                _ => ClauseLabel::Premise,
            };
            clauses.push(Clause {
                text: labeled.text.clone(),
                span: (offset, offset + clause_tokens.len()),
                label,
            });
            offset += clause_tokens.len();
            tokens.extend(clause_tokens);
        }
        Self {
            article_id: record.article_id.clone(),
            tokens,
            clauses,
        }
    }

    /// Encodes the article to a padded sequence with its aligned Q.
    pub fn encode(
        &self,
        vocab: &Vocabulary,
        length: usize,
    ) -> Result<(TokenSequence, KnowledgeMatrix), ParserError> {
        let seq = encode_and_pad(&self.tokens, vocab, length);
        // truncation can cut clause coverage short; clamp spans the
        // same way the tokens were clamped
        let mut clauses = self.clauses.clone();
        for c in &mut clauses {
            c.span.0 = c.span.0.min(seq.true_length);
            c.span.1 = c.span.1.min(seq.true_length);
        }
        let q = project_knowledge(&seq, &clauses)?;
        Ok((seq, q))
    }

    pub fn has_conclusion(&self) -> bool {
        self.clauses
            .iter()
            .any(|c| c.label == ClauseLabel::Conclusion)
    }

    pub fn to_record(&self) -> ParsedArticleRecord {
        ParsedArticleRecord {
            article_id: self.article_id.clone(),
            clauses: self
                .clauses
                .iter()
                .map(|c| LabeledClause {
                    text: c.text.clone(),
                    label: c.label.as_str().to_string(),
                })
                .collect(),
        }
    }
}

/// Builds the forest training set from labeled clause records.
pub fn featurize_labeled(
    records: &[LabeledClause],
    lexicon: &Lexicon,
) -> Vec<(ClauseFeatures, ClauseLabel)> {
    records
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            let label = match r.label.as_str() {
                "conclusion" => ClauseLabel::Conclusion,
                _ => ClauseLabel::Premise,
            };
            let clause = Clause {
                text: r.text.clone(),
                span: (0, 1),
                label,
            };
            // standalone training clauses carry no article position;
            // treat each as the only clause of its article
            (featurize(&clause, idx % 2, 2, lexicon), label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, DefaultTokenizer, SyntheticConfig, Vocabulary};

    fn synthetic_forest() -> (RandomForest, Lexicon) {
        let corpus = generate_synthetic(&SyntheticConfig::new(5, 10, 6, 2)).unwrap();
        let lexicon = Lexicon::from_lists(corpus.premise_lexicon, corpus.conclusion_lexicon);
        let data = featurize_labeled(&corpus.labeled_clauses, &lexicon);
        let forest = train_forest(&data, 10, 8, 1).unwrap();
        (forest, lexicon)
    }

    #[test]
    fn parse_pipeline_produces_aligned_q() {
        let (forest, lexicon) = synthetic_forest();
        let parser = ArticleParser::new(&forest, &lexicon);
        let corpus = generate_synthetic(&SyntheticConfig::new(5, 10, 6, 2)).unwrap();
        let docs: Vec<Vec<String>> = corpus
            .articles
            .iter()
            .map(|a| DefaultTokenizer.tokenize(&a.text))
            .collect();
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        for article in &corpus.articles {
            let parsed = parser
                .parse(&article.article_id, &article.text, &DefaultTokenizer)
                .unwrap();
            assert!(parsed.has_conclusion(), "{}", article.article_id);
            let (seq, q) = parsed.encode(&vocab, 30).unwrap();
            assert_eq!(q.len(), 30);
            assert_eq!(seq.padded_length(), 30);
            // premise words first, conclusion words after
            let rows = q.rows();
            assert_eq!(rows[0], [1, 0]);
            assert!(rows[..seq.true_length].contains(&[0, 1]));
            assert!(rows[seq.true_length..].iter().all(|r| *r == PAD_ROW));
        }
    }

    #[test]
    fn every_q_row_one_hot() {
        let (forest, lexicon) = synthetic_forest();
        let parser = ArticleParser::new(&forest, &lexicon);
        let parsed = parser
            .parse("a", "whoever kw1 kw2 ， shall be fined 。", &DefaultTokenizer)
            .unwrap();
        let docs = vec![DefaultTokenizer.tokenize("whoever kw1 kw2 shall be fined")];
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        let (_, q) = parsed.encode(&vocab, 16).unwrap();
        for row in q.rows() {
            assert!(*row == [1, 0] || *row == [0, 1]);
        }
    }

    #[test]
    fn record_round_trip_preserves_tokens_and_spans() {
        let (forest, lexicon) = synthetic_forest();
        let parser = ArticleParser::new(&forest, &lexicon);
        let parsed = parser
            .parse("a", "whoever kw1 kw2 ， shall be fined 。", &DefaultTokenizer)
            .unwrap();
        let back = ParsedArticle::from_record(&parsed.to_record(), &DefaultTokenizer);
        assert_eq!(parsed.tokens, back.tokens);
        let spans: Vec<_> = parsed.clauses.iter().map(|c| c.span).collect();
        let back_spans: Vec<_> = back.clauses.iter().map(|c| c.span).collect();
        assert_eq!(spans, back_spans);
    }

    #[test]
    fn stopwords_removed_from_articles() {
        let (forest, lexicon) = synthetic_forest();
        let stop: HashSet<String> = ["be".to_string()].into_iter().collect();
        let parser = ArticleParser::new(&forest, &lexicon).with_stopwords(stop);
        let parsed = parser
            .parse("a", "whoever kw1 ， shall be fined 。", &DefaultTokenizer)
            .unwrap();
        assert!(!parsed.tokens.contains(&"be".to_string()));
        assert!(!parsed.tokens.contains(&"，".to_string()));
    }
}
