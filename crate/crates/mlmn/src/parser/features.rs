//! Clause feature extraction driven by a user-extensible lexicon.

use std::path::Path;

use crate::corpus::{DefaultTokenizer, Tokenizer};

use super::clause::Clause;
use super::ParserError;

/// Premise/conclusion keyword lexicon, loaded from a UTF-8 file with
/// `[premise]` / `[conclusion]` section headers and one keyword per
/// line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub premise: Vec<String>,
    pub conclusion: Vec<String>,
}

impl Lexicon {
    pub fn from_lists(premise: Vec<String>, conclusion: Vec<String>) -> Self {
        Self { premise, conclusion }
    }

    pub fn load(path: &Path) -> Result<Self, ParserError> {
        let content = std::fs::read_to_string(path).map_err(|e| ParserError::LexiconIo {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&content)
    }

    pub fn parse(content: &str) -> Result<Self, ParserError> {
        let mut lexicon = Lexicon::default();
        let mut section: Option<&mut Vec<String>> = None;
        for line in content.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[premise]" => section = Some(&mut lexicon.premise),
                "[conclusion]" => section = Some(&mut lexicon.conclusion),
                keyword => match section {
                    Some(ref mut list) => list.push(keyword.to_string()),
                    None => {
                        return Err(ParserError::BadLexicon(format!(
                            "keyword '{keyword}' before any section header"
                        )))
                    }
                },
            }
        }
        Ok(lexicon)
    }

    pub fn save(&self, path: &Path) -> Result<(), ParserError> {
        let mut out = String::from("[premise]\n");
        for k in &self.premise {
            out.push_str(k);
            out.push('\n');
        }
        out.push_str("[conclusion]\n");
        for k in &self.conclusion {
            out.push_str(k);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| ParserError::LexiconIo {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Feature width for this lexicon: one indicator per keyword plus
    /// relative position, clause length, numeric flag and penalty flag.
    pub fn feature_width(&self) -> usize {
        self.premise.len() + self.conclusion.len() + 4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClauseFeatures(pub Vec<f64>);

const PENALTY_TOKENS: &[&str] = &[
    "刑", "罚", "拘役", "管制", "徒刑", "罚金", "penalty", "sentenced", "imprisonment", "fined",
    "fine",
];

fn has_numeric(text: &str) -> bool {
    text.chars().any(|c| {
        c.is_ascii_digit()
            || matches!(c, '一' | '二' | '三' | '四' | '五' | '六' | '七' | '八' | '九' | '十')
    })
}

/// Deterministic features for one clause: keyword indicators over the
/// lexicon, relative position in the article, token count and the
/// numeric/penalty flags.
pub fn featurize(
    clause: &Clause,
    clause_index: usize,
    n_clauses: usize,
    lexicon: &Lexicon,
) -> ClauseFeatures {
    let mut values = Vec::with_capacity(lexicon.feature_width());
    for keyword in lexicon.premise.iter().chain(&lexicon.conclusion) {
        values.push(if clause.text.contains(keyword.as_str()) {
            1.0
        } else {
            0.0
        });
    }
    let relative = if n_clauses > 1 {
        clause_index as f64 / (n_clauses - 1) as f64
    } else {
        0.0
    };
    values.push(relative);
    values.push(DefaultTokenizer.tokenize(&clause.text).len() as f64);
    values.push(if has_numeric(&clause.text) { 1.0 } else { 0.0 });
    values.push(
        if PENALTY_TOKENS.iter().any(|p| clause.text.contains(p)) {
            1.0
        } else {
            0.0
        },
    );
    ClauseFeatures(values)
}
