//! Rule-based clause segmentation of statute text.

use serde::{Deserialize, Serialize};

use crate::corpus::{DefaultTokenizer, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClauseLabel {
    Premise,
    Conclusion,
    Unknown,
}

impl ClauseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClauseLabel::Premise => "premise",
            ClauseLabel::Conclusion => "conclusion",
            ClauseLabel::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub text: String,
    /// Word span (start, end) within the tokenized article.
    pub span: (usize, usize),
    pub label: ClauseLabel,
}

const CLAUSE_DELIMITERS: &[char] = &['，', '；', '：', '、', ',', ';'];
const SENTENCE_ENDERS: &[char] = &['。', '！', '？'];
const CJK_NUMERALS: &[char] = &['一', '二', '三', '四', '五', '六', '七', '八', '九', '十'];

fn is_delimiter(c: char) -> bool {
    CLAUSE_DELIMITERS.contains(&c) || SENTENCE_ENDERS.contains(&c)
}

/// Splits an article into unlabeled clauses on clause punctuation. The
/// delimiter stays with the preceding clause, so the clause texts
/// reassemble to the original text exactly. An enumeration marker
/// ("一、", "3、") does not end a clause.
pub fn split_clauses(text: &str) -> Vec<Clause> {
    let tokenizer = DefaultTokenizer;
    let mut pieces: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut prev: Option<char> = None;
    for c in text.chars() {
        current.push(c);
        let enumeration = c == '、'
            && prev.is_some_and(|p| p.is_ascii_digit() || CJK_NUMERALS.contains(&p));
        if is_delimiter(c) && !enumeration {
            pieces.push(std::mem::take(&mut current));
        }
        prev = Some(c);
    }
    if !current.is_empty() {
        pieces.push(current);
    }

    let mut clauses: Vec<Clause> = Vec::new();
    let mut word_offset = 0usize;
    let mut pending_prefix = String::new();
    for piece in pieces {
        let n_words = tokenizer
            .tokenize(&piece)
            .iter()
            .filter(|t| !t.chars().all(is_delimiter))
            .count();
        if n_words == 0 {
            // punctuation-only fragment; keep it attached to a
            // neighbouring clause so the texts still tile
            if let Some(last) = clauses.last_mut() {
                last.text.push_str(&piece);
            } else {
                pending_prefix.push_str(&piece);
            }
            continue;
        }
        let text = if pending_prefix.is_empty() {
            piece
        } else {
            format!("{}{piece}", std::mem::take(&mut pending_prefix))
        };
        clauses.push(Clause {
            text,
            span: (word_offset, word_offset + n_words),
            label: ClauseLabel::Unknown,
        });
        word_offset += n_words;
    }
    if !pending_prefix.is_empty() {
        // the whole input was punctuation
        clauses.push(Clause {
            text: pending_prefix,
            span: (0, 0),
            label: ClauseLabel::Unknown,
        });
    }
    clauses
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn premise_conclusion_pair() {
        let clauses = split_clauses("P，C。");
        assert_eq!(clauses.len(), 2);
        assert_eq!(clauses[0].text, "P，");
        assert_eq!(clauses[1].text, "C。");
        assert_eq!(clauses[0].span, (0, 1));
        assert_eq!(clauses[1].span, (1, 2));
    }

    #[test]
    fn no_delimiter_single_clause() {
        let clauses = split_clauses("no punctuation at all");
        assert_eq!(clauses.len(), 1);
        assert_eq!(clauses[0].span, (0, 4));
    }

    #[test]
    fn spans_tile_and_text_reassembles() {
        let text = "故意伤害他人身体的，处三年以下有期徒刑、拘役或者管制；致人重伤的，处三年以上十年以下有期徒刑。";
        let clauses = split_clauses(text);
        let rebuilt: String = clauses.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(rebuilt, text);
        let mut expected_start = 0;
        for c in &clauses {
            assert_eq!(c.span.0, expected_start);
            assert!(c.span.0 < c.span.1);
            expected_start = c.span.1;
        }
    }

    #[test]
    fn four_clause_structure() {
        // two premise/conclusion pairs, as in Criminal Law Article 232
        let text = "故意杀人的，处死刑；情节较轻的，处三年以上十年以下有期徒刑。";
        let clauses = split_clauses(text);
        assert_eq!(clauses.len(), 4);
    }

    #[test]
    fn enumeration_marker_not_split() {
        let clauses = split_clauses("一、第一项，二、第二项。");
        // the 、 after 一 and 二 must not split
        assert_eq!(clauses.len(), 2);
        assert_eq!(clauses[0].text, "一、第一项，");
    }

    #[test]
    fn consecutive_delimiters_keep_tiling() {
        let text = "甲，，乙。";
        let clauses = split_clauses(text);
        let rebuilt: String = clauses.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(rebuilt, text);
        assert_eq!(clauses.len(), 2);
    }
}
