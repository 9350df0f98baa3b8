//! Projection of clause labels onto the per-word knowledge matrix Q.

use crate::corpus::TokenSequence;
use crate::numerics::Tensor;

use super::clause::{Clause, ClauseLabel};
use super::ParserError;

/// Per-word premise/conclusion indicators: each row is [1,0] for a
/// premise word and [0,1] for a conclusion word. PAD rows are [1,0].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeMatrix {
    rows: Vec<[u8; 2]>,
}

pub const PAD_ROW: [u8; 2] = [1, 0];

impl KnowledgeMatrix {
    pub fn rows(&self) -> &[[u8; 2]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// n x 2 tensor for fusion.
    pub fn as_tensor(&self) -> Tensor<f64> {
        let data: Vec<f64> = self
            .rows
            .iter()
            .flat_map(|r| [r[0] as f64, r[1] as f64])
            .collect();
        Tensor::from_vec(vec![self.rows.len(), 2], data).expect("knowledge tensor")
    }

    pub fn from_rows(rows: Vec<[u8; 2]>) -> Self {
        debug_assert!(rows.iter().all(|r| *r == [1, 0] || *r == [0, 1]));
        Self { rows }
    }
}

fn label_row(label: ClauseLabel) -> [u8; 2] {
    match label {
        ClauseLabel::Conclusion => [0, 1],
        _ => [1, 0],
    }
}

/// Every word inherits its clause's label; PAD positions get [1,0].
/// Clause spans must cover the unpadded tokens.
pub fn project_knowledge(
    article: &TokenSequence,
    clauses: &[Clause],
) -> Result<KnowledgeMatrix, ParserError> {
    let mut rows = Vec::with_capacity(article.padded_length());
    for word_idx in 0..article.true_length {
        let clause = clauses
            .iter()
            .find(|c| c.span.0 <= word_idx && word_idx < c.span.1)
            .ok_or(ParserError::UncoveredToken { word_idx })?;
        rows.push(label_row(clause.label));
    }
    rows.resize(article.padded_length(), PAD_ROW);
    Ok(KnowledgeMatrix { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(true_len: usize, padded: usize) -> TokenSequence {
        let mut ids = vec![2u32; true_len];
        ids.resize(padded, 0);
        TokenSequence {
            ids,
            true_length: true_len,
        }
    }

    fn clause(span: (usize, usize), label: ClauseLabel) -> Clause {
        Clause {
            text: String::new(),
            span,
            label,
        }
    }

    #[test]
    fn single_premise_clause() {
        let q = project_knowledge(&seq(3, 3), &[clause((0, 3), ClauseLabel::Premise)]).unwrap();
        assert_eq!(q.rows(), &[[1, 0], [1, 0], [1, 0]]);
    }

    #[test]
    fn premise_conclusion_with_padding() {
        let clauses = vec![
            clause((0, 2), ClauseLabel::Premise),
            clause((2, 4), ClauseLabel::Conclusion),
        ];
        let q = project_knowledge(&seq(4, 6), &clauses).unwrap();
        assert_eq!(
            q.rows(),
            &[[1, 0], [1, 0], [0, 1], [0, 1], [1, 0], [1, 0]]
        );
    }

    #[test]
    fn empty_article_all_pad() {
        let q = project_knowledge(&seq(0, 4), &[]).unwrap();
        assert_eq!(q.rows(), &[[1, 0]; 4]);
    }

    #[test]
    fn uncovered_token_rejected() {
        let clauses = vec![clause((0, 2), ClauseLabel::Premise)];
        assert!(project_knowledge(&seq(4, 4), &clauses).is_err());
    }

    #[test]
    fn tensor_shape() {
        let q = project_knowledge(&seq(2, 3), &[clause((0, 2), ClauseLabel::Conclusion)]).unwrap();
        let t = q.as_tensor();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
    }
}
