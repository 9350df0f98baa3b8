//! Matcher hyperparameters.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AoaDirection {
    FactToArticle,
    ArticleToFact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressOp {
    Sum,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictFrom {
    AllLevels,
    LastOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Word embedding width d.
    pub embed_dim: usize,
    /// Number of convolution layers L (level 0 is the raw embedding).
    pub n_layers: usize,
    /// Filters per layer.
    pub filters: Vec<usize>,
    /// Kernel size per layer.
    pub kernel_sizes: Vec<usize>,
    pub fact_length: usize,
    pub article_length: usize,
    /// G1 output width t.
    pub g1_width: usize,
    /// Hidden width of the G2 prediction head.
    pub g2_hidden: usize,
    /// Match decision threshold on p(match).
    pub threshold: f64,
    pub aoa_direction: AoaDirection,
    pub compress_op: CompressOp,
    pub predict_from: PredictFrom,
    /// Whether level 0 (raw embeddings) contributes a matching pattern.
    pub include_embedding_level: bool,
    /// Mask PAD positions out of the attention softmaxes.
    pub mask_padding: bool,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            n_layers: 3,
            filters: vec![128, 128, 128],
            kernel_sizes: vec![2, 4, 8],
            fact_length: 50,
            article_length: 50,
            g1_width: 64,
            g2_hidden: 64,
            threshold: 0.6,
            aoa_direction: AoaDirection::FactToArticle,
            compress_op: CompressOp::Sum,
            predict_from: PredictFrom::AllLevels,
            include_embedding_level: true,
            mask_padding: false,
            dropout: 0.5,
        }
    }
}

impl ModelConfig {
    /// Small configuration for tests and desk-scale runs.
    pub fn tiny(embed_dim: usize, fact_length: usize, article_length: usize) -> Self {
        Self {
            embed_dim,
            n_layers: 2,
            filters: vec![6, 6],
            kernel_sizes: vec![2, 4],
            fact_length,
            article_length,
            g1_width: 4,
            g2_hidden: 8,
            dropout: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_layers < 1 {
            return Err(ModelError::BadConfig("n_layers must be >= 1".into()));
        }
        if self.filters.len() != self.n_layers || self.kernel_sizes.len() != self.n_layers {
            return Err(ModelError::BadConfig(format!(
                "filters/kernel_sizes must have {} entries",
                self.n_layers
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) && self.threshold != 1.0 {
            return Err(ModelError::BadConfig(format!(
                "threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        if self.embed_dim == 0 || self.fact_length == 0 || self.article_length == 0 {
            return Err(ModelError::BadConfig("zero dimension".into()));
        }
        Ok(())
    }

    /// Levels that produce a matching pattern.
    pub fn levels(&self) -> Vec<usize> {
        if self.include_embedding_level {
            (0..=self.n_layers).collect()
        } else {
            (1..=self.n_layers).collect()
        }
    }

    /// Levels whose matching patterns feed the prediction head.
    pub fn prediction_levels(&self) -> Vec<usize> {
        match self.predict_from {
            PredictFrom::AllLevels => self.levels(),
            PredictFrom::LastOnly => vec![self.n_layers],
        }
    }

    /// Pattern width at a level (level 0 is the embedding).
    pub fn level_width(&self, level: usize) -> usize {
        if level == 0 {
            self.embed_dim
        } else {
            self.filters[level - 1]
        }
    }

    /// Length of the comprehensive weight vector, which is also the
    /// length of each level's matching pattern.
    pub fn omega_length(&self) -> usize {
        match self.aoa_direction {
            AoaDirection::FactToArticle => self.article_length,
            AoaDirection::ArticleToFact => self.fact_length,
        }
    }

    /// Input width of G2.
    pub fn g2_input(&self) -> usize {
        self.prediction_levels().len() * self.omega_length()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn layer_count_mismatch_rejected() {
        let config = ModelConfig {
            kernel_sizes: vec![2, 4],
            ..Default::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn level_sets() {
        let config = ModelConfig::default();
        assert_eq!(config.levels(), vec![0, 1, 2, 3]);
        assert_eq!(config.prediction_levels().len(), 4);

        let last_only = ModelConfig {
            predict_from: PredictFrom::LastOnly,
            ..Default::default()
        };
        assert_eq!(last_only.prediction_levels(), vec![3]);

        let no_embed = ModelConfig {
            include_embedding_level: false,
            ..Default::default()
        };
        assert_eq!(no_embed.levels(), vec![1, 2, 3]);
    }
}
