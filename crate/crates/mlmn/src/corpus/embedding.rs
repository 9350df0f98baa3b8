//! Word embeddings: TSV load/save and a CBOW negative-sampling trainer.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::Tensor;

use super::vocab::{Vocabulary, PAD_ID, UNK_ID};
use super::CorpusError;

/// |V| x d embedding matrix; row 0 (PAD) stays zero.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    matrix: Tensor<f64>,
}

impl EmbeddingTable {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            dim,
            matrix: Tensor::zeros(vec![vocab_size, dim]),
        }
    }

    /// Uniform init in [-0.05, 0.05], PAD row zero.
    pub fn random(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let mut data = Vec::with_capacity(vocab_size * dim);
        for row in 0..vocab_size {
            for _ in 0..dim {
                if row == PAD_ID as usize {
                    data.push(0.0);
                } else {
                    data.push(rng.gen_range(-0.05..0.05));
                }
            }
        }
        Self {
            dim,
            matrix: Tensor::from_vec(vec![vocab_size, dim], data).expect("embedding init"),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Tensor<f64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut Tensor<f64> {
        &mut self.matrix
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let d = self.dim;
        &self.matrix.data()[id as usize * d..(id as usize + 1) * d]
    }

    fn row_mut(&mut self, id: u32) -> &mut [f64] {
        let d = self.dim;
        &mut self.matrix.data_mut()[id as usize * d..(id as usize + 1) * d]
    }

    /// Stacks the rows for a token id sequence into a `len x d` tensor.
    pub fn lookup(&self, ids: &[u32]) -> Tensor<f64> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            data.extend_from_slice(self.row(id));
        }
        Tensor::from_vec(vec![ids.len(), self.dim], data).expect("embedding lookup")
    }

    pub fn cosine(&self, a: u32, b: u32) -> f64 {
        let (ra, rb) = (self.row(a), self.row(b));
        let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
        let na: f64 = ra.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = rb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    /// TSV format: `word<TAB>v1<TAB>...<TAB>vd`.
    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<(), CorpusError> {
        let mut out = String::new();
        for id in 0..self.vocab_size() as u32 {
            let word = vocab.token(id).unwrap_or("<unk>");
            out.push_str(word);
            for v in self.row(id) {
                out.push('\t');
                out.push_str(&format!("{v:e}"));
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Loads rows for in-vocabulary words; missing words are seeded
    /// uniform in [-0.05, 0.05].
    pub fn load(
        path: &Path,
        vocab: &Vocabulary,
        dim: usize,
        seed: u64,
    ) -> Result<Self, CorpusError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = Self::random(vocab.len(), dim, &mut rng);
        let content = std::fs::read_to_string(path)?;
        for (lineno, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let word = parts.next().unwrap_or("");
            let values: Vec<f64> = parts
                .map(|p| p.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CorpusError::MalformedLine {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    reason: e.to_string(),
                })?;
            if values.len() != dim {
                return Err(CorpusError::MalformedLine {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    reason: format!("expected {dim} values, got {}", values.len()),
                });
            }
            let id = vocab.id(word);
            if id == UNK_ID && word != super::vocab::UNK_TOKEN {
                continue; // out-of-vocabulary row
            }
            table.row_mut(id).copy_from_slice(&values);
        }
        // PAD row is pinned to zero regardless of file contents
        table.row_mut(PAD_ID).fill(0.0);
        Ok(table)
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives_per_target: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            window: 5,
            negatives_per_target: 5,
            epochs: 5,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// CBOW with negative sampling: the mean of the context vectors
/// predicts the center word; negatives follow the unigram^0.75
/// distribution. Returns the input embedding table and per-epoch mean
/// losses.
pub fn train_cbow(
    documents: &[Vec<u32>],
    vocab: &Vocabulary,
    config: &CbowConfig,
) -> Result<(EmbeddingTable, Vec<f64>), CorpusError> {
    if config.window < 1 {
        return Err(CorpusError::Invalid("CBOW window must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input = EmbeddingTable::random(vocab.len(), config.dim, &mut rng);
    let mut output = EmbeddingTable::zeros(vocab.len(), config.dim);

    // unigram^0.75 over real words only (PAD/UNK excluded)
    let weights: Vec<f64> = (0..vocab.len() as u32)
        .map(|id| {
            if id <= UNK_ID {
                0.0
            } else {
                (vocab.count(id) as f64).powf(0.75)
            }
        })
        .collect();
    if weights.iter().sum::<f64>() == 0.0 {
        return Err(CorpusError::Invalid("no sampleable tokens for CBOW".into()));
    }
    let sampler = WeightedIndex::new(&weights).expect("non-degenerate weights");

    let d = config.dim;
    let lr = config.learning_rate;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for doc in documents {
            for (center_pos, &center) in doc.iter().enumerate() {
                if center <= UNK_ID {
                    continue;
                }
                let lo = center_pos.saturating_sub(config.window);
                let hi = (center_pos + config.window + 1).min(doc.len());
                let context: Vec<u32> = (lo..hi)
                    .filter(|&p| p != center_pos)
                    .map(|p| doc[p])
                    .filter(|&id| id > UNK_ID)
                    .collect();
                if context.is_empty() {
                    continue;
                }
                // h = mean of context input vectors
                let mut h = vec![0.0f64; d];
                for &c in &context {
                    for (hv, &iv) in h.iter_mut().zip(input.row(c)) {
                        *hv += iv;
                    }
                }
                let inv = 1.0 / context.len() as f64;
                for hv in h.iter_mut() {
                    *hv *= inv;
                }

                let mut grad_h = vec![0.0f64; d];
                let mut targets: Vec<(u32, f64)> =
                    vec![(center, 1.0)];
                for _ in 0..config.negatives_per_target {
                    let neg = sampler.sample(&mut rng) as u32;
                    if neg != center {
                        targets.push((neg, 0.0));
                    }
                }
                for &(word, label) in &targets {
                    let row = output.row(word);
                    let score: f64 = row.iter().zip(&h).map(|(a, b)| a * b).sum();
                    let pred = sigmoid(score);
                    loss_sum += if label > 0.5 {
                        -pred.max(1e-12).ln()
                    } else {
                        -(1.0 - pred).max(1e-12).ln()
                    };
                    let g = pred - label;
                    for (gh, &ov) in grad_h.iter_mut().zip(row) {
                        *gh += g * ov;
                    }
                    let row = output.row_mut(word);
                    for (ov, &hv) in row.iter_mut().zip(&h) {
                        *ov -= lr * g * hv;
                    }
                }
                loss_count += 1;
                let scale = lr * inv;
                for &c in &context {
                    let row = input.row_mut(c);
                    for (iv, &gh) in row.iter_mut().zip(&grad_h) {
                        *iv -= scale * gh;
                    }
                }
            }
        }
        epoch_losses.push(if loss_count == 0 {
            0.0
        } else {
            loss_sum / loss_count as f64
        });
    }
    Ok((input, epoch_losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::data::{DefaultTokenizer, Tokenizer};

    fn toy_corpus() -> (Vec<Vec<u32>>, Vocabulary) {
        // (a, b) always co-occur and share contexts c1/c2; (a, z) never
        let tok = DefaultTokenizer;
        let mut texts = Vec::new();
        for _ in 0..80 {
            texts.push("c1 a c2 c1 b c2");
            texts.push("c3 z c4 c3 q c4");
        }
        let docs: Vec<Vec<String>> = texts.iter().map(|t| tok.tokenize(t)).collect();
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        let encoded = docs
            .iter()
            .map(|d| d.iter().map(|t| vocab.id(t)).collect())
            .collect();
        (encoded, vocab)
    }

    #[test]
    fn cooccurrence_separation() {
        let (docs, vocab) = toy_corpus();
        let config = CbowConfig {
            dim: 16,
            window: 1,
            epochs: 10,
            ..Default::default()
        };
        let (table, _) = train_cbow(&docs, &vocab, &config).unwrap();
        let (a, b, z) = (vocab.id("a"), vocab.id("b"), vocab.id("z"));
        assert!(
            table.cosine(a, b) > table.cosine(a, z),
            "cos(a,b)={} cos(a,z)={}",
            table.cosine(a, b),
            table.cosine(a, z)
        );
    }

    #[test]
    fn loss_decreases() {
        let (docs, vocab) = toy_corpus();
        let config = CbowConfig {
            dim: 16,
            window: 2,
            epochs: 6,
            ..Default::default()
        };
        let (_, losses) = train_cbow(&docs, &vocab, &config).unwrap();
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0] * 1.05, "losses {losses:?}");
        }
    }

    #[test]
    fn pad_row_stays_zero() {
        let (docs, vocab) = toy_corpus();
        let (table, _) = train_cbow(&docs, &vocab, &CbowConfig::default()).unwrap();
        assert!(table.row(PAD_ID).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tsv_round_trip_and_errors() {
        let (docs, vocab) = toy_corpus();
        let config = CbowConfig {
            dim: 8,
            epochs: 1,
            ..Default::default()
        };
        let (table, _) = train_cbow(&docs, &vocab, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        table.save(&path, &vocab).unwrap();
        let loaded = EmbeddingTable::load(&path, &vocab, 8, 0).unwrap();
        assert_eq!(table, loaded);

        // empty file: random init except PAD
        let empty = dir.path().join("empty.tsv");
        std::fs::write(&empty, "").unwrap();
        let rand_table = EmbeddingTable::load(&empty, &vocab, 8, 1).unwrap();
        assert!(rand_table.row(PAD_ID).iter().all(|&v| v == 0.0));
        assert!(rand_table.row(vocab.id("a")).iter().any(|&v| v != 0.0));

        // wrong width names the line
        let bad = dir.path().join("bad.tsv");
        std::fs::write(&bad, "a\t0.1\t0.2\n").unwrap();
        let err = EmbeddingTable::load(&bad, &vocab, 8, 0).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }
}
