//! Trainable parameters of the matcher and their tape bindings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::EmbeddingTable;
use crate::numerics::{Tape, Tensor, Var};

use super::config::ModelConfig;
use super::ModelError;

type T = Tensor<f64>;
type V = Var<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `[h, in, out]`
    pub kernel: T,
    /// `[out]`
    pub bias: T,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DenseLayer {
    /// `[in, out]`
    pub weight: T,
    /// `[out]`
    pub bias: T,
}

/// All matcher state: the frozen word embeddings plus the trainable
/// convolution stacks, per-level fusion maps G1 and prediction head G2.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: EmbeddingTable,
    pub fact_conv: Vec<ConvLayer>,
    pub article_conv: Vec<ConvLayer>,
    /// One G1 per entry of `config.levels()`.
    pub g1: Vec<DenseLayer>,
    pub g2_hidden: DenseLayer,
    pub g2_out: DenseLayer,
}

fn glorot(rng: &mut impl Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> T {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    T::from_vec(shape, data).expect("init tensor")
}

fn conv_layer(rng: &mut impl Rng, h: usize, inw: usize, outw: usize) -> ConvLayer {
    ConvLayer {
        kernel: glorot(rng, vec![h, inw, outw], h * inw, h * outw),
        bias: T::zeros(vec![outw]),
    }
}

fn dense_layer(rng: &mut impl Rng, inw: usize, outw: usize) -> DenseLayer {
    DenseLayer {
        weight: glorot(rng, vec![inw, outw], inw, outw),
        bias: T::zeros(vec![outw]),
    }
}

impl ModelParams {
    /// Fresh parameters around an existing embedding table.
    pub fn init(config: &ModelConfig, embedding: EmbeddingTable, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if embedding.dim != config.embed_dim {
            return Err(ModelError::BadConfig(format!(
                "embedding width {} does not match configured {}",
                embedding.dim, config.embed_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv_stack = |rng: &mut ChaCha8Rng| {
            (0..config.n_layers)
                .map(|l| {
                    conv_layer(
                        rng,
                        config.kernel_sizes[l],
                        config.level_width(l),
                        config.filters[l],
                    )
                })
                .collect::<Vec<_>>()
        };
        let fact_conv = conv_stack(&mut rng);
        let article_conv = conv_stack(&mut rng);
        let g1 = config
            .levels()
            .into_iter()
            .map(|level| dense_layer(&mut rng, config.level_width(level) + 2, config.g1_width))
            .collect();
        let g2_hidden = dense_layer(&mut rng, config.g2_input(), config.g2_hidden);
        let g2_out = dense_layer(&mut rng, config.g2_hidden, 2);
        Ok(Self {
            embedding,
            fact_conv,
            article_conv,
            g1,
            g2_hidden,
            g2_out,
        })
    }

    /// Trainable tensors in a stable order (embedding excluded).
    pub fn trainable(&self) -> Vec<&T> {
        let mut out = Vec::new();
        for layer in self.fact_conv.iter().chain(&self.article_conv) {
            out.push(&layer.kernel);
            out.push(&layer.bias);
        }
        for layer in self.g1.iter().chain([&self.g2_hidden, &self.g2_out]) {
            out.push(&layer.weight);
            out.push(&layer.bias);
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        for layer in self.fact_conv.iter_mut().chain(&mut self.article_conv) {
            out.push(&mut layer.kernel);
            out.push(&mut layer.bias);
        }
        for layer in self
            .g1
            .iter_mut()
            .chain([&mut self.g2_hidden, &mut self.g2_out])
        {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        out
    }

    /// Named tensors for serialization, embedding included.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out: Vec<(String, &T)> = vec![("embedding".into(), self.embedding.matrix())];
        for (i, layer) in self.fact_conv.iter().enumerate() {
            out.push((format!("fact_conv.{i}.kernel"), &layer.kernel));
            out.push((format!("fact_conv.{i}.bias"), &layer.bias));
        }
        for (i, layer) in self.article_conv.iter().enumerate() {
            out.push((format!("article_conv.{i}.kernel"), &layer.kernel));
            out.push((format!("article_conv.{i}.bias"), &layer.bias));
        }
        for (i, layer) in self.g1.iter().enumerate() {
            out.push((format!("g1.{i}.weight"), &layer.weight));
            out.push((format!("g1.{i}.bias"), &layer.bias));
        }
        out.push(("g2_hidden.weight".into(), &self.g2_hidden.weight));
        out.push(("g2_hidden.bias".into(), &self.g2_hidden.bias));
        out.push(("g2_out.weight".into(), &self.g2_out.weight));
        out.push(("g2_out.bias".into(), &self.g2_out.bias));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut T)> {
        let mut out: Vec<(String, &mut T)> =
            vec![("embedding".into(), self.embedding.matrix_mut())];
        for (i, layer) in self.fact_conv.iter_mut().enumerate() {
            out.push((format!("fact_conv.{i}.kernel"), &mut layer.kernel));
            out.push((format!("fact_conv.{i}.bias"), &mut layer.bias));
        }
        for (i, layer) in self.article_conv.iter_mut().enumerate() {
            out.push((format!("article_conv.{i}.kernel"), &mut layer.kernel));
            out.push((format!("article_conv.{i}.bias"), &mut layer.bias));
        }
        for (i, layer) in self.g1.iter_mut().enumerate() {
            out.push((format!("g1.{i}.weight"), &mut layer.weight));
            out.push((format!("g1.{i}.bias"), &mut layer.bias));
        }
        out.push(("g2_hidden.weight".into(), &mut self.g2_hidden.weight));
        out.push(("g2_hidden.bias".into(), &mut self.g2_hidden.bias));
        out.push(("g2_out.weight".into(), &mut self.g2_out.weight));
        out.push(("g2_out.bias".into(), &mut self.g2_out.bias));
        out
    }

    /// Puts every trainable tensor on `tape` as a gradient-carrying leaf.
    pub fn bind(&self, tape: &Tape<f64>) -> BoundParams {
        self.bind_with(tape, true)
    }

    /// Constant binding for inference; backward never touches these.
    pub fn bind_frozen(&self, tape: &Tape<f64>) -> BoundParams {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &Tape<f64>, trainable: bool) -> BoundParams {
        let leaf = |t: &T| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        BoundParams {
            fact_conv: self
                .fact_conv
                .iter()
                .map(|l| (leaf(&l.kernel), leaf(&l.bias)))
                .collect(),
            article_conv: self
                .article_conv
                .iter()
                .map(|l| (leaf(&l.kernel), leaf(&l.bias)))
                .collect(),
            g1: self
                .g1
                .iter()
                .map(|l| (leaf(&l.weight), leaf(&l.bias)))
                .collect(),
            g2_hidden: (leaf(&self.g2_hidden.weight), leaf(&self.g2_hidden.bias)),
            g2_out: (leaf(&self.g2_out.weight), leaf(&self.g2_out.bias)),
        }
    }
}

/// Tape leaves for one forward/backward pass, in the same order as
/// [`ModelParams::trainable`].
pub struct BoundParams {
    pub fact_conv: Vec<(V, V)>,
    pub article_conv: Vec<(V, V)>,
    pub g1: Vec<(V, V)>,
    pub g2_hidden: (V, V),
    pub g2_out: (V, V),
}

impl BoundParams {
    pub fn trainable(&self) -> Vec<&V> {
        let mut out = Vec::new();
        for (k, b) in self.fact_conv.iter().chain(&self.article_conv) {
            out.push(k);
            out.push(b);
        }
        for (w, b) in self.g1.iter().chain([&self.g2_hidden, &self.g2_out]) {
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Gradients after backward, ordered like `trainable`. Leaves
    /// never reached by the loss yield zeros.
    pub fn gradients(&self) -> Vec<T> {
        self.trainable()
            .into_iter()
            .map(|v| v.grad().unwrap_or_else(|| T::zeros(v.shape())))
            .collect()
    }
}
