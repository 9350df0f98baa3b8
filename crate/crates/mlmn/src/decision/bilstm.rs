//! Bidirectional LSTM sequence encoder built from tape primitives.

use rand::Rng;

use crate::numerics::{Tensor, Var};

use super::DecisionError;

type T = Tensor<f64>;
type V = Var<f64>;

/// One LSTM direction. Gate order in the fused matrices is
/// input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LstmCell {
    /// `[d, 4h]`
    pub w: T,
    /// `[h, 4h]`
    pub u: T,
    /// `[4h]`, forget-gate block initialized to 1.
    pub b: T,
}

impl LstmCell {
    pub fn init(rng: &mut impl Rng, input: usize, hidden: usize) -> Self {
        let limit = (6.0 / (input + hidden + 4 * hidden) as f64).sqrt();
        let mut sample = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
        };
        let w = T::from_vec(vec![input, 4 * hidden], sample(input * 4 * hidden)).unwrap();
        let u = T::from_vec(vec![hidden, 4 * hidden], sample(hidden * 4 * hidden)).unwrap();
        let mut bias = vec![0.0; 4 * hidden];
        for slot in bias.iter_mut().skip(hidden).take(hidden) {
            *slot = 1.0;
        }
        let b = T::vector(bias);
        Self { w, u, b }
    }

    pub fn hidden(&self) -> usize {
        self.u.shape()[0]
    }
}

/// Tape handles for one direction's weights.
pub struct BoundCell {
    pub w: V,
    pub u: V,
    pub b: V,
}

/// Runs one direction over `steps` (each `[1, d]`) and returns the
/// final hidden state `[1, h]`.
fn run_direction(steps: &[V], cell: &BoundCell, hidden: usize) -> Result<V, DecisionError> {
    let tape = steps[0].tape();
    let mut h = tape.constant(T::zeros(vec![1, hidden]));
    let mut c = tape.constant(T::zeros(vec![1, hidden]));
    for x in steps {
        let z = x
            .matmul(&cell.w)?
            .add(&h.matmul(&cell.u)?)?
            .add_bias(&cell.b)?;
        let i = z.slice_cols(0, hidden)?.sigmoid();
        let f = z.slice_cols(hidden, hidden)?.sigmoid();
        let g = z.slice_cols(2 * hidden, hidden)?.tanh();
        let o = z.slice_cols(3 * hidden, hidden)?.sigmoid();
        c = f.mul(&c)?.add(&i.mul(&g)?)?;
        h = o.mul(&c.tanh())?;
    }
    Ok(h)
}

/// Forward and backward cells of one encoder.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BiLstm {
    pub fn init(rng: &mut impl Rng, input: usize, hidden: usize) -> Self {
        Self {
            forward: LstmCell::init(rng, input, hidden),
            backward: LstmCell::init(rng, input, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }
}

pub struct BoundBiLstm {
    pub forward: BoundCell,
    pub backward: BoundCell,
    pub hidden: usize,
}

/// Encodes a `[len, d]` sequence into the concatenated final hidden
/// states of both directions, `[2h]`.
pub fn bilstm_encode(sequence: &V, bound: &BoundBiLstm) -> Result<V, DecisionError> {
    let shape = sequence.shape();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(DecisionError::BadData(format!(
            "bilstm input must be a non-empty sequence, got {shape:?}"
        )));
    }
    let len = shape[0];
    let mut steps = Vec::with_capacity(len);
    for t in 0..len {
        steps.push(sequence.slice_rows(t, 1)?);
    }
    let fwd = run_direction(&steps, &bound.forward, bound.hidden)?;
    let reversed: Vec<V> = steps.iter().rev().cloned().collect();
    let bwd = run_direction(&reversed, &bound.backward, bound.hidden)?;
    Ok(fwd.concat_cols(&bwd)?.reshape(vec![2 * bound.hidden])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bind(tape: &Tape<f64>, cell: &LstmCell) -> BoundCell {
        BoundCell {
            w: tape.constant(cell.w.clone()),
            u: tape.constant(cell.u.clone()),
            b: tape.constant(cell.b.clone()),
        }
    }

    fn bound(tape: &Tape<f64>, enc: &BiLstm) -> BoundBiLstm {
        BoundBiLstm {
            forward: bind(tape, &enc.forward),
            backward: bind(tape, &enc.backward),
            hidden: enc.hidden(),
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let tape = Tape::new();
        let zero_cell = LstmCell {
            w: T::zeros(vec![3, 8]),
            u: T::zeros(vec![2, 8]),
            b: T::vector(vec![0.0; 8]),
        };
        let enc = BiLstm {
            forward: zero_cell.clone(),
            backward: zero_cell,
        };
        let x = tape.constant(T::matrix(4, 3, vec![1.0; 12]).unwrap());
        let h = bilstm_encode(&x, &bound(&tape, &enc)).unwrap();
        assert!(h.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_directions_agree_with_shared_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fwd = LstmCell::init(&mut rng, 3, 2);
        let enc = BiLstm {
            forward: fwd.clone(),
            backward: fwd,
        };
        let tape = Tape::new();
        let x = tape.constant(T::matrix(1, 3, vec![0.3, -0.2, 0.9]).unwrap());
        let h = bilstm_encode(&x, &bound(&tape, &enc)).unwrap();
        let data = h.value().data().to_vec();
        assert_eq!(&data[..2], &data[2..]);
    }

    #[test]
    fn backward_equals_forward_on_reversed_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = LstmCell::init(&mut rng, 3, 2);
        let b = LstmCell::init(&mut rng, 3, 2);
        let data: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();

        let tape1 = Tape::new();
        let enc1 = BiLstm {
            forward: a.clone(),
            backward: b.clone(),
        };
        let x = tape1.constant(T::matrix(4, 3, data.clone()).unwrap());
        let h1 = bilstm_encode(&x, &bound(&tape1, &enc1)).unwrap();

        let tape2 = Tape::new();
        let enc2 = BiLstm {
            forward: b,
            backward: a,
        };
        let rev: Vec<f64> = (0..4)
            .rev()
            .flat_map(|r| data[r * 3..(r + 1) * 3].to_vec())
            .collect();
        let xr = tape2.constant(T::matrix(4, 3, rev).unwrap());
        let h2 = bilstm_encode(&xr, &bound(&tape2, &enc2)).unwrap();

        // direction swap + input reversal exchanges the two halves
        let d1 = h1.value().data().to_vec();
        let d2 = h2.value().data().to_vec();
        for k in 0..2 {
            assert!((d1[k] - d2[2 + k]).abs() < 1e-12);
            assert!((d1[2 + k] - d2[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cell = LstmCell::init(&mut rng, 3, 4);
        assert_eq!(&cell.b.data()[4..8], &[1.0; 4]);
        assert_eq!(&cell.b.data()[..4], &[0.0; 4]);
    }

    #[test]
    fn empty_sequence_rejected() {
        let tape: Tape<f64> = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = BiLstm::init(&mut rng, 3, 2);
        let x = tape.constant(T::matrix(1, 3, vec![0.0; 3]).unwrap());
        // rank-1 input is not a sequence
        let flat = x.reshape(vec![3]).unwrap();
        assert!(bilstm_encode(&flat, &bound(&tape, &enc)).is_err());
    }
}
