//! Minimal tensor algebra with reverse-mode differentiation and Adam,
//! generic over the floating scalar.

mod adam;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use tape::{Tape, Var};
pub use tensor::{
    conv1d_same, matmul, softmax_axis, transpose, NumericsError, Result, Scalar, Tensor,
};

use rand::Rng;

/// Affine map over the last dimension with optional ReLU. Accepts a
/// `[in]` vector or `[r, in]` matrix and returns the same rank.
pub fn dense<F: Scalar>(
    input: &Var<F>,
    weight: &Var<F>,
    bias: &Var<F>,
    relu: bool,
) -> Result<Var<F>> {
    let shape = input.shape();
    let x = match shape.len() {
        1 => input.reshape(vec![1, shape[0]])?,
        2 => input.clone(),
        _ => {
            return Err(NumericsError::Invalid(format!(
                "dense expects rank 1 or 2, got {shape:?}"
            )))
        }
    };
    let mut out = x.matmul(weight)?.add_bias(bias)?;
    if relu {
        out = out.relu();
    }
    if shape.len() == 1 {
        let cols = out.shape()[1];
        out = out.reshape(vec![cols])?;
    }
    Ok(out)
}

/// Inverted dropout: in training mode each element is zeroed with
/// probability `rate` and survivors scale by 1/(1-rate); in inference
/// mode the input passes through unchanged.
pub fn dropout<F: Scalar, R: Rng>(
    input: &Var<F>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var<F>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(NumericsError::Invalid(format!(
            "dropout rate {rate} outside [0, 1]"
        )));
    }
    if !training || rate == 0.0 {
        return Ok(input.clone());
    }
    let numel = input.value().numel();
    let keep_scale = if rate >= 1.0 {
        F::zero()
    } else {
        F::from_f64(1.0 / (1.0 - rate))
    };
    let mask: Vec<F> = (0..numel)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                F::zero()
            } else {
                keep_scale
            }
        })
        .collect();
    input.dropout_with_mask(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_gradient() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = x.mul(&x).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[6.0]);
    }

    #[test]
    fn double_backward_rejected() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let y = x.mul(&x).unwrap();
        y.backward().unwrap();
        assert!(y.backward().is_err());
    }

    #[test]
    fn backward_on_non_scalar_rejected() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(x.backward().is_err());
    }

    #[test]
    fn branch_gradients_accumulate() {
        // z = x*x + 3x => dz/dx = 2x + 3
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::scalar(5.0));
        let sq = x.mul(&x).unwrap();
        let lin = x.scale(3.0);
        let z = sq.add(&lin).unwrap();
        z.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[13.0]);
    }

    #[test]
    fn dense_identity_and_relu() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, -2.0]));
        let w = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let plain = dense(&x, &w, &b, false).unwrap();
        assert_eq!(plain.value().data(), &[1.0, -2.0]);
        let clamped = dense(&x, &w, &b, true).unwrap();
        assert_eq!(clamped.value().data(), &[1.0, 0.0]);
    }

    #[test]
    fn dense_hand_arithmetic() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let w = tape.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let b = tape.constant(Tensor::vector(vec![0.5]));
        let out = dense(&x, &w, &b, false).unwrap();
        assert_eq!(out.value().data(), &[3.5]);
    }

    #[test]
    fn dropout_rate_zero_and_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tape: Tape<f64> = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let same = dropout(&x, 0.0, true, &mut rng).unwrap();
        assert_eq!(same.value().data(), &[1.0, 2.0, 3.0]);
        let zeroed = dropout(&x, 1.0, true, &mut rng).unwrap();
        assert!(zeroed.value().data().iter().all(|&v| v == 0.0));
        let inference = dropout(&x, 0.9, false, &mut rng).unwrap();
        assert_eq!(inference.value().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn dropout_mean_preserved() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tape: Tape<f64> = Tape::new();
        let x = tape.constant(Tensor::filled(vec![n], 1.0));
        let dropped = dropout(&x, 0.5, true, &mut rng).unwrap();
        let mean: f64 = dropped.value().data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn dropout_masks_deterministic_per_seed() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.constant(Tensor::filled(vec![64], 1.0));
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        let da = dropout(&x, 0.3, true, &mut a).unwrap();
        let db = dropout(&x, 0.3, true, &mut b).unwrap();
        assert_eq!(da.value().data(), db.value().data());
    }

    #[test]
    fn cross_entropy_examples() {
        let tape: Tape<f64> = Tape::new();
        let logits = tape.param(Tensor::vector(vec![0.0, 0.0]));
        let loss = logits.cross_entropy(1).unwrap();
        assert!((loss.value().scalar_value() - 2.0_f64.ln()).abs() < 1e-12);
        loss.backward().unwrap();
        let g = logits.grad().unwrap();
        assert!((g.data()[0] - 0.5).abs() < 1e-12);
        assert!((g.data()[1] + 0.5).abs() < 1e-12);

        let tape2: Tape<f64> = Tape::new();
        let confident = tape2.constant(Tensor::vector(vec![10.0, -10.0]));
        let loss2 = confident.cross_entropy(0).unwrap();
        assert!(loss2.value().scalar_value() < 1e-4);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let tape: Tape<f64> = Tape::new();
        let logits = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        assert!(logits.cross_entropy(2).is_err());
    }

    #[test]
    fn max_pool_rows_and_ties() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::matrix(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap());
        let pooled = x.max_pool_last().unwrap();
        assert_eq!(pooled.value().data(), &[5.0, 3.0]);

        let tape2: Tape<f64> = Tape::new();
        let tied = tape2.param(Tensor::matrix(1, 2, vec![2.0, 2.0]).unwrap());
        let pooled = tied.max_pool_last().unwrap();
        assert_eq!(pooled.value().data(), &[2.0]);
        let s = pooled.sum_all();
        s.backward().unwrap();
        // tie routes the gradient to the first index
        assert_eq!(tied.grad().unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn max_pool_single_column() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.constant(Tensor::matrix(2, 1, vec![4.0, 7.0]).unwrap());
        let pooled = x.max_pool_last().unwrap();
        assert_eq!(pooled.value().data(), &[4.0, 7.0]);
    }

    #[test]
    fn softmax_shift_invariance() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.constant(Tensor::vector(vec![0.1, -0.4, 2.0]));
        let b = tape.constant(Tensor::vector(vec![100.1, 99.6, 102.0]));
        let sa = a.softmax(0).unwrap().value();
        let sb = b.softmax(0).unwrap().value();
        for (x, y) in sa.data().iter().zip(sb.data()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((sa.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
