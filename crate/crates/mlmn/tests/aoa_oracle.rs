//! Checks the vectorized attention-over-attention against a scalar
//! double-loop oracle on random instances.

use mlmn::model::{aoa_align, AoaDirection, CompressOp};
use mlmn::numerics::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-10;

struct Oracle {
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    nu: Vec<f64>,
    omega: Vec<f64>,
}

/// Scalar reference: explicit loops, no shared code with the model.
fn oracle(
    fact: &[Vec<f64>],
    article: &[Vec<f64>],
    direction: AoaDirection,
    compress: CompressOp,
) -> Oracle {
    let (m, n) = (fact.len(), article.len());
    let mut sim = vec![vec![0.0; n]; m];
    for i in 0..m {
        for j in 0..n {
            sim[i][j] = fact[i].iter().zip(&article[j]).map(|(a, b)| a * b).sum();
        }
    }
    let mut alpha = vec![vec![0.0; n]; m];
    for i in 0..m {
        let max = sim[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = sim[i].iter().map(|s| (s - max).exp()).sum();
        for j in 0..n {
            alpha[i][j] = (sim[i][j] - max).exp() / z;
        }
    }
    let mut beta = vec![vec![0.0; n]; m];
    for j in 0..n {
        let max = (0..m).map(|i| sim[i][j]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..m).map(|i| (sim[i][j] - max).exp()).sum();
        for i in 0..m {
            beta[i][j] = (sim[i][j] - max).exp() / z;
        }
    }
    let (nu, omega) = match direction {
        AoaDirection::FactToArticle => {
            let mut nu: Vec<f64> = (0..m).map(|i| beta[i].iter().sum()).collect();
            if compress == CompressOp::Avg {
                for v in nu.iter_mut() {
                    *v /= n as f64;
                }
            }
            let omega: Vec<f64> = (0..n)
                .map(|j| (0..m).map(|i| nu[i] * alpha[i][j]).sum())
                .collect();
            (nu, omega)
        }
        AoaDirection::ArticleToFact => {
            let mut nu: Vec<f64> = (0..n).map(|j| (0..m).map(|i| alpha[i][j]).sum()).collect();
            if compress == CompressOp::Avg {
                for v in nu.iter_mut() {
                    *v /= m as f64;
                }
            }
            let omega: Vec<f64> = (0..m)
                .map(|i| (0..n).map(|j| beta[i][j] * nu[j]).sum())
                .collect();
            (nu, omega)
        }
    };
    Oracle {
        alpha,
        beta,
        nu,
        omega,
    }
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect()
}

fn flat(rows: &[Vec<f64>]) -> Tensor<f64> {
    let cols = rows[0].len();
    Tensor::from_vec(
        vec![rows.len(), cols],
        rows.iter().flatten().copied().collect(),
    )
    .unwrap()
}

fn check_instance(
    rng: &mut ChaCha8Rng,
    direction: AoaDirection,
    compress: CompressOp,
) {
    let m = rng.gen_range(2..=10);
    let n = rng.gen_range(2..=10);
    let d = rng.gen_range(2..=6);
    let fact_rows = random_rows(rng, m, d);
    let article_rows = random_rows(rng, n, d);
    let expected = oracle(&fact_rows, &article_rows, direction, compress);

    let tape = Tape::new();
    let fact = tape.constant(flat(&fact_rows));
    let article = tape.constant(flat(&article_rows));
    let got = aoa_align(&fact, &article, direction, compress, None).unwrap();

    let alpha = got.alpha.value();
    let beta = got.beta.value();
    for i in 0..m {
        for j in 0..n {
            assert!(
                (alpha.data()[i * n + j] - expected.alpha[i][j]).abs() < TOL,
                "alpha[{i}][{j}] m={m} n={n} {direction:?} {compress:?}"
            );
            assert!(
                (beta.data()[i * n + j] - expected.beta[i][j]).abs() < TOL,
                "beta[{i}][{j}]"
            );
        }
    }
    let nu = got.nu.value();
    for (k, &v) in expected.nu.iter().enumerate() {
        assert!((nu.data()[k] - v).abs() < TOL, "nu[{k}] {direction:?} {compress:?}");
    }
    let omega = got.omega.value();
    for (k, &v) in expected.omega.iter().enumerate() {
        assert!(
            (omega.data()[k] - v).abs() < TOL,
            "omega[{k}] {direction:?} {compress:?}"
        );
    }
}

#[test]
fn matches_scalar_oracle_on_random_instances() {
    for (seed, direction) in [
        (1u64, AoaDirection::FactToArticle),
        (2, AoaDirection::ArticleToFact),
    ] {
        for compress in [CompressOp::Sum, CompressOp::Avg] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + compress as u64 * 100);
            for _ in 0..100 {
                check_instance(&mut rng, direction, compress);
            }
        }
    }
}

#[test]
fn normalization_and_mass_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let m = rng.gen_range(2..=10);
        let n = rng.gen_range(2..=10);
        let fact_rows = random_rows(&mut rng, m, 4);
        let article_rows = random_rows(&mut rng, n, 4);
        let tape = Tape::new();
        let fact = tape.constant(flat(&fact_rows));
        let article = tape.constant(flat(&article_rows));
        let a = aoa_align(
            &fact,
            &article,
            AoaDirection::FactToArticle,
            CompressOp::Sum,
            None,
        )
        .unwrap();
        let alpha = a.alpha.value();
        for i in 0..m {
            let s: f64 = alpha.data()[i * n..(i + 1) * n].iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "alpha row {i}");
        }
        let beta = a.beta.value();
        for j in 0..n {
            let s: f64 = (0..m).map(|i| beta.data()[i * n + j]).sum();
            assert!((s - 1.0).abs() < 1e-6, "beta column {j}");
        }
        assert!((a.nu.value().data().iter().sum::<f64>() - n as f64).abs() < 1e-6);
        assert!((a.omega.value().data().iter().sum::<f64>() - n as f64).abs() < 1e-6);
    }
}
