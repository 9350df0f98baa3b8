//! Dense row-major tensors over a generic floating scalar.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, NumAssignOps};
use thiserror::Error;

/// Scalar types the numeric core can run on.
pub trait Scalar:
    Float + NumAssignOps + Sum + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from f64, used for literals and hyperparameters.
    fn from_f64(v: f64) -> Self {
        Self::from(v).expect("f64 conversion")
    }
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}
impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Error, Debug)]
pub enum NumericsError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("axis {axis} out of range for shape {shape:?}")]
    InvalidAxis { axis: usize, shape: Vec<usize> },
    #[error("empty dimension in {0}")]
    EmptyDim(&'static str),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward called twice without reset")]
    DoubleBackward,
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Dense numeric array with row-major layout.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(bound(
    serialize = "F: serde::Serialize",
    deserialize = "F: serde::de::DeserializeOwned"
))]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NumericsError::DataLength {
                shape,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite("tensor construction"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![F::zero(); numel],
        }
    }

    pub fn filled(shape: Vec<usize>, value: F) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: F) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<F>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        Self::from_vec(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn scalar_value(&self) -> F {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// 2-D accessor; callers guarantee rank 2.
    pub fn at2(&self, i: usize, j: usize) -> F {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: F) {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        self.data[i * cols + j] = v;
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(NumericsError::DataLength {
                shape,
                len: self.data.len(),
            });
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Result<Self> {
        if self.shape != other.shape {
            return Err(NumericsError::ShapeMismatch {
                context: "elementwise op",
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// C = A x B for 2-D tensors.
pub fn matmul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(NumericsError::ShapeMismatch {
            context: "matmul",
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == F::zero() {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::from_vec(vec![m, n], out)
}

pub fn transpose<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    debug_assert_eq!(a.shape().len(), 2);
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Tensor {
        shape: vec![n, m],
        data: out,
    }
}

/// Numerically stable softmax along `axis` of a 1-D or 2-D tensor.
pub fn softmax_axis<F: Scalar>(a: &Tensor<F>, axis: usize) -> Result<Tensor<F>> {
    let rank = a.shape().len();
    if axis >= rank.max(1) {
        return Err(NumericsError::InvalidAxis {
            axis,
            shape: a.shape().to_vec(),
        });
    }
    if rank <= 1 {
        let mut out = a.data.clone();
        softmax_in_place(&mut out);
        return Ok(Tensor {
            shape: a.shape.clone(),
            data: out,
        });
    }
    let (m, n) = (a.rows(), a.cols());
    let mut out = a.data.clone();
    if axis == 1 {
        for i in 0..m {
            softmax_in_place(&mut out[i * n..(i + 1) * n]);
        }
    } else {
        // column softmax
        for j in 0..n {
            let mut col: Vec<F> = (0..m).map(|i| out[i * n + j]).collect();
            softmax_in_place(&mut col);
            for i in 0..m {
                out[i * n + j] = col[i];
            }
        }
    }
    Ok(Tensor {
        shape: a.shape.clone(),
        data: out,
    })
}

fn softmax_in_place<F: Scalar>(v: &mut [F]) {
    let max = v.iter().cloned().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

/// Same-length 1-D convolution. Input is `len x in_ch`, kernel is
/// `h x in_ch x out_ch`, bias `out_ch`. Zero padding of floor((h-1)/2)
/// on the left and ceil((h-1)/2) on the right.
pub fn conv1d_same<F: Scalar>(
    input: &Tensor<F>,
    kernel: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>> {
    if input.shape().len() != 2 || kernel.shape().len() != 3 {
        return Err(NumericsError::Invalid(format!(
            "conv1d_same expects 2-D input and 3-D kernel, got {:?} and {:?}",
            input.shape(),
            kernel.shape()
        )));
    }
    let (len, in_ch) = (input.rows(), input.cols());
    let (h, k_in, out_ch) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if k_in != in_ch {
        return Err(NumericsError::ShapeMismatch {
            context: "conv1d_same channels",
            expected: vec![h, in_ch, out_ch],
            got: kernel.shape().to_vec(),
        });
    }
    if bias.shape() != [out_ch] {
        return Err(NumericsError::ShapeMismatch {
            context: "conv1d_same bias",
            expected: vec![out_ch],
            got: bias.shape().to_vec(),
        });
    }
    if len == 0 || h == 0 {
        return Err(NumericsError::EmptyDim("conv1d_same"));
    }
    let pad_left = (h - 1) / 2;
    let mut out = vec![F::zero(); len * out_ch];
    for i in 0..len {
        for o in 0..out_ch {
            let mut acc = bias.data[o];
            for dh in 0..h {
                // position in the unpadded input
                let pos = i as isize + dh as isize - pad_left as isize;
                if pos < 0 || pos >= len as isize {
                    continue;
                }
                let pos = pos as usize;
                for c in 0..in_ch {
                    acc += kernel.data[(dh * in_ch + c) * out_ch + o] * input.data[pos * in_ch + c];
                }
            }
            out[i * out_ch + o] = acc;
        }
    }
    Tensor::from_vec(vec![len, out_ch], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_basic() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::matrix(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let t = Tensor::vector(vec![0.0, 0.0, 0.0]);
        let s = softmax_axis(&t, 0).unwrap();
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let big = Tensor::vector(vec![1000.0, 1000.0]);
        let s = softmax_axis(&big, 0).unwrap();
        assert!((s.data()[0] - 0.5).abs() < 1e-12);
        assert!(s.all_finite());
    }

    #[test]
    fn softmax_closed_form() {
        let t = Tensor::vector(vec![0.0, 2.0_f64.ln(), 3.0_f64.ln()]);
        let s = softmax_axis(&t, 0).unwrap();
        let expect = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for (v, e) in s.data().iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_identity_kernel() {
        let input = Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let kernel = Tensor::from_vec(vec![1, 1, 1], vec![1.0]).unwrap();
        let bias = Tensor::vector(vec![0.0]);
        let out = conv1d_same(&input, &kernel, &bias).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv_even_kernel_padding() {
        // h=2 pads 0 left / 1 right: out_i = x_i + x_{i+1}, last wraps to zero pad
        let input = Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let kernel = Tensor::from_vec(vec![2, 1, 1], vec![1.0, 1.0]).unwrap();
        let bias = Tensor::vector(vec![0.0]);
        let out = conv1d_same(&input, &kernel, &bias).unwrap();
        assert_eq!(out.data(), &[3.0, 5.0, 7.0, 4.0]);
    }

    #[test]
    fn conv_zero_kernel() {
        let input = Tensor::matrix(5, 2, vec![1.0; 10]).unwrap();
        let kernel = Tensor::zeros(vec![3, 2, 4]);
        let bias = Tensor::zeros(vec![4]);
        let out = conv1d_same(&input, &kernel, &bias).unwrap();
        assert_eq!(out.shape(), &[5, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_preserves_length() {
        for h in 1..=8usize {
            for len in 1..=16usize {
                let input = Tensor::filled(vec![len, 2], 1.0);
                let kernel = Tensor::filled(vec![h, 2, 3], 0.5);
                let bias = Tensor::zeros(vec![3]);
                let out = conv1d_same(&input, &kernel, &bias).unwrap();
                assert_eq!(out.shape(), &[len, 3]);
            }
        }
    }

    #[test]
    fn conv_channel_mismatch() {
        let input = Tensor::matrix(4, 2, vec![0.0; 8]).unwrap();
        let kernel = Tensor::zeros(vec![2, 3, 1]);
        let bias = Tensor::zeros(vec![1]);
        assert!(conv1d_same(&input, &kernel, &bias).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Tensor::from_vec(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::from_vec(vec![1], vec![f64::INFINITY]).is_err());
    }
}
