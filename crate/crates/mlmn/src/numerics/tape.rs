//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every primitive application is appended to the tape in execution
//! order, so the tape itself is a topological order and one reverse
//! sweep propagates gradients to every leaf exactly once.

use std::cell::RefCell;
use std::rc::Rc;

use super::tensor::{
    conv1d_same, matmul, softmax_axis, transpose, NumericsError, Result, Scalar, Tensor,
};

#[derive(Debug)]
enum Op<F: Scalar> {
    Leaf,
    Add(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    Scale(usize, F),
    Matmul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Conv1dSame {
        input: usize,
        kernel: usize,
        bias: usize,
    },
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Softmax {
        input: usize,
        axis: usize,
    },
    RowScale {
        mat: usize,
        vec: usize,
    },
    ConcatCols(usize, usize),
    ConcatFlat(Vec<usize>),
    SliceCols {
        input: usize,
        start: usize,
        len: usize,
    },
    SliceRows {
        input: usize,
        start: usize,
        len: usize,
    },
    MaxPoolLast {
        input: usize,
        argmax: Vec<usize>,
    },
    RowSum(usize),
    Dropout {
        input: usize,
        mask: Vec<F>,
    },
    CrossEntropyLogits {
        logits: usize,
        label: usize,
    },
    SumAll(usize),
}

struct Node<F: Scalar> {
    value: Tensor<F>,
    grad: Option<Tensor<F>>,
    requires_grad: bool,
    op: Op<F>,
}

struct TapeInner<F: Scalar> {
    nodes: Vec<Node<F>>,
    backward_done: bool,
}

/// Records primitive applications for one forward pass.
pub struct Tape<F: Scalar> {
    inner: Rc<RefCell<TapeInner<F>>>,
}

impl<F: Scalar> Clone for Tape<F> {
    fn clone(&self) -> Self {
        Self {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to one tape node.
pub struct Var<F: Scalar> {
    tape: Tape<F>,
    id: usize,
}

impl<F: Scalar> Clone for Var<F> {
    fn clone(&self) -> Self {
        Self {
            tape: self.tape.clone(),
            id: self.id,
        }
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                backward_done: false,
            })),
        }
    }

    fn push(&self, value: Tensor<F>, requires_grad: bool, op: Op<F>) -> Var<F> {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var {
            tape: self.clone(),
            id: inner.nodes.len() - 1,
        }
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<F>) -> Var<F> {
        self.push(value, false, Op::Leaf)
    }

    /// Trainable leaf; its gradient is available after backward.
    pub fn param(&self, value: Tensor<F>) -> Var<F> {
        self.push(value, true, Op::Leaf)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let inner = self.inner.borrow();
        ids.iter().any(|&i| inner.nodes[i].requires_grad)
    }

    fn value_of(&self, id: usize) -> Tensor<F> {
        self.inner.borrow().nodes[id].value.clone()
    }
}

impl<F: Scalar> Var<F> {
    pub fn value(&self) -> Tensor<F> {
        self.tape.value_of(self.id)
    }

    pub fn tape(&self) -> Tape<F> {
        self.tape.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].value.shape().to_vec()
    }

    /// Gradient populated by the last backward pass, if any.
    pub fn grad(&self) -> Option<Tensor<F>> {
        self.tape.inner.borrow().nodes[self.id].grad.clone()
    }

    fn unary(&self, value: Tensor<F>, op: Op<F>) -> Var<F> {
        let req = self.tape.requires(&[self.id]);
        self.tape.push(value, req, op)
    }

    fn binary(&self, other: &Var<F>, value: Tensor<F>, op: Op<F>) -> Var<F> {
        debug_assert!(Rc::ptr_eq(&self.tape.inner, &other.tape.inner));
        let req = self.tape.requires(&[self.id, other.id]);
        self.tape.push(value, req, op)
    }

    pub fn add(&self, other: &Var<F>) -> Result<Var<F>> {
        let v = self.value().zip_map(&other.value(), |a, b| a + b)?;
        Ok(self.binary(other, v, Op::Add(self.id, other.id)))
    }

    pub fn mul(&self, other: &Var<F>) -> Result<Var<F>> {
        let v = self.value().zip_map(&other.value(), |a, b| a * b)?;
        Ok(self.binary(other, v, Op::Mul(self.id, other.id)))
    }

    /// Adds a `[w]` bias to every row of a `[r, w]` matrix.
    pub fn add_bias(&self, bias: &Var<F>) -> Result<Var<F>> {
        let a = self.value();
        let b = bias.value();
        if a.shape().len() != 2 || b.shape() != [a.cols()] {
            return Err(NumericsError::ShapeMismatch {
                context: "add_bias",
                expected: vec![a.cols()],
                got: b.shape().to_vec(),
            });
        }
        let (r, w) = (a.rows(), a.cols());
        let mut out = a.data().to_vec();
        for i in 0..r {
            for j in 0..w {
                out[i * w + j] += b.data()[j];
            }
        }
        let v = Tensor::from_vec(vec![r, w], out)?;
        Ok(self.binary(bias, v, Op::AddBias(self.id, bias.id)))
    }

    pub fn scale(&self, c: F) -> Var<F> {
        let v = self.value().map(|x| x * c);
        self.unary(v, Op::Scale(self.id, c))
    }

    pub fn matmul(&self, other: &Var<F>) -> Result<Var<F>> {
        let v = matmul(&self.value(), &other.value())?;
        Ok(self.binary(other, v, Op::Matmul(self.id, other.id)))
    }

    pub fn transpose(&self) -> Var<F> {
        let v = transpose(&self.value());
        self.unary(v, Op::Transpose(self.id))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<F>> {
        let v = self.value().reshaped(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }

    pub fn conv1d_same(&self, kernel: &Var<F>, bias: &Var<F>) -> Result<Var<F>> {
        let v = conv1d_same(&self.value(), &kernel.value(), &bias.value())?;
        let req = self.tape.requires(&[self.id, kernel.id, bias.id]);
        Ok(self.tape.push(
            v,
            req,
            Op::Conv1dSame {
                input: self.id,
                kernel: kernel.id,
                bias: bias.id,
            },
        ))
    }

    pub fn relu(&self) -> Var<F> {
        let v = self.value().map(|x| if x > F::zero() { x } else { F::zero() });
        self.unary(v, Op::Relu(self.id))
    }

    pub fn sigmoid(&self) -> Var<F> {
        let one = F::one();
        let v = self.value().map(|x| one / (one + (-x).exp()));
        self.unary(v, Op::Sigmoid(self.id))
    }

    pub fn tanh(&self) -> Var<F> {
        let v = self.value().map(|x| x.tanh());
        self.unary(v, Op::Tanh(self.id))
    }

    pub fn softmax(&self, axis: usize) -> Result<Var<F>> {
        let v = softmax_axis(&self.value(), axis)?;
        Ok(self.unary(
            v,
            Op::Softmax {
                input: self.id,
                axis,
            },
        ))
    }

    /// Scales row `j` of a `[n, w]` matrix by element `j` of a `[n]` vector.
    pub fn row_scale(&self, weights: &Var<F>) -> Result<Var<F>> {
        let m = self.value();
        let w = weights.value();
        if m.shape().len() != 2 || w.shape() != [m.rows()] {
            return Err(NumericsError::ShapeMismatch {
                context: "row_scale",
                expected: vec![m.rows()],
                got: w.shape().to_vec(),
            });
        }
        let (r, c) = (m.rows(), m.cols());
        let mut out = m.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] *= w.data()[i];
            }
        }
        let v = Tensor::from_vec(vec![r, c], out)?;
        Ok(self.binary(
            weights,
            v,
            Op::RowScale {
                mat: self.id,
                vec: weights.id,
            },
        ))
    }

    pub fn concat_cols(&self, other: &Var<F>) -> Result<Var<F>> {
        let a = self.value();
        let b = other.value();
        if a.shape().len() != 2 || b.shape().len() != 2 || a.rows() != b.rows() {
            return Err(NumericsError::ShapeMismatch {
                context: "concat_cols",
                expected: a.shape().to_vec(),
                got: b.shape().to_vec(),
            });
        }
        let (r, wa, wb) = (a.rows(), a.cols(), b.cols());
        let mut out = Vec::with_capacity(r * (wa + wb));
        for i in 0..r {
            out.extend_from_slice(&a.data()[i * wa..(i + 1) * wa]);
            out.extend_from_slice(&b.data()[i * wb..(i + 1) * wb]);
        }
        let v = Tensor::from_vec(vec![r, wa + wb], out)?;
        Ok(self.binary(other, v, Op::ConcatCols(self.id, other.id)))
    }

    /// Concatenates flattened inputs into one vector.
    pub fn concat_flat(parts: &[Var<F>]) -> Result<Var<F>> {
        assert!(!parts.is_empty());
        let tape = parts[0].tape.clone();
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(p.value().data());
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let req = tape.requires(&ids);
        let n = data.len();
        let v = Tensor::from_vec(vec![n], data)?;
        Ok(tape.push(v, req, Op::ConcatFlat(ids)))
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Var<F>> {
        let a = self.value();
        if a.shape().len() != 2 || start + len > a.cols() {
            return Err(NumericsError::Invalid(format!(
                "slice_cols [{start}, {start}+{len}) out of range for {:?}",
                a.shape()
            )));
        }
        let (r, w) = (a.rows(), a.cols());
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&a.data()[i * w + start..i * w + start + len]);
        }
        let v = Tensor::from_vec(vec![r, len], out)?;
        Ok(self.unary(
            v,
            Op::SliceCols {
                input: self.id,
                start,
                len,
            },
        ))
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Var<F>> {
        let a = self.value();
        if a.shape().len() != 2 || start + len > a.rows() {
            return Err(NumericsError::Invalid(format!(
                "slice_rows [{start}, {start}+{len}) out of range for {:?}",
                a.shape()
            )));
        }
        let w = a.cols();
        let out = a.data()[start * w..(start + len) * w].to_vec();
        let v = Tensor::from_vec(vec![len, w], out)?;
        Ok(self.unary(
            v,
            Op::SliceRows {
                input: self.id,
                start,
                len,
            },
        ))
    }

    /// Max over the last dimension of a `[n, t]` matrix. Gradient is
    /// routed to the first index among ties.
    pub fn max_pool_last(&self) -> Result<Var<F>> {
        let a = self.value();
        if a.shape().len() != 2 || a.cols() == 0 {
            return Err(NumericsError::EmptyDim("max_pool_last"));
        }
        let (n, t) = (a.rows(), a.cols());
        let mut out = Vec::with_capacity(n);
        let mut argmax = Vec::with_capacity(n);
        for i in 0..n {
            let row = &a.data()[i * t..(i + 1) * t];
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            out.push(row[best]);
            argmax.push(best);
        }
        let v = Tensor::from_vec(vec![n], out)?;
        Ok(self.unary(
            v,
            Op::MaxPoolLast {
                input: self.id,
                argmax,
            },
        ))
    }

    /// Sums each row of a `[m, n]` matrix into a `[m]` vector.
    pub fn row_sum(&self) -> Result<Var<F>> {
        let a = self.value();
        if a.shape().len() != 2 {
            return Err(NumericsError::Invalid(format!(
                "row_sum expects a matrix, got {:?}",
                a.shape()
            )));
        }
        let (m, n) = (a.rows(), a.cols());
        let out: Vec<F> = (0..m)
            .map(|i| a.data()[i * n..(i + 1) * n].iter().cloned().sum())
            .collect();
        let v = Tensor::from_vec(vec![m], out)?;
        Ok(self.unary(v, Op::RowSum(self.id)))
    }

    /// Inverted dropout with a caller-supplied mask of zeros and
    /// `1/(1-rate)` survivors.
    pub fn dropout_with_mask(&self, mask: Vec<F>) -> Result<Var<F>> {
        let a = self.value();
        if mask.len() != a.numel() {
            return Err(NumericsError::DataLength {
                shape: a.shape().to_vec(),
                len: mask.len(),
            });
        }
        let data: Vec<F> = a.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let v = Tensor::from_vec(a.shape().to_vec(), data)?;
        Ok(self.unary(
            v,
            Op::Dropout {
                input: self.id,
                mask,
            },
        ))
    }

    /// `-log softmax(logits)[label]` for a logit vector.
    pub fn cross_entropy(&self, label: usize) -> Result<Var<F>> {
        let a = self.value();
        if a.shape().len() != 1 || label >= a.numel() {
            return Err(NumericsError::Invalid(format!(
                "cross_entropy: label {label} out of range for logits {:?}",
                a.shape()
            )));
        }
        let probs = softmax_axis(&a, 0)?;
        let loss = -(probs.data()[label].ln());
        let v = Tensor::scalar(loss);
        Ok(self.unary(
            v,
            Op::CrossEntropyLogits {
                logits: self.id,
                label,
            },
        ))
    }

    pub fn sum_all(&self) -> Var<F> {
        let s: F = self.value().data().iter().cloned().sum();
        self.unary(Tensor::scalar(s), Op::SumAll(self.id))
    }

    /// Reverse sweep seeding this node's gradient with 1.
    pub fn backward(&self) -> Result<()> {
        {
            let inner = self.tape.inner.borrow();
            if inner.backward_done {
                return Err(NumericsError::DoubleBackward);
            }
            let v = &inner.nodes[self.id].value;
            if !v.is_scalar() {
                return Err(NumericsError::NonScalarLoss(v.shape().to_vec()));
            }
        }
        let n = self.tape.len();
        let mut grads: Vec<Option<Tensor<F>>> = (0..n).map(|_| None).collect();
        grads[self.id] = Some(Tensor::scalar(F::one()));

        let inner = self.tape.inner.borrow();
        for i in (0..n).rev() {
            let grad_out = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            if !inner.nodes[i].requires_grad {
                continue;
            }
            backprop_node(&inner.nodes, i, &grad_out, &mut grads);
            grads[i] = Some(grad_out);
        }
        drop(inner);

        let mut inner = self.tape.inner.borrow_mut();
        for (node, g) in inner.nodes.iter_mut().zip(grads) {
            if node.requires_grad {
                node.grad = g;
            }
        }
        inner.backward_done = true;
        Ok(())
    }
}

fn accumulate<F: Scalar>(slot: &mut Option<Tensor<F>>, contrib: Tensor<F>) {
    match slot {
        Some(existing) => {
            let sum = existing
                .zip_map(&contrib, |a, b| a + b)
                .expect("gradient shapes agree");
            *existing = sum;
        }
        None => *slot = Some(contrib),
    }
}

fn backprop_node<F: Scalar>(
    nodes: &[Node<F>],
    i: usize,
    grad_out: &Tensor<F>,
    grads: &mut Vec<Option<Tensor<F>>>,
) {
    let needs = |id: usize| nodes[id].requires_grad;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if needs(*a) {
                accumulate(&mut grads[*a], grad_out.clone());
            }
            if needs(*b) {
                accumulate(&mut grads[*b], grad_out.clone());
            }
        }
        Op::Mul(a, b) => {
            if needs(*a) {
                let g = grad_out
                    .zip_map(&nodes[*b].value, |g, v| g * v)
                    .expect("mul shapes");
                accumulate(&mut grads[*a], g);
            }
            if needs(*b) {
                let g = grad_out
                    .zip_map(&nodes[*a].value, |g, v| g * v)
                    .expect("mul shapes");
                accumulate(&mut grads[*b], g);
            }
        }
        Op::AddBias(a, b) => {
            if needs(*a) {
                accumulate(&mut grads[*a], grad_out.clone());
            }
            if needs(*b) {
                let (r, w) = (grad_out.rows(), grad_out.cols());
                let mut g = vec![F::zero(); w];
                for row in 0..r {
                    for j in 0..w {
                        g[j] += grad_out.data()[row * w + j];
                    }
                }
                accumulate(&mut grads[*b], Tensor::vector(g));
            }
        }
        Op::Scale(a, c) => {
            if needs(*a) {
                accumulate(&mut grads[*a], grad_out.map(|g| g * *c));
            }
        }
        Op::Matmul(a, b) => {
            if needs(*a) {
                let g = matmul(grad_out, &transpose(&nodes[*b].value)).expect("matmul grad");
                accumulate(&mut grads[*a], g);
            }
            if needs(*b) {
                let g = matmul(&transpose(&nodes[*a].value), grad_out).expect("matmul grad");
                accumulate(&mut grads[*b], g);
            }
        }
        Op::Transpose(a) => {
            if needs(*a) {
                accumulate(&mut grads[*a], transpose(grad_out));
            }
        }
        Op::Reshape(a) => {
            if needs(*a) {
                let shape = nodes[*a].value.shape().to_vec();
                accumulate(&mut grads[*a], grad_out.reshaped(shape).expect("reshape grad"));
            }
        }
        Op::Conv1dSame { input, kernel, bias } => {
            let x = &nodes[*input].value;
            let k = &nodes[*kernel].value;
            let (len, in_ch) = (x.rows(), x.cols());
            let (h, out_ch) = (k.shape()[0], k.shape()[2]);
            let pad_left = (h - 1) / 2;
            if needs(*bias) {
                let mut g = vec![F::zero(); out_ch];
                for i2 in 0..len {
                    for o in 0..out_ch {
                        g[o] += grad_out.data()[i2 * out_ch + o];
                    }
                }
                accumulate(&mut grads[*bias], Tensor::vector(g));
            }
            if needs(*kernel) {
                let mut g = vec![F::zero(); h * in_ch * out_ch];
                for i2 in 0..len {
                    for dh in 0..h {
                        let pos = i2 as isize + dh as isize - pad_left as isize;
                        if pos < 0 || pos >= len as isize {
                            continue;
                        }
                        let pos = pos as usize;
                        for c in 0..in_ch {
                            let xv = x.data()[pos * in_ch + c];
                            if xv == F::zero() {
                                continue;
                            }
                            for o in 0..out_ch {
                                g[(dh * in_ch + c) * out_ch + o] +=
                                    grad_out.data()[i2 * out_ch + o] * xv;
                            }
                        }
                    }
                }
                accumulate(
                    &mut grads[*kernel],
                    Tensor::from_vec(vec![h, in_ch, out_ch], g).expect("kernel grad"),
                );
            }
            if needs(*input) {
                let mut g = vec![F::zero(); len * in_ch];
                for i2 in 0..len {
                    for dh in 0..h {
                        let pos = i2 as isize + dh as isize - pad_left as isize;
                        if pos < 0 || pos >= len as isize {
                            continue;
                        }
                        let pos = pos as usize;
                        for o in 0..out_ch {
                            let go = grad_out.data()[i2 * out_ch + o];
                            if go == F::zero() {
                                continue;
                            }
                            for c in 0..in_ch {
                                g[pos * in_ch + c] += go * k.data()[(dh * in_ch + c) * out_ch + o];
                            }
                        }
                    }
                }
                accumulate(
                    &mut grads[*input],
                    Tensor::from_vec(vec![len, in_ch], g).expect("input grad"),
                );
            }
        }
        Op::Relu(a) => {
            if needs(*a) {
                let g = grad_out
                    .zip_map(&nodes[i].value, |g, y| if y > F::zero() { g } else { F::zero() })
                    .expect("relu grad");
                accumulate(&mut grads[*a], g);
            }
        }
        Op::Sigmoid(a) => {
            if needs(*a) {
                let one = F::one();
                let g = grad_out
                    .zip_map(&nodes[i].value, |g, y| g * y * (one - y))
                    .expect("sigmoid grad");
                accumulate(&mut grads[*a], g);
            }
        }
        Op::Tanh(a) => {
            if needs(*a) {
                let one = F::one();
                let g = grad_out
                    .zip_map(&nodes[i].value, |g, y| g * (one - y * y))
                    .expect("tanh grad");
                accumulate(&mut grads[*a], g);
            }
        }
        Op::Softmax { input, axis } => {
            if needs(*input) {
                let y = &nodes[i].value;
                let g = softmax_backward(y, grad_out, *axis);
                accumulate(&mut grads[*input], g);
            }
        }
        Op::RowScale { mat, vec } => {
            let m = &nodes[*mat].value;
            let w = &nodes[*vec].value;
            let (r, c) = (m.rows(), m.cols());
            if needs(*mat) {
                let mut g = grad_out.data().to_vec();
                for i2 in 0..r {
                    for j in 0..c {
                        g[i2 * c + j] *= w.data()[i2];
                    }
                }
                accumulate(
                    &mut grads[*mat],
                    Tensor::from_vec(vec![r, c], g).expect("row_scale grad"),
                );
            }
            if needs(*vec) {
                let g: Vec<F> = (0..r)
                    .map(|i2| {
                        (0..c)
                            .map(|j| grad_out.data()[i2 * c + j] * m.data()[i2 * c + j])
                            .sum()
                    })
                    .collect();
                accumulate(&mut grads[*vec], Tensor::vector(g));
            }
        }
        Op::ConcatCols(a, b) => {
            let wa = nodes[*a].value.cols();
            let wb = nodes[*b].value.cols();
            let r = nodes[*a].value.rows();
            let w = wa + wb;
            if needs(*a) {
                let mut g = Vec::with_capacity(r * wa);
                for i2 in 0..r {
                    g.extend_from_slice(&grad_out.data()[i2 * w..i2 * w + wa]);
                }
                accumulate(
                    &mut grads[*a],
                    Tensor::from_vec(vec![r, wa], g).expect("concat grad"),
                );
            }
            if needs(*b) {
                let mut g = Vec::with_capacity(r * wb);
                for i2 in 0..r {
                    g.extend_from_slice(&grad_out.data()[i2 * w + wa..(i2 + 1) * w]);
                }
                accumulate(
                    &mut grads[*b],
                    Tensor::from_vec(vec![r, wb], g).expect("concat grad"),
                );
            }
        }
        Op::ConcatFlat(ids) => {
            let mut offset = 0usize;
            for &id in ids {
                let numel = nodes[id].value.numel();
                if needs(id) {
                    let shape = nodes[id].value.shape().to_vec();
                    let g = grad_out.data()[offset..offset + numel].to_vec();
                    accumulate(
                        &mut grads[id],
                        Tensor::from_vec(shape, g).expect("concat_flat grad"),
                    );
                }
                offset += numel;
            }
        }
        Op::SliceCols { input, start, len } => {
            if needs(*input) {
                let (r, w) = (nodes[*input].value.rows(), nodes[*input].value.cols());
                let mut g = vec![F::zero(); r * w];
                for i2 in 0..r {
                    for j in 0..*len {
                        g[i2 * w + start + j] = grad_out.data()[i2 * len + j];
                    }
                }
                accumulate(
                    &mut grads[*input],
                    Tensor::from_vec(vec![r, w], g).expect("slice grad"),
                );
            }
        }
        Op::SliceRows { input, start, len } => {
            if needs(*input) {
                let (r, w) = (nodes[*input].value.rows(), nodes[*input].value.cols());
                let mut g = vec![F::zero(); r * w];
                g[start * w..(start + len) * w].copy_from_slice(grad_out.data());
                accumulate(
                    &mut grads[*input],
                    Tensor::from_vec(vec![r, w], g).expect("slice grad"),
                );
            }
        }
        Op::MaxPoolLast { input, argmax } => {
            if needs(*input) {
                let (n, t) = (nodes[*input].value.rows(), nodes[*input].value.cols());
                let mut g = vec![F::zero(); n * t];
                for (row, &arg) in argmax.iter().enumerate() {
                    g[row * t + arg] = grad_out.data()[row];
                }
                accumulate(
                    &mut grads[*input],
                    Tensor::from_vec(vec![n, t], g).expect("maxpool grad"),
                );
            }
        }
        Op::RowSum(a) => {
            if needs(*a) {
                let (m, n2) = (nodes[*a].value.rows(), nodes[*a].value.cols());
                let mut g = vec![F::zero(); m * n2];
                for i2 in 0..m {
                    for j in 0..n2 {
                        g[i2 * n2 + j] = grad_out.data()[i2];
                    }
                }
                accumulate(
                    &mut grads[*a],
                    Tensor::from_vec(vec![m, n2], g).expect("row_sum grad"),
                );
            }
        }
        Op::Dropout { input, mask } => {
            if needs(*input) {
                let shape = nodes[*input].value.shape().to_vec();
                let g: Vec<F> = grad_out
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(&g, &m)| g * m)
                    .collect();
                accumulate(
                    &mut grads[*input],
                    Tensor::from_vec(shape, g).expect("dropout grad"),
                );
            }
        }
        Op::CrossEntropyLogits { logits, label } => {
            if needs(*logits) {
                let probs = softmax_axis(&nodes[*logits].value, 0).expect("softmax");
                let gl = grad_out.scalar_value();
                let g: Vec<F> = probs
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| {
                        let target = if j == *label { F::one() } else { F::zero() };
                        (p - target) * gl
                    })
                    .collect();
                accumulate(&mut grads[*logits], Tensor::vector(g));
            }
        }
        Op::SumAll(a) => {
            if needs(*a) {
                let shape = nodes[*a].value.shape().to_vec();
                let gl = grad_out.scalar_value();
                accumulate(&mut grads[*a], Tensor::filled(shape, gl));
            }
        }
    }
}

/// dX = y * (dY - sum(dY * y)) along the softmax axis.
fn softmax_backward<F: Scalar>(y: &Tensor<F>, grad_out: &Tensor<F>, axis: usize) -> Tensor<F> {
    if y.shape().len() <= 1 {
        let dot: F = y
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&yv, &g)| yv * g)
            .sum();
        let data: Vec<F> = y
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&yv, &g)| yv * (g - dot))
            .collect();
        return Tensor::from_vec(y.shape().to_vec(), data).expect("softmax grad");
    }
    let (m, n) = (y.rows(), y.cols());
    let mut out = vec![F::zero(); m * n];
    if axis == 1 {
        for i in 0..m {
            let yr = &y.data()[i * n..(i + 1) * n];
            let gr = &grad_out.data()[i * n..(i + 1) * n];
            let dot: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
            for j in 0..n {
                out[i * n + j] = yr[j] * (gr[j] - dot);
            }
        }
    } else {
        for j in 0..n {
            let mut dot = F::zero();
            for i in 0..m {
                dot += y.data()[i * n + j] * grad_out.data()[i * n + j];
            }
            for i in 0..m {
                out[i * n + j] = y.data()[i * n + j] * (grad_out.data()[i * n + j] - dot);
            }
        }
    }
    Tensor::from_vec(vec![m, n], out).expect("softmax grad")
}
