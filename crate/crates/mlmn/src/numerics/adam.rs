//! Bias-corrected Adam updates over a flat list of parameter tensors.

use super::tensor::{NumericsError, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig<F: Scalar> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
}

impl<F: Scalar> AdamConfig<F> {
    pub fn with_lr(lr: F) -> Self {
        Self {
            lr,
            beta1: F::from_f64(0.9),
            beta2: F::from_f64(0.999),
            epsilon: F::from_f64(1e-8),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    pub config: AdamConfig<F>,
    step: u64,
    first_moment: Vec<Tensor<F>>,
    second_moment: Vec<Tensor<F>>,
}

impl<F: Scalar> AdamState<F> {
    /// Zero moments matching the given parameter shapes.
    pub fn new(config: AdamConfig<F>, params: &[&Tensor<F>]) -> Self {
        Self {
            config,
            step: 0,
            first_moment: params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
            second_moment: params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update across all parameters. `grads[i]` pairs with `params[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor<F>], grads: &[&Tensor<F>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(NumericsError::Invalid(format!(
                "adam: {} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let one = F::one();
        let c = self.config;
        let bc1 = one - c.beta1.powi(t);
        let bc2 = one - c.beta2.powi(t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            if param.shape() != grad.shape() {
                return Err(NumericsError::ShapeMismatch {
                    context: "adam_step",
                    expected: param.shape().to_vec(),
                    got: grad.shape().to_vec(),
                });
            }
            let pd = param.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = grad.data()[i];
                md[i] = c.beta1 * md[i] + (one - c.beta1) * g;
                vd[i] = c.beta2 * vd[i] + (one - c.beta2) * g * g;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] = pd[i] - c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
