//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::nn::MlpParams;
use crate::real::Real;
use crate::tensor::Tensor;

/// First/second moments plus hyperparameters; moments line up with
/// [`MlpParams::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &MlpParams<T>, lr: T) -> Self {
        AdamState {
            m: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            v: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            step: 0,
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }

    /// One update. Gradients are validated first; on a non-finite gradient
    /// the parameters and moments are left untouched.
    pub fn step(&mut self, params: &mut MlpParams<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != params.tensors.len() {
            return Err(Error::config("gradient tensor count mismatch"));
        }
        for (g, p) in grads.iter().zip(&params.tensors) {
            if g.shape() != p.shape() {
                return Err(Error::config(format!(
                    "gradient shape {:?} does not match parameter shape {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if let Some(i) = g.first_non_finite() {
                return Err(Error::numeric(format!(
                    "non-finite gradient at element {i}; parameters unchanged"
                )));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let one = T::one();

        for ((p, g), (m, v)) in params
            .tensors
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (pd, gd) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                md[i] = self.beta1 * md[i] + (one - self.beta1) * gd[i];
                vd[i] = self.beta2 * vd[i] + (one - self.beta2) * gd[i] * gd[i];
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] = pd[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
