use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one moment pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Tensor2>,
    pub v: Vec<Tensor2>,
}

impl AdamState {
    pub fn new<'a, I>(config: AdamConfig, params: I) -> Self
    where
        I: IntoIterator<Item = &'a Tensor2>,
    {
        assert!(config.lr > 0.0, "learning rate must be positive");
        assert!(
            (0.0..1.0).contains(&config.beta1) && (0.0..1.0).contains(&config.beta2),
            "betas must lie in [0, 1)"
        );
        let m: Vec<Tensor2> = params
            .into_iter()
            .map(|p| Tensor2::zeros(p.rows, p.cols))
            .collect();
        AdamState {
            config,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    /// Applies one update. Nothing changes (including `t`) if any gradient
    /// is non-finite or any shape disagrees.
    pub fn step(&mut self, params: &mut [&mut Tensor2], grads: &[&Tensor2]) -> Result<(), NnError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(NnError::ParamCount {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (k, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NnError::Shape {
                    context: "adam parameter/gradient",
                    expected: p.shape(),
                    found: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(NnError::NonFiniteGradient { tensor: k });
            }
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
                v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
