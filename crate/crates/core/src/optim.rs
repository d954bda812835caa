//! Adam with decoupled weight decay.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::params::ModelParams;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Per-tensor moment state. `steps` counts the updates this tensor has
/// received, which lags the global step for tensors that sometimes get no
/// gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub steps: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub state: Vec<Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ModelParams) -> Self {
        let state = params
            .iter()
            .map(|(_, _, t)| Moments {
                steps: 0,
                m: alloc::vec![0.0; t.len()],
                v: alloc::vec![0.0; t.len()],
            })
            .collect();
        Self { config, state }
    }

    /// Applies one update. `grads[i]` is the gradient of parameter `i`;
    /// parameters with `None` are left untouched, weight decay included.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Option<Tensor>]) {
        assert_eq!(grads.len(), self.state.len(), "gradient count");
        let c = self.config;
        for ((g, p), st) in grads.iter().zip(params.tensors_mut()).zip(&mut self.state) {
            let Some(g) = g else { continue };
            assert_eq!(p.len(), g.len(), "gradient shape");
            st.steps += 1;
            let bc1 = 1.0 - libm::pow(c.beta1, st.steps as f64);
            let bc2 = 1.0 - libm::pow(c.beta2, st.steps as f64);
            for k in 0..p.data.len() {
                let gk = g.data[k];
                st.m[k] = c.beta1 * st.m[k] + (1.0 - c.beta1) * gk;
                st.v[k] = c.beta2 * st.v[k] + (1.0 - c.beta2) * gk * gk;
                let m_hat = st.m[k] / bc1;
                let v_hat = st.v[k] / bc2;
                let w = p.data[k] * (1.0 - c.learning_rate * c.weight_decay);
                p.data[k] = w - c.learning_rate * m_hat / (libm::sqrt(v_hat) + c.eps);
            }
        }
    }
}
