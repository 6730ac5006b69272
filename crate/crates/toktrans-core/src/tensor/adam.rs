//! Adam optimizer over a [`ParamSet`].

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::num;
use crate::tensor::{Gradients, ParamSet, Tensor};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.98, eps: 1e-9 }
    }
}

/// Adam with bias correction. First and second moment estimates are keyed
/// by parameter name and created lazily, so the same optimizer instance
/// follows a parameter set wherever its gradients come from.
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    slots: Vec<(String, Tensor, Tensor)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, step: 0, slots: Vec::new() }
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Parameters absent from `grads` are left
    /// untouched and their names returned, so callers can notice a model
    /// component that silently stopped training.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Vec<String> {
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - num::powf(self.cfg.beta1, t);
        let c2 = 1.0 - num::powf(self.cfg.beta2, t);
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let mut untouched = Vec::new();
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else {
                untouched.push(name.to_string());
                continue;
            };
            assert_eq!(
                g.shape(),
                p.shape(),
                "gradient shape {:?} against parameter {name:?} of shape {:?}",
                g.shape(),
                p.shape()
            );
            let slot = match self.slots.iter_mut().position(|(n, _, _)| n == name) {
                Some(i) => &mut self.slots[i],
                None => {
                    self.slots.push((
                        name.to_string(),
                        Tensor::zeros(p.shape()),
                        Tensor::zeros(p.shape()),
                    ));
                    self.slots.last_mut().unwrap()
                }
            };
            let (_, m, v) = slot;
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()))
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (num::sqrt(v_hat) + eps);
            }
        }
        untouched
    }
}
