//! Parameter update rules.

use serde::{Deserialize, Serialize};

use crate::model::{ImlpConfig, ImlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerKind {
    /// Bias-corrected adaptive moment estimation.
    Adam { beta1: f64, beta2: f64, eps: f64 },
    /// Heavy-ball SGD.
    SgdMomentum { momentum: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
    /// First moment (Adam) or velocity (momentum).
    pub m: ImlpParams,
    /// Second moment; unused by momentum SGD.
    pub v: ImlpParams,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, config: &ImlpConfig) -> Self {
        Self {
            kind,
            step: 0,
            m: ImlpParams::zeros(config),
            v: ImlpParams::zeros(config),
        }
    }

    /// Applies one update of `params` against `grads`.
    pub fn step(&mut self, params: &mut ImlpParams, grads: &ImlpParams, lr: f64) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(self.m.tensors_mut())
                    .zip(self.v.tensors_mut())
                {
                    let p = p.as_mut_slice();
                    let m = m.as_mut_slice();
                    let v = v.as_mut_slice();
                    for (i, &gi) in g.as_slice().iter().enumerate() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::SgdMomentum { momentum } => {
                for ((p, g), vel) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(self.m.tensors_mut())
                {
                    let p = p.as_mut_slice();
                    let vel = vel.as_mut_slice();
                    for (i, &gi) in g.as_slice().iter().enumerate() {
                        vel[i] = momentum * vel[i] + gi;
                        p[i] -= lr * vel[i];
                    }
                }
            }
        }
    }
}
