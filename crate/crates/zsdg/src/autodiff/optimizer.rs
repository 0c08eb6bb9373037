//! Parameter update rules: SGD with momentum and Adam, both with decoupled
//! L2 weight decay (`param -= lr * weight_decay * param`, applied on top of
//! the gradient step and computed from the pre-step parameter value).

use std::collections::BTreeMap;

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    #[serde(flatten)]
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Decoupled L2 weight-decay coefficient (the objectives call this eta).
    pub weight_decay: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            learning_rate: 1e-3,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerSpec {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerSpec {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::SgdMomentum { momentum },
            learning_rate,
            weight_decay: 0.0,
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::usage("learning rate must be finite and >= 0"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::usage("weight decay must be finite and >= 0"));
        }
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::usage("momentum must be in [0,1)"));
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    return Err(Error::usage("adam betas must be in [0,1)"));
                }
                if epsilon.is_nan() || epsilon <= 0.0 {
                    return Err(Error::usage("adam epsilon must be > 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct ParamState {
    /// Momentum buffer (SGD) or first-moment estimate (Adam).
    m: Vec<f64>,
    /// Second-moment estimate (Adam only).
    v: Vec<f64>,
}

/// Stateful optimizer; per-parameter state is keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    state: BTreeMap<String, ParamState>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Optimizer {
            spec,
            state: BTreeMap::new(),
            step_count: 0,
        })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    /// Apply one update to every `(name, param)` pair using `grads[name]`.
    /// Parameters without a gradient entry are left untouched. A non-finite
    /// gradient aborts before any parameter is modified.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut Tensor)],
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        for (name, param) in params.iter() {
            if let Some(g) = grads.get(name) {
                if g.shape() != param.shape() {
                    return Err(Error::Shape {
                        op: "optimizer_step",
                        lhs: param.shape().to_vec(),
                        rhs: g.shape().to_vec(),
                    });
                }
                if !g.all_finite() {
                    return Err(Error::NonFinite {
                        context: format!("gradient of parameter '{name}'"),
                    });
                }
            }
        }
        self.step_count += 1;
        let lr = self.spec.learning_rate;
        let decay = self.spec.weight_decay;
        for (name, param) in params.iter_mut() {
            let grad = match grads.get(name.as_str()) {
                Some(g) => g,
                None => continue,
            };
            let n = param.numel();
            let state = self.state.entry(name.clone()).or_insert_with(|| ParamState {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            match self.spec.kind {
                OptimizerKind::SgdMomentum { momentum } => {
                    for ((p, g), m) in param
                        .values_mut()
                        .iter_mut()
                        .zip(grad.values())
                        .zip(state.m.iter_mut())
                    {
                        *m = momentum * *m + g;
                        let decay_term = lr * decay * *p;
                        *p -= lr * *m;
                        *p -= decay_term;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let bc1 = 1.0 - beta1.powi(self.step_count as i32);
                    let bc2 = 1.0 - beta2.powi(self.step_count as i32);
                    for (((p, g), m), v) in param
                        .values_mut()
                        .iter_mut()
                        .zip(grad.values())
                        .zip(state.m.iter_mut())
                        .zip(state.v.iter_mut())
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        let decay_term = lr * decay * *p;
                        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                        *p -= decay_term;
                    }
                }
            }
        }
        Ok(())
    }
}
