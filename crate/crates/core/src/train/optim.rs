//! Plain SGD and bias-corrected Adam.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Model};
use crate::tensor::{Element, Tensor};

/// `param - learning_rate * grad`.
pub fn sgd_step<T: Element>(param: &Tensor<T>, grad: &Tensor<T>, learning_rate: T) -> Result<Tensor<T>> {
    let mut out = param.clone();
    apply_sgd(&mut out, grad, learning_rate)?;
    Ok(out)
}

fn apply_sgd<T: Element>(param: &mut Tensor<T>, grad: &Tensor<T>, learning_rate: T) -> Result<()> {
    if !(learning_rate > T::zero()) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {learning_rate}")));
    }
    param.ensure_same_shape(grad, "sgd_step")?;
    for (p, &g) in param.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *p -= learning_rate * g;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Per-parameter Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    pub step_count: u64,
    moments: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Element> AdamState<T> {
    /// Zero moments shaped like `param`.
    pub fn new(config: AdamConfig, param: &Tensor<T>) -> Self {
        Self {
            config,
            step_count: 0,
            moments: Some((Tensor::zeros_like(param), Tensor::zeros_like(param))),
        }
    }

    /// A state with no moments; stepping it is an error.
    pub fn uninitialized(config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            moments: None,
        }
    }

    pub fn first_moment(&self) -> Option<&Tensor<T>> {
        self.moments.as_ref().map(|m| &m.0)
    }

    pub fn second_moment(&self) -> Option<&Tensor<T>> {
        self.moments.as_ref().map(|m| &m.1)
    }

    /// In-place update of `param`.
    pub fn apply(&mut self, param: &mut Tensor<T>, grad: &Tensor<T>) -> Result<()> {
        let cfg = self.config;
        let (m, v) = self
            .moments
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument("adam state is not initialized".into()))?;
        param.ensure_same_shape(grad, "adam_step grad")?;
        param.ensure_same_shape(m, "adam_step moments")?;
        let t = self.step_count + 1;
        let bc1 = T::of(1.0 - cfg.beta1.powf(t as f64));
        let bc2 = T::of(1.0 - cfg.beta2.powf(t as f64));
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
        let (lr, eps) = (T::of(cfg.learning_rate), T::of(cfg.epsilon));
        for (((p, &g), mi), vi) in param
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *mi = b1 * *mi + one_b1 * g;
            *vi = b2 * *vi + one_b2 * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        self.step_count = t;
        Ok(())
    }
}

/// One Adam update, returning the new parameter and the advanced state.
pub fn adam_step<T: Element>(param: &Tensor<T>, grad: &Tensor<T>, state: &AdamState<T>) -> Result<(Tensor<T>, AdamState<T>)> {
    let mut p = param.clone();
    let mut s = state.clone();
    s.apply(&mut p, grad)?;
    Ok((p, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Applies updates to every non-frozen parameter of a model.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { learning_rate: f64 },
    Adam { states: Vec<Vec<AdamState<f32>>> },
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        Optimizer::Sgd { learning_rate }
    }

    pub fn adam(config: AdamConfig, model: &Model) -> Self {
        let states = model
            .nodes()
            .iter()
            .map(|n| n.layer.params().into_iter().map(|p| AdamState::new(config, p)).collect())
            .collect();
        Optimizer::Adam { states }
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64, model: &Model) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::sgd(learning_rate),
            OptimizerKind::Adam => Self::adam(AdamConfig::with_learning_rate(learning_rate), model),
        }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Gradients) -> Result<()> {
        for (i, node) in model.nodes_mut().iter_mut().enumerate() {
            if node.frozen {
                continue;
            }
            let node_grads = &grads.per_node[i];
            for (j, param) in node.layer.params_mut().into_iter().enumerate() {
                match self {
                    Optimizer::Sgd { learning_rate } => apply_sgd(param, &node_grads[j], *learning_rate as f32)?,
                    Optimizer::Adam { states } => states[i][j].apply(param, &node_grads[j])?,
                }
            }
        }
        Ok(())
    }
}
