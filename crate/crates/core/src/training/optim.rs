use serde::{Deserialize, Serialize};

/// Adam with decoupled weight decay and global-norm gradient clipping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    /// Global L2 threshold; gradients above it are rescaled onto it.
    pub clip: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 1e-3,
            eps: 1e-8,
            clip: 1.0,
        }
    }
}

/// Step-decay learning-rate schedule `η₀ · factor^⌊t / interval⌋`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrSchedule {
    pub initial: f64,
    pub factor: f64,
    pub interval: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 0.01,
            factor: 0.1,
            interval: 2500,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, step: usize) -> f64 {
        let k = if self.interval == 0 { 0 } else { step / self.interval };
        self.initial * self.factor.powi(k as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }
}

/// What one optimizer step did to the gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub grad_norm: f64,
    pub clipped: bool,
}

/// In-place AdamW update of `theta`. The caller applies any constraint
/// projection afterwards.
pub fn optimizer_step(theta: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &AdamWConfig, lr: f64) -> StepInfo {
    assert_eq!(theta.len(), grad.len());
    assert_eq!(state.m.len(), grad.len(), "optimizer state has the wrong dimension");
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let clipped = grad_norm > cfg.clip;
    let scale = if clipped { cfg.clip / grad_norm } else { 1.0 };
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for j in 0..theta.len() {
        let g = grad[j] * scale;
        state.m[j] = cfg.beta1 * state.m[j] + (1.0 - cfg.beta1) * g;
        state.v[j] = cfg.beta2 * state.v[j] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[j] / bc1;
        let v_hat = state.v[j] / bc2;
        theta[j] = theta[j] * (1.0 - lr * cfg.weight_decay) - lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    StepInfo { grad_norm, clipped }
}
