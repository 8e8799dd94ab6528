use serde::{Deserialize, Serialize};

use super::NnError;

/// Smallest learning rate the plateau scheduler will produce.
pub const LR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamW {
    pub fn new(n: usize, cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// Apply one update. A non-finite gradient leaves `theta` and the
    /// optimizer state untouched.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<(), NnError> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(NnError::ParamSize {
                expected: self.m.len(),
                got: grad.len().min(theta.len()),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient);
        }
        let c = self.cfg;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..theta.len() {
            theta[i] *= 1.0 - c.lr * c.weight_decay;
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            theta[i] -= c.lr * mh / (vh.sqrt() + c.eps);
        }
        Ok(())
    }
}

/// Halve the learning rate after `patience` evaluations without a new best.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    pub patience: usize,
    pub factor: f64,
    pub floor: f64,
    pub best: f64,
    pub bad: usize,
}

impl Default for Plateau {
    fn default() -> Self {
        Self::new(30, 0.5)
    }
}

impl Plateau {
    pub fn new(patience: usize, factor: f64) -> Self {
        Self {
            patience: patience.max(1),
            factor,
            floor: LR_FLOOR,
            best: f64::INFINITY,
            bad: 0,
        }
    }

    /// Record a test loss and return the learning rate to use next.
    pub fn step(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.bad = 0;
            return lr;
        }
        self.bad += 1;
        if self.bad < self.patience {
            return lr;
        }
        self.bad = 0;
        let next = lr * self.factor;
        if next < self.floor {
            log::warn!("learning rate reached the floor {:e}", self.floor);
            return self.floor.min(lr);
        }
        next
    }
}
