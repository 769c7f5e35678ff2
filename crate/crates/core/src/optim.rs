//! AdamW with decoupled weight decay, parameter groups, step decay, and a
//! linear warm-up ramp.
//!
//! Two groups are maintained: the projection head (weights decayed, bias
//! exempt) and the proxies (learning rate scaled up, decay exempt — decaying
//! proxies fights the unit-norm geometry the orthogonality penalty drives
//! toward).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::head::{ProjectionHead, ProxyMatrix};
use crate::linalg::Matrix;
use crate::math;

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub base_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epochs between step-decay applications.
    pub step_size: usize,
    /// Multiplicative decay per step.
    pub gamma: f64,
    /// Linear ramp length in epochs; 0 disables warm-up.
    pub warmup_epochs: usize,
    /// Proxy-group learning rate relative to the head group.
    pub proxy_lr_multiplier: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            base_lr: 1e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_size: 5,
            gamma: 0.5,
            warmup_epochs: 5,
            proxy_lr_multiplier: 100.0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.base_lr.is_finite() || self.base_lr <= 0.0 {
            return Err(Error::InvalidConfig("base_lr must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig("gamma must be in [0, 1]"));
        }
        if self.step_size == 0 {
            return Err(Error::InvalidConfig("step_size must be >= 1"));
        }
        if !self.proxy_lr_multiplier.is_finite() || self.proxy_lr_multiplier < 1.0 {
            return Err(Error::InvalidConfig("proxy_lr_multiplier must be >= 1"));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("weight_decay must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("betas must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Learning rate at `epoch`: step decay times a linear warm-up ramp,
/// `base_lr · gamma^⌊epoch/step_size⌋ · ramp(epoch)` with
/// `ramp = (epoch+1)/warmup_epochs` during warm-up and 1 afterwards.
///
/// Epoch counting starts at 0 and the decay schedule runs through the warm-up
/// epochs.
pub fn scheduled_lr(cfg: &OptimConfig, epoch: usize) -> f64 {
    let decay = math::powi(cfg.gamma, (epoch / cfg.step_size) as i32);
    let ramp = if epoch < cfg.warmup_epochs {
        (epoch + 1) as f64 / cfg.warmup_epochs as f64
    } else {
        1.0
    };
    cfg.base_lr * decay * ramp
}

/// First/second moment accumulators for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Completed steps; drives bias correction.
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One AdamW update over a flat parameter tensor:
///
/// ```text
/// m ← β₁m + (1-β₁)g        v ← β₂v + (1-β₂)g²
/// m̂ = m/(1-β₁ᵗ)            v̂ = v/(1-β₂ᵗ)
/// θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ
/// ```
///
/// Decay is decoupled and computed from the pre-update parameter value.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            params: params.len(),
            grads: grads.len(),
        });
    }
    if state.len() != params.len() {
        return Err(Error::ShapeMismatch {
            params: params.len(),
            grads: state.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - math::powi(cfg.beta1, t);
    let bias2 = 1.0 - math::powi(cfg.beta2, t);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        let old = *p;
        *p = old - lr * m_hat / (math::sqrt(v_hat) + cfg.eps) - lr * weight_decay * old;
    }
    Ok(())
}

/// Optimizer state for the two parameter groups of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedAdamW {
    pub weights: AdamState,
    pub bias: AdamState,
    pub proxies: AdamState,
}

/// Learning rates actually applied in one grouped step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppliedRates {
    pub head_lr: f64,
    pub proxy_lr: f64,
}

impl GroupedAdamW {
    pub fn new(head: &ProjectionHead, proxies: &ProxyMatrix) -> Self {
        GroupedAdamW {
            weights: AdamState::new(head.weights.data().len()),
            bias: AdamState::new(head.bias.len()),
            proxies: AdamState::new(proxies.as_matrix().data().len()),
        }
    }

    /// One update of head and proxies. The head group runs at the scheduled
    /// rate; proxies run at `proxy_lr_multiplier` times that. Weight decay
    /// touches only the head weight matrix.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        head: &mut ProjectionHead,
        proxies: &mut ProxyMatrix,
        grad_weights: &Matrix,
        grad_bias: &[f64],
        grad_proxies: &Matrix,
        epoch: usize,
        cfg: &OptimConfig,
    ) -> Result<AppliedRates> {
        cfg.validate()?;
        let head_lr = scheduled_lr(cfg, epoch);
        let proxy_lr = head_lr * cfg.proxy_lr_multiplier;
        adamw_step(
            head.weights.data_mut(),
            grad_weights.data(),
            &mut self.weights,
            head_lr,
            cfg.weight_decay,
            cfg,
        )?;
        adamw_step(&mut head.bias, grad_bias, &mut self.bias, head_lr, 0.0, cfg)?;
        adamw_step(
            proxies.as_matrix_mut().data_mut(),
            grad_proxies.data(),
            &mut self.proxies,
            proxy_lr,
            0.0,
            cfg,
        )?;
        Ok(AppliedRates { head_lr, proxy_lr })
    }
}
