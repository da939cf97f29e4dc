use serde::{Deserialize, Serialize};

use super::network::Network;
use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::param("Adam step counter starts at 1"));
    }
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::param("Adam buffers differ in length"));
    }
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one = T::one();
    let c1 = T::from_f64_lossy(1.0 - cfg.beta1.powf(t as f64));
    let c2 = T::from_f64_lossy(1.0 - cfg.beta2.powf(t as f64));
    let lr = T::from_f64_lossy(cfg.lr);
    let eps = T::from_f64_lossy(cfg.eps);
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.m[i] + (one - b1) * g;
        let v = b2 * state.v[i] + (one - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        params[i] = params[i] - lr * (m / c1) / ((v / c2).sqrt() + eps);
    }
    Ok(())
}

/// `v ← momentum·v + g`, then `p ← p − lr·v`.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || velocity.len() != params.len() {
        return Err(Error::param("SGD buffers differ in length"));
    }
    let lr = T::from_f64_lossy(lr);
    let mu = T::from_f64_lossy(momentum);
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = mu * *v + g;
        *p = *p - lr * *v;
    }
    Ok(())
}

/// Adam over every parameter of one network.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    states: Vec<AdamState<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &Network<T>, config: AdamConfig) -> Self {
        Self {
            config,
            states: net
                .params()
                .iter()
                .map(|p| AdamState::new(p.value.len()))
                .collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies the accumulated gradients.
    pub fn step(&mut self, net: &mut Network<T>) -> Result<()> {
        self.t += 1;
        for (p, s) in net.params_mut().into_iter().zip(&mut self.states) {
            adam_step(&mut p.value, &p.grad, s, &self.config, self.t)?;
        }
        Ok(())
    }
}

/// SGD with momentum over every parameter of one network.
#[derive(Debug, Clone)]
pub struct SgdMomentum<T> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(net: &Network<T>, lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: net
                .params()
                .iter()
                .map(|p| vec![T::zero(); p.value.len()])
                .collect(),
        }
    }

    pub fn step(&mut self, net: &mut Network<T>) -> Result<()> {
        for (p, v) in net.params_mut().into_iter().zip(&mut self.velocity) {
            sgd_momentum_step(&mut p.value, &p.grad, v, self.lr, self.momentum)?;
        }
        Ok(())
    }
}
