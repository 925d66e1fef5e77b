//! Parameter update rules over the flat parameter vector.

use alloc::vec;
use alloc::vec::Vec;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    /// One update; entries with `frozen[i]` set are left untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], frozen: &[bool]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let step = self.learning_rate * libm::sqrt(c2) / c1;
        let eps = self.eps * libm::sqrt(c2);
        for i in 0..params.len() {
            if frozen[i] {
                continue;
            }
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= step * self.m[i] / (libm::sqrt(self.v[i]) + eps);
        }
    }
}

/// Plain gradient descent `θ ← θ - lr * g`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], frozen: &[bool], learning_rate: f64) {
    for i in 0..params.len() {
        if !frozen[i] {
            params[i] -= learning_rate * grad[i];
        }
    }
}
