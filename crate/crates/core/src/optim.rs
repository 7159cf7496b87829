//! First-order optimizers over a model's parameters.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::layers::Param;
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    /// `v ← μ·v + g; θ ← θ − lr·v`
    SgdMomentum { lr: f32, momentum: f32 },
    /// Adam with bias-corrected moments.
    Adam { lr: f32, beta1: f32, beta2: f32, eps: f32 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn lr(&self) -> f32 {
        match *self {
            OptimizerConfig::SgdMomentum { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    // One (first, second) moment pair per parameter in visiting order.
    slots: Vec<(Vec<f32>, Vec<f32>)>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self { config, steps: 0, slots: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step_model(&mut self, model: &mut Model) {
        self.begin_step();
        let mut index = 0;
        model.visit_params(&mut |_, p| {
            self.update(index, p);
            index += 1;
        });
        self.end_step(index);
    }

    /// Applies one update using the gradients stored in `params`.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        self.begin_step();
        for (i, p) in params.iter_mut().enumerate() {
            self.update(i, p);
        }
        self.end_step(params.len());
    }

    fn begin_step(&mut self) {
        self.steps += 1;
    }

    fn end_step(&mut self, count: usize) {
        assert_eq!(self.slots.len(), count, "parameter set changed between steps");
    }

    fn update(&mut self, index: usize, p: &mut Param) {
        let n = p.value.numel();
        if index == self.slots.len() {
            let second = if matches!(self.config, OptimizerConfig::Adam { .. }) { vec![0.0; n] } else { Vec::new() };
            self.slots.push((vec![0.0; n], second));
        }
        let (first, second) = &mut self.slots[index];
        assert_eq!(first.len(), n, "parameter shape changed between steps");
        let Param { value, grad } = p;
        match self.config {
            OptimizerConfig::SgdMomentum { lr, momentum } => {
                for ((w, &g), v) in value.data_mut().iter_mut().zip(grad.data()).zip(first.iter_mut()) {
                    *v = momentum * *v + g;
                    *w -= lr * *v;
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - crate::math::powi(beta1 as f64, t);
                let c2 = 1.0 - crate::math::powi(beta2 as f64, t);
                let step = (lr as f64 / c1) as f32;
                let inv_c2 = (1.0 / c2) as f32;
                for (((w, &g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(first.iter_mut()).zip(second.iter_mut()) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *w -= step * *m / (crate::math::sqrtf(*v * inv_c2) + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    // f(θ) = ½·(a·θ₀² + b·θ₁²), ∇f = (a·θ₀, b·θ₁)
    const A: f64 = 2.0;
    const B: f64 = 0.5;

    fn grad(theta: &[f64; 2]) -> [f64; 2] {
        [A * theta[0], B * theta[1]]
    }

    fn run(config: OptimizerConfig) -> Vec<[f32; 2]> {
        let mut p = Param::new(Tensor::new(alloc::vec![2], alloc::vec![1.0, -2.0]).unwrap());
        let mut opt = Optimizer::new(config);
        let mut out = Vec::new();
        for _ in 0..3 {
            let v = p.value.data().to_vec();
            p.grad.data_mut().copy_from_slice(&[(A * v[0] as f64) as f32, (B * v[1] as f64) as f32]);
            opt.step(&mut [&mut p]);
            out.push([p.value.data()[0], p.value.data()[1]]);
        }
        out
    }

    #[test]
    fn sgd_momentum_reference() {
        let (lr, mu) = (0.1, 0.9);
        let mut theta = [1.0f64, -2.0];
        let mut vel = [0.0f64; 2];
        let got = run(OptimizerConfig::SgdMomentum { lr: lr as f32, momentum: mu as f32 });
        for step in got {
            let g = grad(&theta);
            for i in 0..2 {
                vel[i] = mu * vel[i] + g[i];
                theta[i] -= lr * vel[i];
                assert!((step[i] as f64 - theta[i]).abs() < 1e-6, "{step:?} vs {theta:?}");
            }
        }
    }

    #[test]
    fn adam_reference() {
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
        let mut theta = [1.0f64, -2.0];
        let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
        let got = run(OptimizerConfig::Adam { lr: lr as f32, beta1: b1 as f32, beta2: b2 as f32, eps: eps as f32 });
        for (t, step) in got.into_iter().enumerate() {
            let t = t as i32 + 1;
            let g = grad(&theta);
            for i in 0..2 {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / (1.0 - b1.powi(t));
                let vhat = v[i] / (1.0 - b2.powi(t));
                theta[i] -= lr * mhat / (vhat.sqrt() + eps);
                assert!((step[i] as f64 - theta[i]).abs() < 1e-6, "step {t}: {step:?} vs {theta:?}");
            }
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let got = run(OptimizerConfig::Adam { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 });
        assert!((got[0][0] - 0.99).abs() < 1e-6);
        assert!((got[0][1] + 1.99).abs() < 1e-6);
    }
}
