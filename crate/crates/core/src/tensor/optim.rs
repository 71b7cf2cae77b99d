//! First-order optimisers with explicit, serialisable state.

use super::matrix::Matrix;
use crate::error::{FgpError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one parameter tensor. Weight decay is decoupled from
/// the gradient and applied straight to the parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: (usize, usize), config: AdamConfig) -> Self {
        Self {
            m: Matrix::zeros(shape.0, shape.1),
            v: Matrix::zeros(shape.0, shape.1),
            t: 0,
            config,
        }
    }

    /// Updates `param` in place.
    pub fn step(&mut self, param: &mut [f64], grad: &[f64]) -> Result<()> {
        if param.len() != grad.len() || param.len() != self.m.len() {
            return Err(FgpError::Shape {
                op: "adam_step",
                left: (param.len(), 1),
                right: (grad.len(), self.m.len()),
            });
        }
        let AdamConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let m = self.m.data_mut();
        let v = self.v.data_mut();
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param[i] -= lr * weight_decay * param[i];
            param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form: returns the updated parameter and advances `state`.
pub fn adam_step(param: &Matrix, grad: &Matrix, state: &mut AdamState) -> Result<Matrix> {
    param.ensure_same_shape("adam_step", grad)?;
    param.ensure_same_shape("adam_step", &state.m)?;
    let mut out = param.clone();
    state.step(out.data_mut(), grad.data())?;
    Ok(out)
}

/// Heavy-ball SGD: `v ← μv + g`, `p ← p − lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub velocity: Matrix,
    pub lr: f64,
    pub momentum: f64,
}

impl SgdState {
    pub fn new(shape: (usize, usize), lr: f64, momentum: f64) -> Self {
        Self {
            velocity: Matrix::zeros(shape.0, shape.1),
            lr,
            momentum,
        }
    }

    pub fn step(&mut self, param: &mut [f64], grad: &[f64]) -> Result<()> {
        if param.len() != grad.len() || param.len() != self.velocity.len() {
            return Err(FgpError::Shape {
                op: "sgd_momentum_step",
                left: (param.len(), 1),
                right: (grad.len(), self.velocity.len()),
            });
        }
        let vel = self.velocity.data_mut();
        for i in 0..param.len() {
            vel[i] = self.momentum * vel[i] + grad[i];
            param[i] -= self.lr * vel[i];
        }
        Ok(())
    }
}

pub fn sgd_momentum_step(param: &Matrix, grad: &Matrix, state: &mut SgdState) -> Result<Matrix> {
    param.ensure_same_shape("sgd_momentum_step", grad)?;
    param.ensure_same_shape("sgd_momentum_step", &state.velocity)?;
    let mut out = param.clone();
    state.step(out.data_mut(), grad.data())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_null_update() {
        let p = Matrix::from_fn(2, 3, |i, j| (i + j) as f64);
        let mut st = AdamState::new((2, 3), AdamConfig::default());
        let out = adam_step(&p, &Matrix::zeros(2, 3), &mut st).unwrap();
        assert_eq!(out, p);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_on_quadratic() {
        // f(w) = w²/2 at w = 1: g = 1, m̂ = 1, v̂ = 1, so w ← 1 − lr/(1 + eps).
        let p = Matrix::filled(1, 1, 1.0);
        let mut st = AdamState::new((1, 1), AdamConfig::default());
        let out = adam_step(&p, &p, &mut st).unwrap();
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((out.get(0, 0) - expected).abs() < 1e-15);
        assert!((out.get(0, 0) - 0.999).abs() < 1e-10);
    }

    #[test]
    fn adam_decoupled_decay() {
        let p = Matrix::filled(1, 1, 2.0);
        let cfg = AdamConfig {
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new((1, 1), cfg);
        let out = adam_step(&p, &Matrix::zeros(1, 1), &mut st).unwrap();
        assert!((out.get(0, 0) - 2.0 * (1.0 - 0.001 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn adam_deterministic() {
        let p = Matrix::from_fn(3, 3, |i, j| i as f64 - j as f64);
        let g = Matrix::from_fn(3, 3, |i, j| (i * j) as f64 * 0.1);
        let mut a = AdamState::new((3, 3), AdamConfig::default());
        let mut b = a.clone();
        assert_eq!(
            adam_step(&p, &g, &mut a).unwrap(),
            adam_step(&p, &g, &mut b).unwrap()
        );
    }

    #[test]
    fn sgd_cases() {
        let p = Matrix::filled(1, 2, 1.0);
        let mut st = SgdState::new((1, 2), 0.1, 0.9);
        assert_eq!(
            sgd_momentum_step(&p, &Matrix::zeros(1, 2), &mut st).unwrap(),
            p
        );

        let g = Matrix::filled(1, 2, 0.5);
        let mut plain = SgdState::new((1, 2), 0.1, 0.0);
        let out = sgd_momentum_step(&p, &g, &mut plain).unwrap();
        assert!((out.get(0, 0) - 0.95).abs() < 1e-15);

        // two steps: lr·g·(1 + (1 + μ))
        let mut st = SgdState::new((1, 2), 0.1, 0.9);
        let once = sgd_momentum_step(&p, &g, &mut st).unwrap();
        let twice = sgd_momentum_step(&once, &g, &mut st).unwrap();
        let disp = p.get(0, 0) - twice.get(0, 0);
        assert!((disp - 0.1 * 0.5 * (1.0 + 1.9)).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch() {
        let mut st = AdamState::new((2, 2), AdamConfig::default());
        assert!(adam_step(&Matrix::zeros(2, 2), &Matrix::zeros(1, 2), &mut st).is_err());
    }
}
