use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Adam hyperparameters. Weight decay is decoupled from the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub step: u64,
}

impl AdamState {
    pub fn for_param(param: &Matrix) -> Self {
        AdamState {
            m: Matrix::zeros(param.rows(), param.cols()),
            v: Matrix::zeros(param.rows(), param.cols()),
            step: 0,
        }
    }
}

/// One bias-corrected Adam step. Decay `param ← param − lr·wd·param` is
/// applied before the moment update.
pub fn adam_step_in_place(
    param: &mut Matrix,
    grad: &Matrix,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::shape("adam_step (grad)", param.shape(), grad.shape()));
    }
    if param.shape() != state.m.shape() || param.shape() != state.v.shape() {
        return Err(Error::shape("adam_step (state)", param.shape(), state.m.shape()));
    }
    if !(cfg.lr >= 0.0) {
        return Err(Error::invalid("learning rate must be non-negative"));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t);
    let decay = cfg.lr * cfg.weight_decay;
    let p = param.as_mut_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (((p, &g), m), v) in p.iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
        if decay != 0.0 {
            *p -= decay * *p;
        }
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
    Ok(())
}

/// Copying variant of [`adam_step_in_place`].
pub fn adam_step(
    param: &Matrix,
    grad: &Matrix,
    state: &AdamState,
    cfg: &AdamConfig,
) -> Result<(Matrix, AdamState)> {
    let mut p = param.clone();
    let mut s = state.clone();
    adam_step_in_place(&mut p, grad, &mut s, cfg)?;
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_gaussian;

    fn cfg(lr: f64, wd: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: wd,
        }
    }

    #[test]
    fn zero_grad_is_identity() {
        let p = seeded_gaussian(1, 3, 4).unwrap();
        let g = Matrix::zeros(3, 4);
        let s = AdamState::for_param(&p);
        let (p2, s2) = adam_step(&p, &g, &s, &cfg(0.1, 0.0)).unwrap();
        assert_eq!(p, p2);
        assert_eq!(s2.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let p = Matrix::row_vector(alloc::vec![1.0]);
        let g = Matrix::row_vector(alloc::vec![1.0]);
        let s = AdamState::for_param(&p);
        let (p2, _) = adam_step(&p, &g, &s, &cfg(0.1, 0.0)).unwrap();
        // m_hat = 1, v_hat = 1 → Δ = 0.1 / (1 + 1e-8)
        assert!((p2[(0, 0)] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn decay_only_path() {
        let p = Matrix::row_vector(alloc::vec![1.0]);
        let g = Matrix::row_vector(alloc::vec![0.0]);
        let s = AdamState::for_param(&p);
        let (p2, _) = adam_step(&p, &g, &s, &cfg(0.1, 0.1)).unwrap();
        assert!((p2[(0, 0)] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_errors() {
        let p = Matrix::zeros(2, 2);
        let g = Matrix::zeros(2, 3);
        let s = AdamState::for_param(&p);
        assert!(adam_step(&p, &g, &s, &cfg(0.1, 0.0)).is_err());
    }
}
