//! Adam with bias-corrected moments.

use crate::error::{mismatch, NnError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step_count: u64,
}

impl AdamState {
    /// Fresh state with zero moments shaped like `params`.
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first_moment: Vec<Tensor> = params.into_iter().map(Tensor::zeros_like).collect();
        Self {
            config,
            second_moment: first_moment.clone(),
            first_moment,
            step_count: 0,
        }
    }

    /// Applies one update. Gradients are validated up front, so a rejected
    /// call leaves both the parameters and the state untouched.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(mismatch(
                "adam",
                format!("{} parameters", self.first_moment.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(mismatch("adam", format!("{:?}", m.shape()), format!("{:?} / {:?}", p.shape(), g.shape())));
            }
            if !g.is_finite() {
                return Err(NnError::NonFinite { op: "adam" });
            }
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::vector(&[1.0, -2.0]);
        let mut s = AdamState::new(AdamConfig::default(), [&p]);
        let g = Tensor::zeros(&[2]);
        s.update(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g0 in [3.0, -0.5, 120.0] {
            let mut p = Tensor::vector(&[0.0]);
            let cfg = AdamConfig::default();
            let mut s = AdamState::new(cfg, [&p]);
            s.update(&mut [&mut p], &[&Tensor::vector(&[g0])]).unwrap();
            let want = -cfg.learning_rate * f64::signum(g0);
            assert!(((p.data()[0] - want) / want).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut p = Tensor::vector(&[1.0, 1.0]);
        let mut s = AdamState::new(AdamConfig::default(), [&p]);
        let before = s.clone();
        let err = s.update(&mut [&mut p], &[&Tensor::vector(&[1.0, f64::NAN])]);
        assert!(matches!(err, Err(NnError::NonFinite { .. })));
        assert_eq!(s, before);
        assert_eq!(p.data(), &[1.0, 1.0]);
    }

    #[test]
    fn three_steps_match_straight_line_reference() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let g = 0.37_f64;
        let mut p = Tensor::vector(&[0.5]);
        let mut s = AdamState::new(cfg, [&p]);
        for _ in 0..3 {
            s.update(&mut [&mut p], &[&Tensor::vector(&[g])]).unwrap();
        }
        // Written out by hand, step by step.
        let (b1, b2, eps, lr) = (0.9_f64, 0.999_f64, 1e-8_f64, 0.01_f64);
        let m1 = (1.0 - b1) * g;
        let v1 = (1.0 - b2) * g * g;
        let w1 = 0.5 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * g;
        let v2 = b2 * v1 + (1.0 - b2) * g * g;
        let w2 = w1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        let m3 = b1 * m2 + (1.0 - b1) * g;
        let v3 = b2 * v2 + (1.0 - b2) * g * g;
        let w3 = w2 - lr * (m3 / (1.0 - b1 * b1 * b1)) / ((v3 / (1.0 - b2 * b2 * b2)).sqrt() + eps);
        assert!((p.data()[0] - w3).abs() < 1e-12);
        assert_eq!(s.step_count, 3);
    }
}
