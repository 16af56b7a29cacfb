use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// First/second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        AdamState {
            config,
            t: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn for_params(config: AdamConfig, params: &[Vec<T>]) -> Self {
        let shapes: Vec<usize> = params.iter().map(Vec::len).collect();
        Self::new(config, &shapes)
    }

    /// One Adam update with bias correction:
    /// `m = b1 m + (1-b1) g`, `v = b2 v + (1-b2) g^2`,
    /// `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [Vec<T>], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {i}: param {} / grad {} / state {}",
                    p.len(),
                    g.len(),
                    m.len()
                )));
            }
        }
        self.t += 1;
        let c = &self.config;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let t = self.t as i32;
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        let skip_update = c.lr == 0.0;
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((pv, &gv), mv), vv) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                if !skip_update {
                    let m_hat = *mv / bc1;
                    let v_hat = *vv / bc2;
                    *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                }
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
        let mut params = vec![vec![1.0f32, -2.0, 3.5]];
        let before = params.clone();
        let mut st = AdamState::for_params(AdamConfig::default(), &params);
        for _ in 0..5 {
            st.step(&mut params, &[vec![0.0; 3]]).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = vec![vec![1.0f64]];
        let mut st = AdamState::for_params(AdamConfig::default(), &params);
        st.step(&mut params, &[vec![1.0]]).unwrap();
        let expected = 1.0 - 1e-3 * 1.0 / (1.0 + 1e-7);
        assert!((params[0][0] - expected).abs() < 1e-12);
        assert!((params[0][0] - 0.999).abs() < 1e-6);
    }

    #[test]
    fn two_steps_match_unrolled_recurrence() {
        let g = 0.37f64;
        let mut params = vec![vec![0.5f64]];
        let cfg = AdamConfig::default();
        let mut st = AdamState::for_params(cfg, &params);
        st.step(&mut params, &[vec![g]]).unwrap();
        st.step(&mut params, &[vec![g]]).unwrap();

        let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.lr, cfg.eps);
        let m1 = (1.0 - b1) * g;
        let v1 = (1.0 - b2) * g * g;
        let th1 = 0.5 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * g;
        let v2 = b2 * v1 + (1.0 - b2) * g * g;
        let th2 = th1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert!((params[0][0] - th2).abs() < 1e-7);
        assert!((st.m[0][0] - m2).abs() < 1e-15);
        assert!((st.v[0][0] - v2).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_advances_state_only() {
        let mut params = vec![vec![0.1f32, 0.2], vec![0.3]];
        let before = params.clone();
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::for_params(cfg, &params);
        st.step(&mut params, &[vec![1.0, -1.0], vec![2.0]]).unwrap();
        assert_eq!(params, before);
        assert_eq!(st.t, 1);
        assert!(st.m[0][0] != 0.0 && st.v[1][0] > 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut params = vec![vec![0.0f32; 2]];
        let mut st = AdamState::for_params(AdamConfig::default(), &params);
        assert!(st.step(&mut params, &[vec![0.0; 3]]).is_err());
        assert_eq!(st.t, 0);
    }
}
