//! RMSProp parameter updates.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// RMSProp hyperparameters. Defaults match the training presets:
/// learning rate 0.001, rho 0.9, epsilon 1e-7, decay 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub decay: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-7,
            decay: 0.0,
        }
    }
}

/// RMSProp state: one moving average of squared gradients per parameter
/// tensor, zero-initialized.
#[derive(Debug, Clone)]
pub struct RmsProp {
    config: RmsPropConfig,
    averages: Vec<Tensor>,
    steps: u64,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, param_shapes: &[Vec<usize>]) -> Self {
        Self {
            config,
            averages: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            steps: 0,
        }
    }

    pub fn config(&self) -> &RmsPropConfig {
        &self.config
    }

    /// One update over all parameters:
    /// avg <- rho * avg + (1 - rho) * g^2;
    /// p <- p - lr * g / (sqrt(avg) + epsilon).
    ///
    /// With decay > 0 the learning rate shrinks as lr / (1 + decay * steps);
    /// decay = 0 keeps it constant.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) {
        assert_eq!(params.len(), self.averages.len());
        assert_eq!(grads.len(), self.averages.len());
        let lr = self.config.learning_rate / (1.0 + self.config.decay * self.steps as f64);
        let rho = self.config.rho;
        for ((param, grad), avg) in params.iter_mut().zip(grads).zip(&mut self.averages) {
            debug_assert_eq!(param.shape(), grad.shape());
            for ((p, &g), a) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(avg.data_mut())
            {
                *a = rho * *a + (1.0 - rho) * g * g;
                *p -= lr * g / (a.sqrt() + self.config.epsilon);
            }
        }
        self.steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> (RmsProp, Tensor) {
        let opt = RmsProp::new(RmsPropConfig::default(), &[vec![1]]);
        (opt, Tensor::from_vec(&[1], vec![value]).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let (mut opt, mut p) = single_param(0.75);
        let g = Tensor::zeros(&[1]);
        opt.step(&mut [&mut p], &[&g]);
        assert_eq!(p.data(), &[0.75]);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // g = 1: avg = 0.1, delta = -0.001 / (sqrt(0.1) + 1e-7).
        let (mut opt, mut p) = single_param(0.0);
        let g = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        opt.step(&mut [&mut p], &[&g]);
        let expected = -0.001 / (0.1f64.sqrt() + 1e-7);
        assert!((p.data()[0] - expected).abs() < 1e-15);
        assert!((p.data()[0] + 3.1623e-3).abs() < 1e-6);
    }

    #[test]
    fn repeated_identical_gradients_shrink_updates() {
        let (mut opt, mut p) = single_param(0.0);
        let g = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        opt.step(&mut [&mut p], &[&g]);
        let first = -p.data()[0];
        let before = p.data()[0];
        opt.step(&mut [&mut p], &[&g]);
        let second = before - p.data()[0];
        assert!(second < first, "avg grows toward g^2, so steps shrink");
        assert!(second > 0.0);
    }

    #[test]
    fn decay_shrinks_learning_rate_over_steps() {
        let config = RmsPropConfig {
            decay: 1.0,
            ..RmsPropConfig::default()
        };
        let mut opt = RmsProp::new(config, &[vec![1]]);
        let mut p = Tensor::zeros(&[1]);
        let g = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        opt.step(&mut [&mut p], &[&g]);
        let first = -p.data()[0];
        // Second step at half the learning rate but larger avg: strictly smaller.
        let before = p.data()[0];
        opt.step(&mut [&mut p], &[&g]);
        let second = before - p.data()[0];
        assert!(second < first / 1.5);
    }
}
