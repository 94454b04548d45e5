//! SGD with momentum, additive weight decay, and a step learning-rate
//! schedule (halved every fixed number of iterations).

use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::net::NetworkParams;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct OptimConfig {
    pub momentum: f64,
    /// Additive L2 pull applied inside the update (weights only).
    pub weight_decay: f64,
    pub base_lr: f64,
    /// lr halves every this many iterations.
    pub lr_halving_period: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            momentum: 0.9,
            weight_decay: 0.005,
            base_lr: 1e-3,
            lr_halving_period: 3000,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> VxResult<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(VxError::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 || self.base_lr <= 0.0 || self.lr_halving_period == 0 {
            return Err(VxError::Config(
                "weight_decay >= 0, base_lr > 0 and lr_halving_period >= 1 required".into(),
            ));
        }
        Ok(())
    }
}

/// lr(t) = base * 0.5^floor(t / period). Halvings are exact power-of-two
/// scalings, so the schedule values are exact in binary floating point.
pub fn lr_at(iteration: u64, base_lr: f64, halving_period: u64) -> f64 {
    let halvings = iteration / halving_period;
    base_lr * 0.5f64.powi(halvings.min(1 << 10) as i32)
}

#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub config: OptimConfig,
    /// One momentum buffer per parameter slot (zero-sized use for
    /// non-trainable entries is avoided by construction order).
    pub momentum_bufs: Vec<Tensor<T>>,
    pub iteration: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &NetworkParams<T>, config: OptimConfig) -> VxResult<Self> {
        config.validate()?;
        let momentum_bufs = params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        Ok(OptimizerState {
            config,
            momentum_bufs,
            iteration: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        lr_at(self.iteration, self.config.base_lr, self.config.lr_halving_period)
    }

    /// One update over all trainable parameters from their stored
    /// gradients:
    ///   v <- momentum * v + grad (+ weight_decay * param for weights)
    ///   param <- param - lr * v
    /// then the iteration counter advances.
    pub fn step(&mut self, params: &mut NetworkParams<T>) {
        let lr = T::cast_from(self.lr());
        let mu = T::cast_from(self.config.momentum);
        let wd = T::cast_from(self.config.weight_decay);
        for (idx, buf) in self.momentum_bufs.iter_mut().enumerate() {
            let p = params.by_index_mut(idx);
            if !p.trainable {
                continue;
            }
            let decayed = p.regularized;
            for ((v, &g), w) in buf
                .data_mut()
                .iter_mut()
                .zip(p.grad.data().iter())
                .zip(p.value.data_mut().iter_mut())
            {
                let mut force = g;
                if decayed {
                    force += wd * *w;
                }
                *v = mu * *v + force;
                *w -= lr * *v;
            }
        }
        self.iteration += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ParamKind, ParamTensor};

    fn scalar_store(value: f64, regularized: bool) -> NetworkParams<f64> {
        let mut params = NetworkParams::new();
        params
            .push(ParamTensor {
                name: "w".into(),
                value: Tensor::scalar(value),
                grad: Tensor::scalar(0.0),
                trainable: true,
                regularized,
            })
            .unwrap();
        params
    }

    #[test]
    fn schedule_anchors() {
        assert_eq!(lr_at(0, 1e-3, 3000), 1e-3);
        assert_eq!(lr_at(2999, 1e-3, 3000), 1e-3);
        assert_eq!(lr_at(3000, 1e-3, 3000), 5e-4);
        assert_eq!(lr_at(9000, 1e-3, 3000), 1.25e-4);
    }

    #[test]
    fn schedule_is_nonincreasing_piecewise_constant() {
        let mut prev = f64::INFINITY;
        for t in 0..10_000u64 {
            let lr = lr_at(t, 1e-3, 3000);
            assert!(lr <= prev);
            if t % 3000 != 0 {
                assert_eq!(lr, prev);
            }
            prev = lr;
        }
    }

    #[test]
    fn zero_gradient_exempt_param_is_fixed_point() {
        let mut params = scalar_store(1.5, false);
        let mut state = OptimizerState::new(&params, OptimConfig::default()).unwrap();
        state.step(&mut params);
        assert_eq!(params.get("w").unwrap().value.item().unwrap(), 1.5);
    }

    #[test]
    fn one_step_arithmetic() {
        let mut params = scalar_store(1.0, false);
        params.get_mut("w").unwrap().grad = Tensor::scalar(1.0);
        let cfg = OptimConfig {
            momentum: 0.9,
            weight_decay: 0.005,
            base_lr: 0.1,
            lr_halving_period: 3000,
        };
        let mut state = OptimizerState::new(&params, cfg).unwrap();
        state.step(&mut params);
        assert_eq!(state.momentum_bufs[0].item().unwrap(), 1.0);
        assert!((params.get("w").unwrap().value.item().unwrap() - 0.9).abs() < 1e-15);
    }

    /// Five steps on L(w) = 0.5 w^2 (grad = w), decayed, against an
    /// independently coded momentum recursion.
    #[test]
    fn matches_momentum_recursion_oracle() {
        let cfg = OptimConfig {
            momentum: 0.9,
            weight_decay: 0.005,
            base_lr: 0.05,
            lr_halving_period: 2, // exercise the schedule too
        };
        let mut params = scalar_store(1.0, true);
        let mut state = OptimizerState::new(&params, cfg).unwrap();
        let (mut w_ref, mut v_ref) = (1.0f64, 0.0f64);
        for t in 0..5u64 {
            params.get_mut("w").unwrap().grad =
                Tensor::scalar(params.get("w").unwrap().value.item().unwrap());
            state.step(&mut params);
            let lr = lr_at(t, cfg.base_lr, cfg.lr_halving_period);
            v_ref = 0.9 * v_ref + w_ref + 0.005 * w_ref;
            w_ref -= lr * v_ref;
        }
        let w = params.get("w").unwrap().value.item().unwrap();
        assert!((w - w_ref).abs() < 1e-15, "{w} vs {w_ref}");
        assert_eq!(state.iteration, 5);
    }
}
