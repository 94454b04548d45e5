//! Parameter creation and initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dtype::Scalar;
use crate::error::VxResult;
use crate::net::params::{NetworkParams, ParamKind, ParamTensor};
use crate::net::spec::NetworkSpec;
use crate::tensor::Tensor;

/// Creates and initializes all parameters of `spec`: He-normal (fan-in
/// scaled) conv weights, zero biases, unit gamma / zero beta, and running
/// statistics at (0, 1). Draws happen in layout order from a seeded
/// generator, so the result is bit-identical for a fixed seed.
pub fn build_network<T: Scalar>(spec: &NetworkSpec, seed: u64) -> VxResult<NetworkParams<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::new();
    for (name, shape, kind) in spec.parameter_layout() {
        let value = match kind {
            ParamKind::ConvWeight { fan_in } => {
                let std = (2.0 / fan_in as f64).sqrt();
                Tensor::from_fn(&shape, |_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::cast_from(z * std)
                })
            }
            ParamKind::Bias | ParamKind::BnBeta | ParamKind::BnRunningMean => {
                Tensor::zeros(&shape)
            }
            ParamKind::BnGamma | ParamKind::BnRunningVar => Tensor::full(&shape, T::one()),
        };
        let grad = Tensor::zeros(&shape);
        params.push(ParamTensor {
            name,
            value,
            grad,
            trainable: kind.trainable(),
            regularized: kind.regularized(),
        })?;
    }
    Ok(params)
}
