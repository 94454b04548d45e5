//! Mean cross-entropy over voxels, taking the probability tensor (softmax
//! output) and an integer label grid. Probabilities are clamped to
//! [1e-7, 1] before the log so a confidently wrong voxel cannot produce an
//! infinite loss.

use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::tensor::{IntGrid, Tensor};

pub const PROB_CLAMP_MIN: f64 = 1e-7;

/// Returns the scalar loss. `probs` is (N, K, D, H, W); `labels` is
/// (N, D, H, W) with values in 0..K.
pub fn cross_entropy_mean_forward<T: Scalar>(probs: &Tensor<T>, labels: &IntGrid) -> VxResult<T> {
    let [n, k, d, h, w] = probs.dims5()?;
    if labels.shape() != [n, d, h, w] {
        return Err(VxError::ShapeMismatch {
            context: "cross_entropy labels vs probs".into(),
            lhs: labels.shape().to_vec(),
            rhs: vec![n, d, h, w],
        });
    }
    labels.validate_labels(k)?;
    let vox = d * h * w;
    let lo = T::cast_from(PROB_CLAMP_MIN);
    let hi = T::one();
    let mut total = T::zero();
    for ni in 0..n {
        for v in 0..vox {
            let t = labels.data()[ni * vox + v] as usize;
            let mut p = probs.data()[(ni * k + t) * vox + v];
            if p < lo {
                p = lo;
            }
            if p > hi {
                p = hi;
            }
            total += -p.ln();
        }
    }
    Ok(total / T::cast_from((n * vox) as f64))
}

/// Gradient w.r.t. the probability tensor. The clamp passes gradient only
/// where the probability lies inside the clamp range.
pub fn cross_entropy_mean_backward<T: Scalar>(
    probs: &Tensor<T>,
    labels: &IntGrid,
    grad_scale: T,
) -> Tensor<T> {
    let [n, k, d, h, w] = probs.dims5().unwrap();
    let vox = d * h * w;
    let lo = T::cast_from(PROB_CLAMP_MIN);
    let inv_count = T::one() / T::cast_from((n * vox) as f64);
    let mut grad = Tensor::zeros(probs.shape());
    for ni in 0..n {
        for v in 0..vox {
            let t = labels.data()[ni * vox + v] as usize;
            let idx = (ni * k + t) * vox + v;
            let p = probs.data()[idx];
            if p >= lo {
                let p_eff = if p > T::one() { T::one() } else { p };
                grad.data_mut()[idx] = -grad_scale * inv_count / p_eff;
            }
        }
    }
    grad
}
