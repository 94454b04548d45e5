//! Batch normalization over (N, D, H, W) per channel.
//!
//! Train mode uses the current batch's statistics (biased variance) and
//! reports them so the caller can fold them into the running buffers; eval
//! mode normalizes with the running statistics.

use super::kernels::{sum, sum_sq_diff};
use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::tensor::Tensor;

/// Per-channel statistics saved by the train-mode forward for backward.
#[derive(Debug, Clone)]
pub struct BnSaved<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

fn check_channel_vec<T: Scalar>(v: &Tensor<T>, c: usize, what: &str) -> VxResult<()> {
    if v.shape() != [c] {
        return Err(VxError::ShapeMismatch {
            context: format!("batchnorm {what}"),
            lhs: v.shape().to_vec(),
            rhs: vec![c],
        });
    }
    Ok(())
}

/// Train-mode forward. Returns the normalized output, the saved statistics
/// for backward, and the raw batch (mean, var) per channel for the running
/// buffer update.
#[allow(clippy::type_complexity)]
pub fn batchnorm3d_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> VxResult<(Tensor<T>, BnSaved<T>, Vec<T>, Vec<T>)> {
    let [n, c, d, h, w] = input.dims5()?;
    check_channel_vec(gamma, c, "gamma")?;
    check_channel_vec(beta, c, "beta")?;
    let vox = d * h * w;
    if n * vox < 2 {
        return Err(VxError::InvalidArgument(
            "batchnorm train mode needs at least 2 values per channel".into(),
        ));
    }
    let count = T::cast_from((n * vox) as f64);
    let x = input.data();
    let mut out = Tensor::zeros(input.shape());
    let mut means = vec![T::zero(); c];
    let mut vars = vec![T::zero(); c];
    let mut inv_stds = vec![T::zero(); c];
    for ci in 0..c {
        let mut s = T::zero();
        for ni in 0..n {
            s += sum(&x[(ni * c + ci) * vox..(ni * c + ci + 1) * vox]);
        }
        let mean = s / count;
        let mut v = T::zero();
        for ni in 0..n {
            v += sum_sq_diff(&x[(ni * c + ci) * vox..(ni * c + ci + 1) * vox], mean);
        }
        let var = v / count;
        let inv_std = T::one() / (var + T::cast_from(eps)).sqrt();
        let (g, b) = (gamma.data()[ci], beta.data()[ci]);
        let scale = g * inv_std;
        let shift = b - mean * scale;
        for ni in 0..n {
            let src = &x[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            let dst = &mut out.data_mut()[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            for (o, &xv) in dst.iter_mut().zip(src.iter()) {
                *o = xv * scale + shift;
            }
        }
        means[ci] = mean;
        vars[ci] = var;
        inv_stds[ci] = inv_std;
    }
    Ok((
        out,
        BnSaved {
            mean: means.clone(),
            inv_std: inv_stds,
        },
        means,
        vars,
    ))
}

/// Eval-mode forward using running statistics.
pub fn batchnorm3d_eval<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: f64,
) -> VxResult<Tensor<T>> {
    let [n, c, d, h, w] = input.dims5()?;
    check_channel_vec(gamma, c, "gamma")?;
    check_channel_vec(beta, c, "beta")?;
    check_channel_vec(running_mean, c, "running_mean")?;
    check_channel_vec(running_var, c, "running_var")?;
    let vox = d * h * w;
    let x = input.data();
    let mut out = Tensor::zeros(input.shape());
    for ci in 0..c {
        let inv_std = T::one() / (running_var.data()[ci] + T::cast_from(eps)).sqrt();
        let scale = gamma.data()[ci] * inv_std;
        let shift = beta.data()[ci] - running_mean.data()[ci] * scale;
        for ni in 0..n {
            let src = &x[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            let dst = &mut out.data_mut()[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            for (o, &xv) in dst.iter_mut().zip(src.iter()) {
                *o = xv * scale + shift;
            }
        }
    }
    Ok(out)
}

/// Train-mode backward from the saved batch statistics.
pub fn batchnorm3d_train_backward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    saved: &BnSaved<T>,
    grad_out: &Tensor<T>,
) -> VxResult<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [n, c, d, h, w] = input.dims5()?;
    let vox = d * h * w;
    let count = T::cast_from((n * vox) as f64);
    let x = input.data();
    let go = grad_out.data();
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    for ci in 0..c {
        let mean = saved.mean[ci];
        let inv_std = saved.inv_std[ci];
        // sum(dy) and sum(dy * xhat) with the fixed-lane reduction
        let mut s_dy = T::zero();
        let mut s_dy_xhat = T::zero();
        for ni in 0..n {
            let g = &go[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            let xv = &x[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            s_dy += sum(g);
            let mut lanes = [T::zero(); 8];
            let chunks = g.len() / 8;
            for i in 0..chunks {
                for l in 0..8 {
                    let idx = i * 8 + l;
                    lanes[l] += g[idx] * ((xv[idx] - mean) * inv_std);
                }
            }
            let mut tail = T::zero();
            for idx in chunks * 8..g.len() {
                tail += g[idx] * ((xv[idx] - mean) * inv_std);
            }
            let s01 = lanes[0] + lanes[1];
            let s23 = lanes[2] + lanes[3];
            let s45 = lanes[4] + lanes[5];
            let s67 = lanes[6] + lanes[7];
            s_dy_xhat += ((s01 + s23) + (s45 + s67)) + tail;
        }
        grad_beta.data_mut()[ci] = s_dy;
        grad_gamma.data_mut()[ci] = s_dy_xhat;
        let g = gamma.data()[ci];
        let mean_dy = s_dy / count;
        let mean_dy_xhat = s_dy_xhat / count;
        let coef = g * inv_std;
        for ni in 0..n {
            let gsrc = &go[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            let xsrc = &x[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            let dst = &mut grad_in.data_mut()[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            for ((o, &dy), &xv) in dst.iter_mut().zip(gsrc.iter()).zip(xsrc.iter()) {
                let xhat = (xv - mean) * inv_std;
                *o = coef * (dy - mean_dy - xhat * mean_dy_xhat);
            }
        }
    }
    Ok((grad_in, grad_gamma, grad_beta))
}

/// Eval-mode backward: the normalization is a fixed affine map.
pub fn batchnorm3d_eval_backward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: f64,
    grad_out: &Tensor<T>,
) -> VxResult<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [n, c, d, h, w] = input.dims5()?;
    let vox = d * h * w;
    let x = input.data();
    let go = grad_out.data();
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    for ci in 0..c {
        let inv_std = T::one() / (running_var.data()[ci] + T::cast_from(eps)).sqrt();
        let mean = running_mean.data()[ci];
        let coef = gamma.data()[ci] * inv_std;
        let mut s_dy = T::zero();
        let mut s_dy_xhat = T::zero();
        for ni in 0..n {
            let g = &go[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            let xv = &x[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            s_dy += sum(g);
            for (gv, &xvv) in g.iter().zip(xv.iter()) {
                s_dy_xhat += *gv * ((xvv - mean) * inv_std);
            }
            let dst = &mut grad_in.data_mut()[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            for (o, &dy) in dst.iter_mut().zip(g.iter()) {
                *o = coef * dy;
            }
        }
        grad_beta.data_mut()[ci] = s_dy;
        grad_gamma.data_mut()[ci] = s_dy_xhat;
    }
    Ok((grad_in, grad_gamma, grad_beta))
}
