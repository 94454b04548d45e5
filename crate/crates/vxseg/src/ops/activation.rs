//! Elementwise and channel-axis primitives: ReLU, channel softmax, channel
//! concatenation, same-shape addition, scalar scaling, sum of squares.

use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::tensor::Tensor;

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Backward through ReLU with the forward *output* as the mask source
/// (output > 0 iff input > 0; the zero point passes no gradient).
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (gv, &ov) in g.data_mut().iter_mut().zip(output.data().iter()) {
        if ov <= T::zero() {
            *gv = T::zero();
        }
    }
    g
}

/// Softmax over the channel axis of an (N, K, D, H, W) tensor.
pub fn softmax_channels_forward<T: Scalar>(input: &Tensor<T>) -> VxResult<Tensor<T>> {
    let [n, k, d, h, w] = input.dims5()?;
    let vox = d * h * w;
    let x = input.data();
    let mut out = Tensor::zeros(input.shape());
    let o = out.data_mut();
    for ni in 0..n {
        let base = ni * k * vox;
        for v in 0..vox {
            let mut mx = T::neg_infinity();
            for c in 0..k {
                let xv = x[base + c * vox + v];
                if xv > mx {
                    mx = xv;
                }
            }
            let mut denom = T::zero();
            for c in 0..k {
                let e = (x[base + c * vox + v] - mx).exp();
                o[base + c * vox + v] = e;
                denom += e;
            }
            let inv = T::one() / denom;
            for c in 0..k {
                o[base + c * vox + v] *= inv;
            }
        }
    }
    Ok(out)
}

/// dL/dx_k = p_k * (g_k - sum_j g_j p_j), per voxel.
pub fn softmax_channels_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let [n, k, d, h, w] = output.dims5().unwrap();
    let vox = d * h * w;
    let p = output.data();
    let g = grad_out.data();
    let mut grad_in = Tensor::zeros(output.shape());
    let gi = grad_in.data_mut();
    for ni in 0..n {
        let base = ni * k * vox;
        for v in 0..vox {
            let mut dotp = T::zero();
            for c in 0..k {
                dotp += g[base + c * vox + v] * p[base + c * vox + v];
            }
            for c in 0..k {
                let idx = base + c * vox + v;
                gi[idx] = p[idx] * (g[idx] - dotp);
            }
        }
    }
    grad_in
}

/// Concatenation along the channel axis. All inputs must agree on every
/// other extent.
pub fn concat_channels_forward<T: Scalar>(inputs: &[&Tensor<T>]) -> VxResult<Tensor<T>> {
    if inputs.is_empty() {
        return Err(VxError::InvalidArgument("concat of zero tensors".into()));
    }
    let [n, _, d, h, w] = inputs[0].dims5()?;
    let mut total_c = 0usize;
    for t in inputs {
        let [tn, tc, td, th, tw] = t.dims5()?;
        if (tn, td, th, tw) != (n, d, h, w) {
            return Err(VxError::ShapeMismatch {
                context: "concat_channels non-channel extents".into(),
                lhs: inputs[0].shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        total_c += tc;
    }
    let vox = d * h * w;
    let mut out = Tensor::zeros(&[n, total_c, d, h, w]);
    let o = out.data_mut();
    for ni in 0..n {
        let mut c_off = 0usize;
        for t in inputs {
            let tc = t.shape()[1];
            let src = &t.data()[ni * tc * vox..(ni + 1) * tc * vox];
            let dst_base = (ni * total_c + c_off) * vox;
            o[dst_base..dst_base + tc * vox].copy_from_slice(src);
            c_off += tc;
        }
    }
    Ok(out)
}

/// Splits a gradient of the concatenated tensor back into per-input parts.
pub fn concat_channels_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    channels: &[usize],
) -> Vec<Tensor<T>> {
    let [n, total_c, d, h, w] = grad_out.dims5().unwrap();
    debug_assert_eq!(channels.iter().sum::<usize>(), total_c);
    let vox = d * h * w;
    let mut grads = Vec::with_capacity(channels.len());
    let mut c_off = 0usize;
    for &tc in channels {
        let mut g = Tensor::zeros(&[n, tc, d, h, w]);
        for ni in 0..n {
            let src_base = (ni * total_c + c_off) * vox;
            g.data_mut()[ni * tc * vox..(ni + 1) * tc * vox]
                .copy_from_slice(&grad_out.data()[src_base..src_base + tc * vox]);
        }
        grads.push(g);
        c_off += tc;
    }
    grads
}

pub fn add_forward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> VxResult<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(VxError::ShapeMismatch {
            context: "elementwise add".into(),
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = a.clone();
    for (o, &bv) in out.data_mut().iter_mut().zip(b.data().iter()) {
        *o += bv;
    }
    Ok(out)
}

pub fn scale_forward<T: Scalar>(a: &Tensor<T>, factor: T) -> Tensor<T> {
    a.map(|v| v * factor)
}

/// Sum of squared entries as a shape-[1] tensor.
pub fn sum_squares_forward<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    Tensor::scalar(super::kernels::dot(a.data(), a.data()))
}
