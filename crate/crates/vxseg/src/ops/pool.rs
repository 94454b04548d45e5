//! 2x2x2 max pooling with stride 2. Argmax positions (linear index within
//! each (n, c) slab) are recorded for the backward scatter.

use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::tensor::Tensor;

pub fn maxpool3d_forward<T: Scalar>(input: &Tensor<T>) -> VxResult<(Tensor<T>, Vec<u32>)> {
    let [n, c, d, h, w] = input.dims5()?;
    if d % 2 != 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(VxError::InvalidArgument(format!(
            "maxpool3d requires even spatial extents, got {:?}",
            input.shape()
        )));
    }
    let (od, oh, ow) = (d / 2, h / 2, w / 2);
    let vox = d * h * w;
    let x = input.data();
    let mut out = Tensor::zeros(&[n, c, od, oh, ow]);
    let mut argmax = vec![0u32; n * c * od * oh * ow];
    let mut oi = 0usize;
    for slab in 0..n * c {
        let xc = &x[slab * vox..(slab + 1) * vox];
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0usize;
                    // first-wins tie policy: fixed scan order dz, dy, dx
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let idx = ((2 * z + dz) * h + 2 * y + dy) * w + 2 * xx + dx;
                                if xc[idx] > best {
                                    best = xc[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    out.data_mut()[oi] = best;
                    argmax[oi] = best_idx as u32;
                    oi += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool3d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> VxResult<Tensor<T>> {
    let [n, c, d, h, w] = Tensor::<T>::zeros(input_shape).dims5()?;
    let vox = d * h * w;
    let out_vox = grad_out.len() / (n * c);
    if argmax.len() != grad_out.len() {
        return Err(VxError::InvalidArgument(
            "maxpool backward: argmax/grad length mismatch".into(),
        ));
    }
    let mut grad_in = Tensor::zeros(input_shape);
    let gi = grad_in.data_mut();
    for slab in 0..n * c {
        for o in 0..out_vox {
            let g = grad_out.data()[slab * out_vox + o];
            gi[slab * vox + argmax[slab * out_vox + o] as usize] += g;
        }
    }
    Ok(grad_in)
}
