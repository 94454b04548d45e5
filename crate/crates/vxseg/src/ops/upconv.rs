//! Transposed convolution with 2x2x2 kernel and stride 2: doubles every
//! spatial extent. Stride equals kernel size, so output voxels receive
//! exactly one tap and the scatter has no overlaps.

use rayon::prelude::*;

use super::kernels::dot;
use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::tensor::Tensor;

fn check_shapes<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>) -> VxResult<([usize; 5], usize)> {
    let in_dims = input.dims5()?;
    let w_dims = weight.dims5()?;
    if w_dims[2] != 2 || w_dims[3] != 2 || w_dims[4] != 2 {
        return Err(VxError::InvalidArgument(format!(
            "upconv3d kernel must be 2x2x2, weight shape is {:?}",
            weight.shape()
        )));
    }
    if in_dims[1] != w_dims[0] {
        return Err(VxError::ShapeMismatch {
            context: "upconv3d input channels vs weight".into(),
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    Ok((in_dims, w_dims[1]))
}

pub fn upconv3d_forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>) -> VxResult<Tensor<T>> {
    let ([n, cin, d, h, w], cout) = check_shapes(input, weight)?;
    let (od, oh, ow) = (2 * d, 2 * h, 2 * w);
    let in_vox = d * h * w;
    let out_vox = od * oh * ow;
    let x = input.data();
    let k = weight.data();
    let mut out = Tensor::zeros(&[n, cout, od, oh, ow]);
    out.data_mut()
        .par_chunks_mut(out_vox)
        .enumerate()
        .for_each(|(slab, out_slab)| {
            let (ni, co) = (slab / cout, slab % cout);
            for ci in 0..cin {
                let xc = &x[(ni * cin + ci) * in_vox..(ni * cin + ci + 1) * in_vox];
                for dz in 0..2usize {
                    for dy in 0..2usize {
                        for dx in 0..2usize {
                            let wv = k[(((ci * cout + co) * 2 + dz) * 2 + dy) * 2 + dx];
                            for z in 0..d {
                                for y in 0..h {
                                    let in_row = &xc[(z * h + y) * w..(z * h + y + 1) * w];
                                    let out_base = ((2 * z + dz) * oh + 2 * y + dy) * ow + dx;
                                    for (xx, &v) in in_row.iter().enumerate() {
                                        out_slab[out_base + 2 * xx] += wv * v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

pub fn upconv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> VxResult<(Tensor<T>, Tensor<T>)> {
    let ([n, cin, d, h, w], cout) = check_shapes(input, weight)?;
    let (od, oh, ow) = (2 * d, 2 * h, 2 * w);
    if grad_out.shape() != [n, cout, od, oh, ow] {
        return Err(VxError::ShapeMismatch {
            context: "upconv3d grad_out".into(),
            lhs: grad_out.shape().to_vec(),
            rhs: vec![n, cout, od, oh, ow],
        });
    }
    let in_vox = d * h * w;
    let out_vox = od * oh * ow;
    let go = grad_out.data();
    let k = weight.data();

    // d/d input: gather the 8 taps of every (2z+dz, 2y+dy, 2x+dx) block.
    let mut grad_in = Tensor::zeros(input.shape());
    grad_in
        .data_mut()
        .par_chunks_mut(in_vox)
        .enumerate()
        .for_each(|(slab, gi_slab)| {
            let (ni, ci) = (slab / cin, slab % cin);
            for co in 0..cout {
                let gc = &go[(ni * cout + co) * out_vox..(ni * cout + co + 1) * out_vox];
                for dz in 0..2usize {
                    for dy in 0..2usize {
                        for dx in 0..2usize {
                            let wv = k[(((ci * cout + co) * 2 + dz) * 2 + dy) * 2 + dx];
                            for z in 0..d {
                                for y in 0..h {
                                    let out_base = ((2 * z + dz) * oh + 2 * y + dy) * ow + dx;
                                    let gi_row =
                                        &mut gi_slab[(z * h + y) * w..(z * h + y + 1) * w];
                                    for (xx, g) in gi_row.iter_mut().enumerate() {
                                        *g += wv * gc[out_base + 2 * xx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });

    // d/d weight: per-(ci, co, tap) dot of input with the strided grad rows.
    let mut grad_w = Tensor::zeros(weight.shape());
    let x = input.data();
    grad_w
        .data_mut()
        .par_chunks_mut(cout * 8)
        .enumerate()
        .for_each(|(ci, gw_slab)| {
            let mut strided = vec![T::zero(); w];
            for co in 0..cout {
                for dz in 0..2usize {
                    for dy in 0..2usize {
                        for dx in 0..2usize {
                            let mut acc = T::zero();
                            for ni in 0..n {
                                let xc =
                                    &x[(ni * cin + ci) * in_vox..(ni * cin + ci + 1) * in_vox];
                                let gc = &go
                                    [(ni * cout + co) * out_vox..(ni * cout + co + 1) * out_vox];
                                for z in 0..d {
                                    for y in 0..h {
                                        let out_base =
                                            ((2 * z + dz) * oh + 2 * y + dy) * ow + dx;
                                        for (xx, s) in strided.iter_mut().enumerate() {
                                            *s = gc[out_base + 2 * xx];
                                        }
                                        acc += dot(
                                            &xc[(z * h + y) * w..(z * h + y + 1) * w],
                                            &strided,
                                        );
                                    }
                                }
                            }
                            gw_slab[((co * 2 + dz) * 2 + dy) * 2 + dx] = acc;
                        }
                    }
                }
            }
        });

    Ok((grad_in, grad_w))
}
