//! 3D convolution, kernel 3x3x3, stride 1, zero padding 1 (spatial shape
//! preserved), plus the pointwise 1x1x1 classifier convolution.
//!
//! The hot loop accumulates one output row at a time in a stack buffer,
//! iterating taps in a fixed (ci, dz, dy, dx) order; parallelism is over
//! (batch, output channel) slabs, so every voxel is reduced by exactly one
//! task in a fixed order.

use rayon::prelude::*;

use super::kernels::{axpy, dot, sum};
use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::tensor::Tensor;

fn check_conv_shapes<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> VxResult<([usize; 5], [usize; 5])> {
    let in_dims = input.dims5()?;
    let w_dims = weight.dims5()?;
    if w_dims[2] != 3 || w_dims[3] != 3 || w_dims[4] != 3 {
        return Err(VxError::InvalidArgument(format!(
            "conv3d kernel must be 3x3x3, weight shape is {:?}",
            weight.shape()
        )));
    }
    if in_dims[1] != w_dims[1] {
        return Err(VxError::ShapeMismatch {
            context: "conv3d input channels vs weight".into(),
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [w_dims[0]] {
            return Err(VxError::ShapeMismatch {
                context: "conv3d bias vs output channels".into(),
                lhs: b.shape().to_vec(),
                rhs: vec![w_dims[0]],
            });
        }
    }
    Ok((in_dims, w_dims))
}

/// Valid output x-span and input offset for one kernel tap `dx` in 0..3 with
/// padding 1: output x maps to input x + dx - 1.
#[inline]
fn tap_span(dx: usize, extent: usize) -> (usize, usize, isize) {
    // (out_start, out_end, in_shift)
    let shift = dx as isize - 1;
    let start = if shift < 0 { (-shift) as usize } else { 0 };
    let end = if shift > 0 { extent - shift as usize } else { extent };
    (start, end, shift)
}

pub fn conv3d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> VxResult<Tensor<T>> {
    let ([n, cin, d, h, w], [cout, ..]) = check_conv_shapes(input, weight, Some(bias))?;
    let vox = d * h * w;
    let x = input.data();
    let k = weight.data();
    let mut out = Tensor::zeros(&[n, cout, d, h, w]);

    out.data_mut()
        .par_chunks_mut(vox)
        .enumerate()
        .for_each(|(slab, out_slab)| {
            let (ni, co) = (slab / cout, slab % cout);
            let b = bias.data()[co];
            let mut row = vec![T::zero(); w];
            for z in 0..d {
                for y in 0..h {
                    for r in row.iter_mut() {
                        *r = b;
                    }
                    for ci in 0..cin {
                        let xc = &x[(ni * cin + ci) * vox..(ni * cin + ci + 1) * vox];
                        for dz in 0..3usize {
                            let iz = z as isize + dz as isize - 1;
                            if iz < 0 || iz >= d as isize {
                                continue;
                            }
                            for dy in 0..3usize {
                                let iy = y as isize + dy as isize - 1;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let in_row_base = (iz as usize * h + iy as usize) * w;
                                let wt_base = (((co * cin + ci) * 3 + dz) * 3 + dy) * 3;
                                for dx in 0..3usize {
                                    let (xs, xe, shift) = tap_span(dx, w);
                                    if xs >= xe {
                                        continue;
                                    }
                                    let wv = k[wt_base + dx];
                                    let src = &xc[(in_row_base as isize + xs as isize + shift)
                                        as usize
                                        ..(in_row_base as isize + xe as isize + shift) as usize];
                                    axpy(&mut row[xs..xe], wv, src);
                                }
                            }
                        }
                    }
                    out_slab[(z * h + y) * w..(z * h + y + 1) * w].copy_from_slice(&row);
                }
            }
        });
    Ok(out)
}

/// Gradients w.r.t. input, weight and bias. `grad_out` has the forward
/// output's shape.
pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> VxResult<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let ([n, cin, d, h, w], [cout, ..]) = check_conv_shapes(input, weight, None)?;
    if grad_out.shape() != [n, cout, d, h, w] {
        return Err(VxError::ShapeMismatch {
            context: "conv3d grad_out".into(),
            lhs: grad_out.shape().to_vec(),
            rhs: vec![n, cout, d, h, w],
        });
    }
    let vox = d * h * w;
    let x = input.data();
    let k = weight.data();
    let go = grad_out.data();

    // d/d input: correlation of grad_out with the flipped kernel. For output
    // voxel o = i - (dx-1), input i receives grad_out[i + (dx-1)] * w[dx]
    // mirrored; iterate taps with the opposite shift.
    let mut grad_in = Tensor::zeros(input.shape());
    grad_in
        .data_mut()
        .par_chunks_mut(vox)
        .enumerate()
        .for_each(|(slab, gi_slab)| {
            let (ni, ci) = (slab / cin, slab % cin);
            let mut row = vec![T::zero(); w];
            for z in 0..d {
                for y in 0..h {
                    for r in row.iter_mut() {
                        *r = T::zero();
                    }
                    for co in 0..cout {
                        let gc = &go[(ni * cout + co) * vox..(ni * cout + co + 1) * vox];
                        for dz in 0..3usize {
                            // input z contributes to output z - (dz-1)
                            let oz = z as isize - (dz as isize - 1);
                            if oz < 0 || oz >= d as isize {
                                continue;
                            }
                            for dy in 0..3usize {
                                let oy = y as isize - (dy as isize - 1);
                                if oy < 0 || oy >= h as isize {
                                    continue;
                                }
                                let out_row_base = (oz as usize * h + oy as usize) * w;
                                let wt_base = (((co * cin + ci) * 3 + dz) * 3 + dy) * 3;
                                for dx in 0..3usize {
                                    let shift = dx as isize - 1;
                                    // input x feeds output x - shift
                                    let xs = if shift > 0 { shift as usize } else { 0 };
                                    let xe = if shift < 0 {
                                        (w as isize + shift) as usize
                                    } else {
                                        w
                                    };
                                    if xs >= xe {
                                        continue;
                                    }
                                    let wv = k[wt_base + dx];
                                    let src = &gc[(out_row_base as isize + xs as isize - shift)
                                        as usize
                                        ..(out_row_base as isize + xe as isize - shift) as usize];
                                    axpy(&mut row[xs..xe], wv, src);
                                }
                            }
                        }
                    }
                    gi_slab[(z * h + y) * w..(z * h + y + 1) * w].copy_from_slice(&row);
                }
            }
        });

    // d/d weight: per-tap dot products of grad_out rows with shifted input rows.
    let mut grad_w = Tensor::zeros(weight.shape());
    grad_w
        .data_mut()
        .par_chunks_mut(cin * 27)
        .enumerate()
        .for_each(|(co, gw_slab)| {
            for ci in 0..cin {
                for dz in 0..3usize {
                    for dy in 0..3usize {
                        for dx in 0..3usize {
                            let (xs, xe, shift) = tap_span(dx, w);
                            if xs >= xe {
                                continue;
                            }
                            let mut acc = T::zero();
                            for ni in 0..n {
                                let gc = &go[(ni * cout + co) * vox..(ni * cout + co + 1) * vox];
                                let xc = &x[(ni * cin + ci) * vox..(ni * cin + ci + 1) * vox];
                                for z in 0..d {
                                    let iz = z as isize + dz as isize - 1;
                                    if iz < 0 || iz >= d as isize {
                                        continue;
                                    }
                                    for y in 0..h {
                                        let iy = y as isize + dy as isize - 1;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        let orow = &gc[(z * h + y) * w + xs..(z * h + y) * w + xe];
                                        let ibase = (iz as usize * h + iy as usize) * w;
                                        let irow = &xc[(ibase as isize + xs as isize + shift)
                                            as usize
                                            ..(ibase as isize + xe as isize + shift) as usize];
                                        acc += dot(orow, irow);
                                    }
                                }
                            }
                            gw_slab[(ci * 3 + dz) * 9 + dy * 3 + dx] = acc;
                        }
                    }
                }
            }
        });

    // d/d bias: sum of grad_out per output channel.
    let mut grad_b = Tensor::zeros(&[cout]);
    for co in 0..cout {
        let mut acc = T::zero();
        for ni in 0..n {
            acc += sum(&go[(ni * cout + co) * vox..(ni * cout + co + 1) * vox]);
        }
        grad_b.data_mut()[co] = acc;
    }

    Ok((grad_in, grad_w, grad_b))
}

/// Pointwise 1x1x1 convolution: a linear map over channels at every voxel.
/// Weight shape [Cout, Cin].
pub fn conv1x1_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> VxResult<Tensor<T>> {
    let [n, cin, d, h, w] = input.dims5()?;
    if weight.rank() != 2 || weight.shape()[1] != cin {
        return Err(VxError::ShapeMismatch {
            context: "conv1x1 weight".into(),
            lhs: weight.shape().to_vec(),
            rhs: vec![weight.shape().first().copied().unwrap_or(0), cin],
        });
    }
    let cout = weight.shape()[0];
    if bias.shape() != [cout] {
        return Err(VxError::ShapeMismatch {
            context: "conv1x1 bias".into(),
            lhs: bias.shape().to_vec(),
            rhs: vec![cout],
        });
    }
    let vox = d * h * w;
    let x = input.data();
    let mut out = Tensor::zeros(&[n, cout, d, h, w]);
    out.data_mut()
        .par_chunks_mut(vox)
        .enumerate()
        .for_each(|(slab, out_slab)| {
            let (ni, co) = (slab / cout, slab % cout);
            let b = bias.data()[co];
            for o in out_slab.iter_mut() {
                *o = b;
            }
            for ci in 0..cin {
                let wv = weight.data()[co * cin + ci];
                axpy(out_slab, wv, &x[(ni * cin + ci) * vox..(ni * cin + ci + 1) * vox]);
            }
        });
    Ok(out)
}

pub fn conv1x1_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> VxResult<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [n, cin, d, h, w] = input.dims5()?;
    let cout = weight.shape()[0];
    let vox = d * h * w;
    let x = input.data();
    let go = grad_out.data();

    let mut grad_in = Tensor::zeros(input.shape());
    grad_in
        .data_mut()
        .par_chunks_mut(vox)
        .enumerate()
        .for_each(|(slab, gi_slab)| {
            let (ni, ci) = (slab / cin, slab % cin);
            for co in 0..cout {
                let wv = weight.data()[co * cin + ci];
                axpy(gi_slab, wv, &go[(ni * cout + co) * vox..(ni * cout + co + 1) * vox]);
            }
        });

    let mut grad_w = Tensor::zeros(weight.shape());
    for co in 0..cout {
        for ci in 0..cin {
            let mut acc = T::zero();
            for ni in 0..n {
                acc += dot(
                    &go[(ni * cout + co) * vox..(ni * cout + co + 1) * vox],
                    &x[(ni * cin + ci) * vox..(ni * cin + ci + 1) * vox],
                );
            }
            grad_w.data_mut()[co * cin + ci] = acc;
        }
    }

    let mut grad_b = Tensor::zeros(&[cout]);
    for co in 0..cout {
        let mut acc = T::zero();
        for ni in 0..n {
            acc += sum(&go[(ni * cout + co) * vox..(ni * cout + co + 1) * vox]);
        }
        grad_b.data_mut()[co] = acc;
    }

    Ok((grad_in, grad_w, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4, 4]);
        let w = rand_tensor(&[3, 2, 3, 3, 3], &mut rng);
        let b = Tensor::zeros(&[3]);
        let y = conv3d_forward(&x, &w, &b).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirac_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor(&[1, 1, 4, 6, 4], &mut rng);
        let mut w = Tensor::<f64>::zeros(&[1, 1, 3, 3, 3]);
        w.data_mut()[13] = 1.0; // center tap (1,1,1)
        let b = Tensor::zeros(&[1]);
        let y = conv3d_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn matches_direct_convolution_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..8 {
            let (n, cin, cout) = (
                rng.random_range(1..3usize),
                rng.random_range(1..4usize),
                rng.random_range(1..4usize),
            );
            let (d, h, w) = (
                rng.random_range(1..6usize),
                rng.random_range(1..6usize),
                rng.random_range(1..6usize),
            );
            let x = rand_tensor(&[n, cin, d, h, w], &mut rng);
            let k = rand_tensor(&[cout, cin, 3, 3, 3], &mut rng);
            let b = rand_tensor(&[cout], &mut rng);
            let fast = conv3d_forward(&x, &k, &b).unwrap();
            let slow = oracles::conv3d_direct(&x, &k, &b);
            assert!(fast.max_abs_diff(&slow) < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_reports_both_shapes() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4, 4]);
        let w = Tensor::<f64>::zeros(&[3, 5, 3, 3, 3]);
        let b = Tensor::zeros(&[3]);
        let err = conv3d_forward(&x, &w, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 4, 4, 4]") && msg.contains("[3, 5, 3, 3, 3]"), "{msg}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_tensor(&[1, 2, 3, 4, 3], &mut rng);
        let k = rand_tensor(&[2, 2, 3, 3, 3], &mut rng);
        let b = rand_tensor(&[2], &mut rng);
        let go = rand_tensor(&[1, 2, 3, 4, 3], &mut rng);
        let loss = |y: &Tensor<f64>| {
            y.data()
                .iter()
                .zip(go.data())
                .map(|(a, g)| a * g)
                .sum::<f64>()
        };
        let (gi, gw, gb) = conv3d_backward(&x, &k, &go).unwrap();
        for &coord in &[0usize, 7, 33, 50] {
            let fd = oracles::central_difference(
                |xs| loss(&conv3d_forward(xs, &k, &b).unwrap()),
                &x,
                coord,
                1e-6,
            );
            assert!((gi.data()[coord] - fd).abs() < 1e-7, "input coord {coord}");
        }
        for &coord in &[0usize, 13, 53] {
            let fd = oracles::central_difference(
                |ks| loss(&conv3d_forward(&x, ks, &b).unwrap()),
                &k,
                coord,
                1e-6,
            );
            assert!((gw.data()[coord] - fd).abs() < 1e-7, "weight coord {coord}");
        }
        let fd = oracles::central_difference(
            |bs| loss(&conv3d_forward(&x, &k, bs).unwrap()),
            &b,
            1,
            1e-6,
        );
        assert!((gb.data()[1] - fd).abs() < 1e-7);
    }

    #[test]
    fn conv1x1_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&[2, 3, 2, 3, 2], &mut rng);
        let w = rand_tensor(&[4, 3], &mut rng);
        let b = rand_tensor(&[4], &mut rng);
        let fast = conv1x1_forward(&x, &w, &b).unwrap();
        let slow = oracles::conv1x1_direct(&x, &w, &b);
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }
}
