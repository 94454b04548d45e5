//! Naive reference implementations used by the verification suite.
//!
//! Everything here is written as plain scalar loops straight from the
//! definitions, with no shared code paths into the optimized kernels they
//! are compared against. Slow on purpose; only run on small shapes.

use crate::dtype::Scalar;
use crate::tensor::{IntGrid, Tensor};

/// Direct 7-loop 3D convolution, kernel 3x3x3, stride 1, zero padding 1.
pub fn conv3d_direct<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let [n, cin, d, h, w] = input.dims5().unwrap();
    let [cout, cin_w, kd, kh, kw] = weight.dims5().unwrap();
    assert_eq!(cin, cin_w);
    assert_eq!((kd, kh, kw), (3, 3, 3));
    let x = input.data();
    let k = weight.data();
    let mut out = Tensor::zeros(&[n, cout, d, h, w]);
    for ni in 0..n {
        for co in 0..cout {
            for z in 0..d {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = bias.data()[co].cast_f64();
                        for ci in 0..cin {
                            for dz in 0..3usize {
                                for dy in 0..3usize {
                                    for dx in 0..3usize {
                                        let iz = z as isize + dz as isize - 1;
                                        let iy = y as isize + dy as isize - 1;
                                        let ix = xx as isize + dx as isize - 1;
                                        if iz < 0
                                            || iy < 0
                                            || ix < 0
                                            || iz >= d as isize
                                            || iy >= h as isize
                                            || ix >= w as isize
                                        {
                                            continue;
                                        }
                                        let xi = (((ni * cin + ci) * d + iz as usize) * h
                                            + iy as usize)
                                            * w
                                            + ix as usize;
                                        let wi = (((co * cin + ci) * 3 + dz) * 3 + dy) * 3 + dx;
                                        acc += x[xi].cast_f64() * k[wi].cast_f64();
                                    }
                                }
                            }
                        }
                        let oi = (((ni * cout + co) * d + z) * h + y) * w + xx;
                        out.data_mut()[oi] = T::cast_from(acc);
                    }
                }
            }
        }
    }
    out
}

/// Pointwise (1x1x1) convolution over channels.
pub fn conv1x1_direct<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let [n, cin, d, h, w] = input.dims5().unwrap();
    let cout = weight.shape()[0];
    assert_eq!(weight.shape(), &[cout, cin]);
    let vox = d * h * w;
    let mut out = Tensor::zeros(&[n, cout, d, h, w]);
    for ni in 0..n {
        for co in 0..cout {
            for v in 0..vox {
                let mut acc = bias.data()[co].cast_f64();
                for ci in 0..cin {
                    acc += input.data()[(ni * cin + ci) * vox + v].cast_f64()
                        * weight.data()[co * cin + ci].cast_f64();
                }
                out.data_mut()[(ni * cout + co) * vox + v] = T::cast_from(acc);
            }
        }
    }
    out
}

/// Blockwise max over non-overlapping 2x2x2 blocks.
pub fn maxpool3d_blockmax<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let [n, c, d, h, w] = input.dims5().unwrap();
    assert!(d % 2 == 0 && h % 2 == 0 && w % 2 == 0);
    let (od, oh, ow) = (d / 2, h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, od, oh, ow]);
    for ni in 0..n {
        for ci in 0..c {
            for z in 0..od {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut best = T::neg_infinity();
                        for dz in 0..2 {
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let xi = (((ni * c + ci) * d + 2 * z + dz) * h + 2 * y + dy)
                                        * w
                                        + 2 * xx
                                        + dx;
                                    let v = input.data()[xi];
                                    if v > best {
                                        best = v;
                                    }
                                }
                            }
                        }
                        out.data_mut()[(((ni * c + ci) * od + z) * oh + y) * ow + xx] = best;
                    }
                }
            }
        }
    }
    out
}

/// Transposed convolution with 2x2x2 kernel and stride 2, by scatter loops.
pub fn upconv3d_scatter<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>) -> Tensor<T> {
    let [n, cin, d, h, w] = input.dims5().unwrap();
    let [cin_w, cout, kd, kh, kw] = weight.dims5().unwrap();
    assert_eq!(cin, cin_w);
    assert_eq!((kd, kh, kw), (2, 2, 2));
    let (od, oh, ow) = (2 * d, 2 * h, 2 * w);
    let mut out: Tensor<T> = Tensor::zeros(&[n, cout, od, oh, ow]);
    for ni in 0..n {
        for ci in 0..cin {
            for z in 0..d {
                for y in 0..h {
                    for xx in 0..w {
                        let v = input.data()[(((ni * cin + ci) * d + z) * h + y) * w + xx].cast_f64();
                        for co in 0..cout {
                            for dz in 0..2 {
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        let oi = (((ni * cout + co) * od + 2 * z + dz) * oh
                                            + 2 * y
                                            + dy)
                                            * ow
                                            + 2 * xx
                                            + dx;
                                        let wi =
                                            (((ci * cout + co) * 2 + dz) * 2 + dy) * 2 + dx;
                                        let cur = out.data()[oi].cast_f64();
                                        let wv = weight.data()[wi].cast_f64();
                                        out.data_mut()[oi] = T::cast_from(cur + v * wv);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Two-pass per-channel mean/variance batch normalization (train mode).
pub fn batchnorm3d_twopass<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Tensor<T> {
    let [n, c, d, h, w] = input.dims5().unwrap();
    let vox = d * h * w;
    let count = (n * vox) as f64;
    let mut out = Tensor::zeros(input.shape());
    for ci in 0..c {
        let mut sum = 0.0;
        for ni in 0..n {
            for v in 0..vox {
                sum += input.data()[(ni * c + ci) * vox + v].cast_f64();
            }
        }
        let mean = sum / count;
        let mut var_sum = 0.0;
        for ni in 0..n {
            for v in 0..vox {
                let dlt = input.data()[(ni * c + ci) * vox + v].cast_f64() - mean;
                var_sum += dlt * dlt;
            }
        }
        let var = var_sum / count;
        let inv_std = 1.0 / (var + eps).sqrt();
        let (g, b) = (gamma.data()[ci].cast_f64(), beta.data()[ci].cast_f64());
        for ni in 0..n {
            for v in 0..vox {
                let idx = (ni * c + ci) * vox + v;
                let xhat = (input.data()[idx].cast_f64() - mean) * inv_std;
                out.data_mut()[idx] = T::cast_from(g * xhat + b);
            }
        }
    }
    out
}

/// Per-voxel channel softmax by direct exponentials.
pub fn softmax_channels_direct<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let [n, k, d, h, w] = input.dims5().unwrap();
    let vox = d * h * w;
    let mut out = Tensor::zeros(input.shape());
    for ni in 0..n {
        for v in 0..vox {
            let mut mx = f64::NEG_INFINITY;
            for c in 0..k {
                mx = mx.max(input.data()[(ni * k + c) * vox + v].cast_f64());
            }
            let mut denom = 0.0;
            for c in 0..k {
                denom += (input.data()[(ni * k + c) * vox + v].cast_f64() - mx).exp();
            }
            for c in 0..k {
                let e = (input.data()[(ni * k + c) * vox + v].cast_f64() - mx).exp();
                out.data_mut()[(ni * k + c) * vox + v] = T::cast_from(e / denom);
            }
        }
    }
    out
}

/// Mean cross-entropy by a per-voxel scalar loop, probabilities clamped to
/// `[1e-7, 1]` before the log.
pub fn cross_entropy_scalar_loop<T: Scalar>(probs: &Tensor<T>, labels: &IntGrid) -> f64 {
    let [n, k, d, h, w] = probs.dims5().unwrap();
    assert_eq!(labels.shape(), &[n, d, h, w]);
    let vox = d * h * w;
    let mut total = 0.0;
    for ni in 0..n {
        for v in 0..vox {
            let t = labels.data()[ni * vox + v] as usize;
            assert!(t < k);
            let p = probs.data()[(ni * k + t) * vox + v].cast_f64();
            total += -p.clamp(1e-7, 1.0).ln();
        }
    }
    total / (n * vox) as f64
}

/// Nearest-neighbor label downsampling by even-index striding.
pub fn downsample_labels_stride(labels: &IntGrid, m: u32) -> IntGrid {
    let [d, h, w] = labels.dims3().unwrap();
    let s = 1usize << m;
    assert!(d % s == 0 && h % s == 0 && w % s == 0);
    let (od, oh, ow) = (d / s, h / s, w / s);
    let mut out = Vec::with_capacity(od * oh * ow);
    for z in 0..od {
        for y in 0..oh {
            for x in 0..ow {
                out.push(labels.data()[((z * s) * h + y * s) * w + x * s]);
            }
        }
    }
    IntGrid::new(vec![od, oh, ow], out).unwrap()
}

/// Eqs-from-the-definitions multi-scale loss: per-scale mean cross-entropy of
/// softmaxed logits against strided labels, alpha-weighted sum, plus lambda
/// times the sum of squared regularized weights.
///
/// Returns (total, classification, regularization).
pub fn multiscale_loss_direct<T: Scalar>(
    branch_logits: &[Tensor<T>],
    labels: &IntGrid,
    alphas: &[f64],
    lambda: f64,
    reg_weights: &[&Tensor<T>],
) -> (f64, f64, f64) {
    assert_eq!(branch_logits.len(), alphas.len());
    let mut cls = 0.0;
    for (m, logits) in branch_logits.iter().enumerate() {
        let probs = softmax_channels_direct(logits);
        let ds = downsample_labels_stride(labels, m as u32);
        let [n, _, d, h, w] = logits.dims5().unwrap();
        assert_eq!(n, 1, "oracle handles single-sample batches");
        let ds4 = IntGrid::new(vec![1, d, h, w], ds.into_data()).unwrap();
        cls += alphas[m] * cross_entropy_scalar_loop(&probs, &ds4);
    }
    let mut reg = 0.0;
    for wt in reg_weights {
        for &v in wt.data() {
            reg += v.cast_f64() * v.cast_f64();
        }
    }
    reg *= lambda;
    (cls + reg, cls, reg)
}

/// All-pairs exact Euclidean distance (mm) from every voxel to the nearest
/// `true` voxel of `mask`. `f64::INFINITY` where the mask is empty.
pub fn edt_all_pairs(mask: &[bool], extents: [usize; 3], spacing_mm: [f64; 3]) -> Vec<f64> {
    let [d, h, w] = extents;
    let mut sources = Vec::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if mask[(z * h + y) * w + x] {
                    sources.push((z as f64, y as f64, x as f64));
                }
            }
        }
    }
    let mut out = vec![f64::INFINITY; d * h * w];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let mut best = f64::INFINITY;
                for &(sz, sy, sx) in &sources {
                    let dz = (z as f64 - sz) * spacing_mm[0];
                    let dy = (y as f64 - sy) * spacing_mm[1];
                    let dx = (x as f64 - sx) * spacing_mm[2];
                    let dd = dz * dz + dy * dy + dx * dx;
                    if dd < best {
                        best = dd;
                    }
                }
                out[(z * h + y) * w + x] = best.sqrt();
            }
        }
    }
    out
}

/// Surface voxels of a mask: members with at least one 6-neighbor outside it
/// (out-of-volume counts as outside). Returned as voxel index triples.
pub fn surface_voxels(mask: &[bool], extents: [usize; 3]) -> Vec<[usize; 3]> {
    let [d, h, w] = extents;
    let at = |z: isize, y: isize, x: isize| -> bool {
        if z < 0 || y < 0 || x < 0 || z >= d as isize || y >= h as isize || x >= w as isize {
            false
        } else {
            mask[(z as usize * h + y as usize) * w + x as usize]
        }
    };
    let mut out = Vec::new();
    for z in 0..d as isize {
        for y in 0..h as isize {
            for x in 0..w as isize {
                if !at(z, y, x) {
                    continue;
                }
                let exposed = !at(z - 1, y, x)
                    || !at(z + 1, y, x)
                    || !at(z, y - 1, x)
                    || !at(z, y + 1, x)
                    || !at(z, y, x - 1)
                    || !at(z, y, x + 1);
                if exposed {
                    out.push([z as usize, y as usize, x as usize]);
                }
            }
        }
    }
    out
}

/// Directed nearest-surface distances in mm, one entry per voxel of `from`,
/// by the all-pairs definition.
pub fn directed_surface_distances_brute(
    from: &[[usize; 3]],
    to: &[[usize; 3]],
    spacing_mm: [f64; 3],
) -> Vec<f64> {
    from.iter()
        .map(|a| {
            to.iter()
                .map(|b| {
                    let dz = (a[0] as f64 - b[0] as f64) * spacing_mm[0];
                    let dy = (a[1] as f64 - b[1] as f64) * spacing_mm[1];
                    let dx = (a[2] as f64 - b[2] as f64) * spacing_mm[2];
                    (dz * dz + dy * dy + dx * dx).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Dice overlap from raw voxel counts.
pub fn dice_counts(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len());
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let na = a.iter().filter(|x| **x).count();
    let nb = b.iter().filter(|x| **x).count();
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// Symmetric average surface distance from the all-pairs definition.
pub fn asd_brute(a: &[bool], b: &[bool], extents: [usize; 3], spacing_mm: [f64; 3]) -> f64 {
    let sa = surface_voxels(a, extents);
    let sb = surface_voxels(b, extents);
    assert!(!sa.is_empty() && !sb.is_empty());
    let dab = directed_surface_distances_brute(&sa, &sb, spacing_mm);
    let dba = directed_surface_distances_brute(&sb, &sa, spacing_mm);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    0.5 * (mean(&dab) + mean(&dba))
}

/// Percentile symmetric Hausdorff distance from the all-pairs definition,
/// nearest-rank percentile on the sorted directed distances.
pub fn mhd_brute(
    a: &[bool],
    b: &[bool],
    extents: [usize; 3],
    spacing_mm: [f64; 3],
    percentile: f64,
) -> f64 {
    let sa = surface_voxels(a, extents);
    let sb = surface_voxels(b, extents);
    assert!(!sa.is_empty() && !sb.is_empty());
    let rank = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let n = v.len();
        let r = ((percentile / 100.0) * n as f64).ceil() as usize;
        v[r.clamp(1, n) - 1]
    };
    let dab = rank(directed_surface_distances_brute(&sa, &sb, spacing_mm));
    let dba = rank(directed_surface_distances_brute(&sb, &sa, spacing_mm));
    dab.max(dba)
}

/// 6-connected component labeling by union-find (the BFS path in the
/// morphology code is checked against this).
pub fn connected_components_union_find(mask: &[bool], extents: [usize; 3]) -> Vec<Vec<usize>> {
    let [d, h, w] = extents;
    let n = d * h * w;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let union = |parent: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    };
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                if !mask[i] {
                    continue;
                }
                if z + 1 < d && mask[i + h * w] {
                    union(&mut parent, i, i + h * w);
                }
                if y + 1 < h && mask[i + w] {
                    union(&mut parent, i, i + w);
                }
                if x + 1 < w && mask[i + 1] {
                    union(&mut parent, i, i + 1);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        if mask[i] {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
    }
    groups.into_values().collect()
}

/// Central finite difference of a scalar function at one coordinate of `x`.
pub fn central_difference<F: Fn(&Tensor<f64>) -> f64>(
    f: F,
    x: &Tensor<f64>,
    coord: usize,
    h: f64,
) -> f64 {
    let mut xp = x.clone();
    xp.data_mut()[coord] += h;
    let fp = f(&xp);
    let mut xm = x.clone();
    xm.data_mut()[coord] -= h;
    let fm = f(&xm);
    (fp - fm) / (2.0 * h)
}
