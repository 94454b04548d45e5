//! Exact Euclidean distance transform by the separable lower-envelope
//! (parabola) method, one pass per axis, anisotropy-aware: sample q of an
//! axis with spacing s sits at position q*s, so squared distances come out
//! directly in mm².

use rayon::prelude::*;

use crate::error::{VxError, VxResult};
use crate::tensor::{IntGrid, Tensor};

pub const DEFAULT_DMAX_MM: f64 = 20.0;

/// Per-tissue distance maps (CSF, GM, WM), clamped to `d_max_mm` and scaled
/// to [0, 1]; zero exactly on the tissue's own voxels.
#[derive(Debug, Clone)]
pub struct DistanceMapSet {
    /// Indexed by label - 1; each map is a [D, H, W] grid.
    pub maps: Vec<Tensor<f32>>,
    pub d_max_mm: f64,
    pub spacing_mm: [f64; 3],
}

const INF: f64 = f64::INFINITY;

/// 1D squared-distance transform of sampled function `f` at positions
/// `i * spacing`. Writes the lower envelope evaluation into `out`.
fn dt_1d(f: &[f64], spacing: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut any = false;
    for q in 0..n {
        if f[q] == INF {
            continue;
        }
        let xq = q as f64 * spacing;
        if !any {
            v[0] = q;
            z[0] = -INF;
            z[1] = INF;
            any = true;
            continue;
        }
        loop {
            let p = v[k];
            let xp = p as f64 * spacing;
            let s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * xq - 2.0 * xp);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    if !any {
        out[..n].fill(INF);
        return;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate().take(n) {
        let xq = q as f64 * spacing;
        while z[k + 1] < xq {
            k += 1;
        }
        let xv = v[k] as f64 * spacing;
        let d = xq - xv;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (mm²) from every voxel to the nearest
/// `true` voxel; `INF` everywhere when the mask is empty.
pub fn edt_sq_exact_mm(mask: &[bool], extents: [usize; 3], spacing_mm: [f64; 3]) -> Vec<f64> {
    let [d, h, w] = extents;
    let mut g: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { INF }).collect();

    let max_extent = d.max(h).max(w);
    let mut f = vec![0.0f64; max_extent];
    let mut out = vec![0.0f64; max_extent];
    let mut v = vec![0usize; max_extent];
    let mut z = vec![0.0f64; max_extent + 1];

    // x axis: rows are contiguous
    for row in g.chunks_mut(w) {
        f[..w].copy_from_slice(row);
        dt_1d(&f[..w], spacing_mm[2], &mut out[..w], &mut v, &mut z);
        row.copy_from_slice(&out[..w]);
    }
    // y axis
    for zz in 0..d {
        for x in 0..w {
            for y in 0..h {
                f[y] = g[(zz * h + y) * w + x];
            }
            dt_1d(&f[..h], spacing_mm[1], &mut out[..h], &mut v, &mut z);
            for y in 0..h {
                g[(zz * h + y) * w + x] = out[y];
            }
        }
    }
    // z axis
    for y in 0..h {
        for x in 0..w {
            for zz in 0..d {
                f[zz] = g[(zz * h + y) * w + x];
            }
            dt_1d(&f[..d], spacing_mm[0], &mut out[..d], &mut v, &mut z);
            for zz in 0..d {
                g[(zz * h + y) * w + x] = out[zz];
            }
        }
    }
    g
}

/// Exact Euclidean distance in mm.
pub fn edt_exact_mm(mask: &[bool], extents: [usize; 3], spacing_mm: [f64; 3]) -> Vec<f64> {
    let mut g = edt_sq_exact_mm(mask, extents, spacing_mm);
    for v in &mut g {
        *v = v.sqrt();
    }
    g
}

/// Distance map per foreground tissue (labels 1..=3). An absent tissue
/// produces a saturated (all d_max) map and a warning, not an error.
pub fn distance_maps(
    seg: &IntGrid,
    spacing_mm: [f64; 3],
    d_max_mm: f64,
) -> VxResult<DistanceMapSet> {
    let extents = seg.dims3()?;
    if d_max_mm <= 0.0 || !d_max_mm.is_finite() {
        return Err(VxError::InvalidArgument(format!(
            "d_max must be positive, got {d_max_mm}"
        )));
    }
    let maps: Vec<Tensor<f32>> = (1u8..=3)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&label| {
            let mask: Vec<bool> = seg.data().iter().map(|&v| v == label).collect();
            if mask.iter().all(|&m| !m) {
                log::warn!(
                    "tissue label {label} absent from segmentation; its distance map saturates at d_max"
                );
                return Tensor::full(&[extents[0], extents[1], extents[2]], 1.0f32);
            }
            let dist = edt_exact_mm(&mask, extents, spacing_mm);
            let data: Vec<f32> = dist
                .iter()
                .map(|&d| (d.min(d_max_mm) / d_max_mm) as f32)
                .collect();
            Tensor::new(vec![extents[0], extents[1], extents[2]], data)
                .expect("extent product matches")
        })
        .collect();
    Ok(DistanceMapSet {
        maps,
        d_max_mm,
        spacing_mm,
    })
}
