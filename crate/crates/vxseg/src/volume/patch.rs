//! Patch sampling, per-patch normalization, and the 8-fold augmentation
//! group (z-axis quarter turns times an optional y flip).

use rand::Rng;

use crate::error::{VxError, VxResult};
use crate::tensor::{IntGrid, Tensor};
use crate::volume::{LabeledVolume, Modality};

#[derive(Debug, Clone, Copy)]
pub struct PatchSpec {
    /// Cubic patch extent.
    pub size: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec { size: 64 }
    }
}

/// A congruent crop of every modality (and labels when present).
#[derive(Debug, Clone)]
pub struct CroppedPatch {
    pub modalities: Vec<Modality>,
    pub labels: Option<IntGrid>,
}

/// Uniformly random crop corner; each axis draws from 0..=extent-size in
/// (z, y, x) order.
pub fn sample_corner(
    extents: [usize; 3],
    size: usize,
    rng: &mut impl Rng,
) -> VxResult<[usize; 3]> {
    for &e in &extents {
        if e < size {
            return Err(VxError::InvalidArgument(format!(
                "volume extents {extents:?} smaller than patch size {size}"
            )));
        }
    }
    Ok([
        rng.random_range(0..=extents[0] - size),
        rng.random_range(0..=extents[1] - size),
        rng.random_range(0..=extents[2] - size),
    ])
}

fn crop_grid<T: Copy>(
    data: &[T],
    extents: [usize; 3],
    corner: [usize; 3],
    size: usize,
) -> Vec<T> {
    let [_, h, w] = extents;
    let mut out = Vec::with_capacity(size * size * size);
    for z in 0..size {
        for y in 0..size {
            let base = ((corner[0] + z) * h + corner[1] + y) * w + corner[2];
            out.extend_from_slice(&data[base..base + size]);
        }
    }
    out
}

pub fn crop(volume: &LabeledVolume, corner: [usize; 3], size: usize) -> VxResult<CroppedPatch> {
    let extents = volume.extents()?;
    for a in 0..3 {
        if corner[a] + size > extents[a] {
            return Err(VxError::InvalidArgument(format!(
                "crop at {corner:?} size {size} exceeds extents {extents:?}"
            )));
        }
    }
    let shape = vec![size, size, size];
    let modalities = volume
        .modalities
        .iter()
        .map(|m| {
            Ok(Modality {
                name: m.name.clone(),
                data: Tensor::new(shape.clone(), crop_grid(m.data.data(), extents, corner, size))?,
            })
        })
        .collect::<VxResult<Vec<_>>>()?;
    let labels = volume
        .labels
        .as_ref()
        .map(|l| IntGrid::new(shape.clone(), crop_grid(l.data(), extents, corner, size)))
        .transpose()?;
    Ok(CroppedPatch { modalities, labels })
}

/// Uniformly random congruent crop of all grids.
pub fn sample_patch(
    volume: &LabeledVolume,
    size: usize,
    rng: &mut impl Rng,
) -> VxResult<CroppedPatch> {
    let corner = sample_corner(volume.extents()?, size, rng)?;
    crop(volume, corner, size)
}

/// Zero-mean, unit-variance normalization of one scalar grid, with a
/// standard-deviation floor of 1e-6 (a constant grid maps to zeros).
pub fn normalize_grid(grid: &Tensor<f32>) -> Tensor<f32> {
    let n = grid.len() as f64;
    let mean = grid.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = grid
        .data()
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let inv = 1.0 / var.sqrt().max(1e-6);
    grid.map(|v| (((v as f64) - mean) * inv) as f32)
}

/// One element of the 8-fold augmentation group: `rot_k` quarter turns
/// about the z axis followed (optionally) by a flip along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augment {
    pub rot_k: u8,
    pub flip_y: bool,
}

impl Augment {
    pub const IDENTITY: Augment = Augment {
        rot_k: 0,
        flip_y: false,
    };

    /// The full group, indexed 0..8.
    pub fn from_index(i: usize) -> Augment {
        Augment {
            rot_k: (i % 4) as u8,
            flip_y: i >= 4,
        }
    }

    /// Index map of one application: returns the source (y, x) for each
    /// destination (y, x). One quarter turn sends input (y0, x0) to output
    /// (x0, W-1-y0).
    fn source_index(
        &self,
        [_, h, w]: [usize; 3],
        z: usize,
        y: usize,
        x: usize,
    ) -> (usize, usize, usize) {
        let (mut sy, mut sx) = (y, x);
        if self.flip_y {
            sy = h - 1 - sy;
        }
        for _ in 0..(self.rot_k % 4) {
            // inverse of (y, x) -> (x, W-1-y) is (y, x) -> (W-1-x, y)
            let (ny, nx) = (w - 1 - sx, sy);
            sy = ny;
            sx = nx;
        }
        (z, sy, sx)
    }

    fn check_square(&self, extents: [usize; 3]) -> VxResult<()> {
        if self.rot_k % 4 != 0 && extents[1] != extents[2] {
            return Err(VxError::InvalidArgument(format!(
                "rot90z requires a square (y, x) plane, extents are {extents:?}"
            )));
        }
        Ok(())
    }

    pub fn apply_to_grid(&self, grid: &Tensor<f32>) -> VxResult<Tensor<f32>> {
        let extents = grid.dims3()?;
        self.check_square(extents)?;
        let [d, h, w] = extents;
        let mut out = Vec::with_capacity(grid.len());
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let (sz, sy, sx) = self.source_index(extents, z, y, x);
                    out.push(grid.data()[(sz * h + sy) * w + sx]);
                }
            }
        }
        Tensor::new(vec![d, h, w], out)
    }

    pub fn apply_to_labels(&self, labels: &IntGrid) -> VxResult<IntGrid> {
        let extents = labels.dims3()?;
        self.check_square(extents)?;
        let [d, h, w] = extents;
        let mut out = Vec::with_capacity(labels.len());
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let (sz, sy, sx) = self.source_index(extents, z, y, x);
                    out.push(labels.data()[(sz * h + sy) * w + sx]);
                }
            }
        }
        IntGrid::new(vec![d, h, w], out)
    }

    pub fn apply(&self, patch: &CroppedPatch) -> VxResult<CroppedPatch> {
        let modalities = patch
            .modalities
            .iter()
            .map(|m| {
                Ok(Modality {
                    name: m.name.clone(),
                    data: self.apply_to_grid(&m.data)?,
                })
            })
            .collect::<VxResult<Vec<_>>>()?;
        let labels = patch
            .labels
            .as_ref()
            .map(|l| self.apply_to_labels(l))
            .transpose()?;
        Ok(CroppedPatch { modalities, labels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn marked_grid(extents: [usize; 3], mark: [usize; 3]) -> Tensor<f32> {
        let [d, h, w] = extents;
        let mut t = Tensor::zeros(&[d, h, w]);
        t.data_mut()[(mark[0] * h + mark[1]) * w + mark[2]] = 1.0;
        t
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let g = Tensor::<f32>::from_fn(&[2, 4, 4], |_| rng.random_range(-1.0..1.0));
        let r = Augment {
            rot_k: 1,
            flip_y: false,
        };
        let mut cur = g.clone();
        for _ in 0..4 {
            cur = r.apply_to_grid(&cur).unwrap();
        }
        assert_eq!(cur.data(), g.data());
    }

    #[test]
    fn flip_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        let g = Tensor::<f32>::from_fn(&[3, 4, 5], |_| rng.random_range(-1.0..1.0));
        let f = Augment {
            rot_k: 0,
            flip_y: true,
        };
        let once = f.apply_to_grid(&g).unwrap();
        let twice = f.apply_to_grid(&once).unwrap();
        assert_eq!(twice.data(), g.data());
    }

    /// One quarter turn maps (z, y0, x0) to (z, x0, W-1-y0): marked voxel
    /// (0, 1, 2) in a 1x4x4 grid lands at (0, 2, 4-1-1) = (0, 2, 2).
    #[test]
    fn rotation_index_map_matches_hand_computation() {
        let g = marked_grid([1, 4, 4], [0, 1, 2]);
        let r = Augment {
            rot_k: 1,
            flip_y: false,
        };
        let rotated = r.apply_to_grid(&g).unwrap();
        let expected = marked_grid([1, 4, 4], [0, 2, 2]);
        assert_eq!(rotated.data(), expected.data());
    }

    #[test]
    fn rotation_rejects_non_square_plane() {
        let g = Tensor::<f32>::zeros(&[2, 3, 4]);
        let r = Augment {
            rot_k: 1,
            flip_y: false,
        };
        assert!(r.apply_to_grid(&g).is_err());
    }

    #[test]
    fn augment_preserves_label_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let labels = IntGrid::new(
            vec![4, 4, 4],
            (0..64).map(|_| rng.random_range(0..4u8)).collect(),
        )
        .unwrap();
        for i in 0..8 {
            let aug = Augment::from_index(i);
            let out = aug.apply_to_labels(&labels).unwrap();
            assert_eq!(out.histogram(4), labels.histogram(4), "augment {i}");
        }
    }

    #[test]
    fn normalization_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(84);
        let g = Tensor::<f32>::from_fn(&[4, 4, 4], |_| rng.random_range(0.0..10.0));
        let n = normalize_grid(&g);
        let mean: f64 = n.data().iter().map(|&v| v as f64).sum::<f64>() / n.len() as f64;
        let std = (n
            .data()
            .iter()
            .map(|&v| (v as f64 - mean) * (v as f64 - mean))
            .sum::<f64>()
            / n.len() as f64)
            .sqrt();
        assert!(mean.abs() < 1e-5);
        assert!((std - 1.0).abs() < 1e-4);

        // constant grid maps to zeros through the std floor
        let c = Tensor::<f32>::full(&[2, 2, 2], 7.5);
        assert!(normalize_grid(&c).data().iter().all(|&v| v == 0.0));

        // affine invariance: a*x + b normalizes identically for a > 0
        let affine = g.map(|v| 3.0 * v + 11.0);
        let na = normalize_grid(&affine);
        for (x, y) in n.data().iter().zip(na.data()) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn degenerate_crop_returns_whole_volume() {
        let vol = LabeledVolume {
            modalities: vec![Modality {
                name: "t1".into(),
                data: Tensor::from_fn(&[4, 4, 4], |i| i as f32),
            }],
            labels: None,
            spacing_mm: [1.0; 3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(85);
        let p = sample_patch(&vol, 4, &mut rng).unwrap();
        assert_eq!(p.modalities[0].data.data(), vol.modalities[0].data.data());
        assert!(sample_patch(&vol, 5, &mut rng).is_err());
    }

    #[test]
    fn fixed_seed_gives_fixed_corner() {
        let a = sample_corner([128; 3], 64, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_corner([128; 3], 64, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
