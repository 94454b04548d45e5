//! Labeled multi-modality volumes, their I/O, patch sampling and
//! augmentation, and the synthetic phantom generator.

mod native;
mod nifti;
mod patch;
mod phantom;

pub use native::{read_volume, write_volume};
pub use nifti::read_nifti;
pub use patch::{
    crop, normalize_grid, sample_corner, sample_patch, Augment, CroppedPatch, PatchSpec,
};
pub use phantom::{generate_phantom, tissue_means, Contrast, PHANTOM_MIN_EXTENT};

use crate::error::{VxError, VxResult};
use crate::tensor::{IntGrid, Tensor};

/// Segmentation classes: 0 background, 1 CSF, 2 GM, 3 WM.
pub const NUM_CLASSES: usize = 4;
/// Foreground tissue names indexed by label - 1.
pub const TISSUE_NAMES: [&str; 3] = ["csf", "gm", "wm"];

#[derive(Debug, Clone)]
pub struct Modality {
    pub name: String,
    /// Scalar grid [D, H, W].
    pub data: Tensor<f32>,
}

/// Multi-modality image volume with optional labels; all grids share
/// extents and voxel spacing (mm, (z, y, x) order).
#[derive(Debug, Clone)]
pub struct LabeledVolume {
    pub modalities: Vec<Modality>,
    pub labels: Option<IntGrid>,
    pub spacing_mm: [f64; 3],
}

impl LabeledVolume {
    /// Grid extents; a label-only volume (e.g. a written segmentation)
    /// takes them from the label grid.
    pub fn extents(&self) -> VxResult<[usize; 3]> {
        if let Some(m) = self.modalities.first() {
            return m.data.dims3();
        }
        self.labels
            .as_ref()
            .ok_or_else(|| VxError::InvalidArgument("volume has no modalities or labels".into()))?
            .dims3()
    }

    pub fn modality(&self, name: &str) -> Option<&Tensor<f32>> {
        self.modalities
            .iter()
            .find(|m| m.name == name)
            .map(|m| &m.data)
    }

    pub fn validate(&self) -> VxResult<()> {
        let extents = self.extents()?;
        for m in &self.modalities {
            if m.data.dims3()? != extents {
                return Err(VxError::ShapeMismatch {
                    context: format!("modality '{}' vs volume extents", m.name),
                    lhs: m.data.shape().to_vec(),
                    rhs: extents.to_vec(),
                });
            }
        }
        if let Some(labels) = &self.labels {
            if labels.dims3()? != extents {
                return Err(VxError::ShapeMismatch {
                    context: "labels vs volume extents".into(),
                    lhs: labels.shape().to_vec(),
                    rhs: extents.to_vec(),
                });
            }
            labels.validate_labels(NUM_CLASSES)?;
        }
        if self.spacing_mm.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(VxError::InvalidArgument(format!(
                "voxel spacing must be strictly positive, got {:?}",
                self.spacing_mm
            )));
        }
        Ok(())
    }
}
