//! Overlapped sliding-window inference, morphological cleanup, and the
//! segmentation metrics (Dice overlap, average surface distance, percentile
//! Hausdorff distance).

mod metrics;
mod morph;
mod stitch;

pub use metrics::{
    asd, dice, evaluate, evaluate_batch, mhd, EvalReport, Mask, MhdMode, SurfaceSet, TissueRow,
};
pub use morph::morph_cleanup;
pub use stitch::{stitch_inference, NetPredictor, WindowPredictor};

use crate::error::{VxError, VxResult};

/// Window corners covering a volume: every `stride` voxels per axis, with
/// the final window clamped (shifted inward) to the boundary so nothing
/// outside the volume is ever synthesized.
#[derive(Debug, Clone)]
pub struct SlidingWindowPlan {
    pub patch: usize,
    pub stride: usize,
    pub corners: Vec<[usize; 3]>,
}

impl SlidingWindowPlan {
    pub fn new(extents: [usize; 3], patch: usize, stride: usize) -> VxResult<Self> {
        if stride == 0 {
            return Err(VxError::InvalidArgument("stride must be >= 1".into()));
        }
        if extents.iter().any(|&e| e < patch) {
            return Err(VxError::InvalidArgument(format!(
                "volume extents {extents:?} smaller than window size {patch}"
            )));
        }
        let axis_positions = |extent: usize| -> Vec<usize> {
            let last = extent - patch;
            let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
            if *v.last().unwrap() != last {
                v.push(last);
            }
            v
        };
        let (zs, ys, xs) = (
            axis_positions(extents[0]),
            axis_positions(extents[1]),
            axis_positions(extents[2]),
        );
        let mut corners = Vec::with_capacity(zs.len() * ys.len() * xs.len());
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    corners.push([z, y, x]);
                }
            }
        }
        Ok(SlidingWindowPlan {
            patch,
            stride,
            corners,
        })
    }

    pub fn window_count(&self) -> usize {
        self.corners.len()
    }
}
