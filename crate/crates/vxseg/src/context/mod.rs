//! Two-stage context glue: initial segmentation from stage-1 probabilities,
//! per-tissue Euclidean distance maps, and orchestration of the second
//! network over (modalities + context) streams.

mod edt;
mod pipeline;

pub use edt::{distance_maps, edt_exact_mm, edt_sq_exact_mm, DistanceMapSet, DEFAULT_DMAX_MM};
pub use pipeline::{
    attach_context, check_compatible, run_single_stage, run_two_stage, PipelineOpts,
    TwoStageOutput, CONTEXT_MODALITIES,
};

use crate::error::{VxError, VxResult};
use crate::tensor::{IntGrid, Tensor};

/// Dense per-voxel class probabilities, shape [K, D, H, W].
#[derive(Debug, Clone)]
pub struct ProbabilityVolume {
    pub probs: Tensor<f32>,
    pub spacing_mm: [f64; 3],
}

impl ProbabilityVolume {
    pub fn new(probs: Tensor<f32>, spacing_mm: [f64; 3]) -> VxResult<Self> {
        let pv = ProbabilityVolume { probs, spacing_mm };
        pv.validate()?;
        Ok(pv)
    }

    pub fn num_classes(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn extents(&self) -> [usize; 3] {
        [
            self.probs.shape()[1],
            self.probs.shape()[2],
            self.probs.shape()[3],
        ]
    }

    pub fn validate(&self) -> VxResult<()> {
        if self.probs.rank() != 4 {
            return Err(VxError::InvalidArgument(format!(
                "probability volume must be [K, D, H, W], shape is {:?}",
                self.probs.shape()
            )));
        }
        let k = self.num_classes();
        let vox = self.probs.len() / k;
        for v in 0..vox {
            let mut sum = 0.0f64;
            for c in 0..k {
                let p = self.probs.data()[c * vox + v];
                if !(0.0..=1.0).contains(&p) {
                    return Err(VxError::InvalidArgument(format!(
                        "probability {p} out of [0, 1] at voxel {v}"
                    )));
                }
                sum += p as f64;
            }
            if (sum - 1.0).abs() > 1e-5 {
                return Err(VxError::InvalidArgument(format!(
                    "probabilities sum to {sum} at voxel {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-voxel argmax over classes; ties break toward the smaller class index.
pub fn argmax_segmentation(probs: &ProbabilityVolume) -> IntGrid {
    let k = probs.num_classes();
    let [d, h, w] = probs.extents();
    let vox = d * h * w;
    let mut out = Vec::with_capacity(vox);
    for v in 0..vox {
        let mut best_c = 0usize;
        let mut best = probs.probs.data()[v];
        for c in 1..k {
            let p = probs.probs.data()[c * vox + v];
            if p > best {
                best = p;
                best_c = c;
            }
        }
        out.push(best_c as u8);
    }
    IntGrid::new(vec![d, h, w], out).expect("extents from a valid volume")
}
