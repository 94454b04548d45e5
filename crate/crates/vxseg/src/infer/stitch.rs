//! Overlapped-window inference with per-voxel probability averaging.

use crate::context::ProbabilityVolume;
use crate::error::{VxError, VxResult};
use crate::net::{forward, ForwardOpts, NetworkParams, NetworkSpec};
use crate::ops::softmax_channels_forward;
use crate::tensor::Tensor;
use crate::train::{assemble_streams, stream_grids};
use crate::volume::{crop, LabeledVolume};

use super::SlidingWindowPlan;

/// Anything that can map one cubic window of a volume to per-voxel class
/// probabilities [K, size, size, size]. Implemented by the real network
/// adapter and by test stubs.
pub trait WindowPredictor {
    fn num_classes(&self) -> usize;
    fn predict_window(
        &self,
        volume: &LabeledVolume,
        corner: [usize; 3],
        size: usize,
    ) -> VxResult<Tensor<f32>>;
}

/// Eval-mode network adapter: crops the window, z-normalizes the modality
/// streams (context streams pass through), and softmaxes the full-resolution
/// branch.
pub struct NetPredictor<'a> {
    pub spec: &'a NetworkSpec,
    pub params: &'a NetworkParams<f32>,
}

impl WindowPredictor for NetPredictor<'_> {
    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn predict_window(
        &self,
        volume: &LabeledVolume,
        corner: [usize; 3],
        size: usize,
    ) -> VxResult<Tensor<f32>> {
        let patch = crop(volume, corner, size)?;
        for stream in &self.spec.streams {
            stream_grids(&patch, &stream.name, stream.in_channels)?;
        }
        let inputs = assemble_streams::<f32>(self.spec, std::slice::from_ref(&patch))?;
        let pass = forward(self.spec, self.params, &inputs, &ForwardOpts::eval())?;
        let logits = pass.graph.value(pass.branch_logits[0]);
        let probs = softmax_channels_forward(logits)?;
        let k = self.spec.num_classes;
        probs.reshaped(&[k, size, size, size])
    }
}

/// Runs the predictor over every window of the plan and averages
/// probabilities where windows overlap (sum + count accumulators), then
/// renormalizes each voxel to kill accumulation drift.
pub fn stitch_inference(
    predictor: &dyn WindowPredictor,
    volume: &LabeledVolume,
    plan: &SlidingWindowPlan,
) -> VxResult<ProbabilityVolume> {
    let extents = volume.extents()?;
    let [d, h, w] = extents;
    let k = predictor.num_classes();
    let vox = d * h * w;
    let mut sums = vec![0.0f64; k * vox];
    let mut counts = vec![0u32; vox];
    let size = plan.patch;

    for &corner in &plan.corners {
        let probs = predictor.predict_window(volume, corner, size)?;
        if probs.shape() != [k, size, size, size] {
            return Err(VxError::ShapeMismatch {
                context: "window prediction".into(),
                lhs: probs.shape().to_vec(),
                rhs: vec![k, size, size, size],
            });
        }
        let pvox = size * size * size;
        for z in 0..size {
            for y in 0..size {
                let vol_base = ((corner[0] + z) * h + corner[1] + y) * w + corner[2];
                let win_base = (z * size + y) * size;
                for x in 0..size {
                    counts[vol_base + x] += 1;
                }
                for c in 0..k {
                    let src = &probs.data()[c * pvox + win_base..c * pvox + win_base + size];
                    let dst = &mut sums[c * vox + vol_base..c * vox + vol_base + size];
                    for (o, &p) in dst.iter_mut().zip(src.iter()) {
                        *o += p as f64;
                    }
                }
            }
        }
    }

    let mut data = vec![0.0f32; k * vox];
    for v in 0..vox {
        if counts[v] == 0 {
            return Err(VxError::InvalidArgument(format!(
                "window plan leaves voxel {v} uncovered"
            )));
        }
        let mut total = 0.0f64;
        for c in 0..k {
            total += sums[c * vox + v];
        }
        // counts cancel in the renormalization
        for c in 0..k {
            data[c * vox + v] = (sums[c * vox + v] / total) as f32;
        }
    }
    ProbabilityVolume::new(Tensor::new(vec![k, d, h, w], data)?, volume.spacing_mm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Modality;

    /// Probabilities depend only on the voxel's own t1 value.
    struct VoxelStub;

    impl WindowPredictor for VoxelStub {
        fn num_classes(&self) -> usize {
            4
        }

        fn predict_window(
            &self,
            volume: &LabeledVolume,
            corner: [usize; 3],
            size: usize,
        ) -> VxResult<Tensor<f32>> {
            let patch = crop(volume, corner, size)?;
            let t1 = &patch.modalities[0].data;
            let vox = size * size * size;
            let mut data = vec![0.0f32; 4 * vox];
            for (v, &x) in t1.data().iter().enumerate() {
                let raw = [0.1 + x.abs(), 0.2, 0.3, 0.4];
                let s: f32 = raw.iter().sum();
                for c in 0..4 {
                    data[c * vox + v] = raw[c] / s;
                }
            }
            Tensor::new(vec![4, size, size, size], data)
        }
    }

    /// Constant everywhere regardless of window layout.
    struct ConstStub;

    impl WindowPredictor for ConstStub {
        fn num_classes(&self) -> usize {
            4
        }

        fn predict_window(
            &self,
            _volume: &LabeledVolume,
            _corner: [usize; 3],
            size: usize,
        ) -> VxResult<Tensor<f32>> {
            let vox = size * size * size;
            let mut data = vec![0.0f32; 4 * vox];
            for c in 0..4 {
                let p = [0.4f32, 0.3, 0.2, 0.1][c];
                data[c * vox..(c + 1) * vox].fill(p);
            }
            Tensor::new(vec![4, size, size, size], data)
        }
    }

    fn ramp_volume(extent: usize) -> LabeledVolume {
        LabeledVolume {
            modalities: vec![Modality {
                name: "t1".into(),
                data: Tensor::from_fn(&[extent, extent, extent], |i| {
                    (i % 17) as f32 / 17.0 - 0.5
                }),
            }],
            labels: None,
            spacing_mm: [1.0; 3],
        }
    }

    #[test]
    fn constant_stub_is_constant_for_any_stride() {
        let vol = ramp_volume(24);
        for stride in [8usize, 12, 16] {
            let plan = SlidingWindowPlan::new([24; 3], 16, stride).unwrap();
            let pv = stitch_inference(&ConstStub, &vol, &plan).unwrap();
            let vox = 24 * 24 * 24;
            for v in 0..vox {
                assert!((pv.probs.data()[v] - 0.4).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn voxel_pure_stub_is_stride_independent() {
        let vol = ramp_volume(24);
        let reference = {
            let plan = SlidingWindowPlan::new([24; 3], 16, 16).unwrap();
            stitch_inference(&VoxelStub, &vol, &plan).unwrap()
        };
        for stride in [4usize, 8, 12] {
            let plan = SlidingWindowPlan::new([24; 3], 16, stride).unwrap();
            let pv = stitch_inference(&VoxelStub, &vol, &plan).unwrap();
            let diff = pv.probs.max_abs_diff(&reference.probs);
            assert!(diff <= 1e-6, "stride {stride}: diff {diff}");
        }
    }

    #[test]
    fn output_is_a_valid_probability_volume() {
        let vol = ramp_volume(20);
        let plan = SlidingWindowPlan::new([20; 3], 16, 8).unwrap();
        let pv = stitch_inference(&VoxelStub, &vol, &plan).unwrap();
        pv.validate().unwrap();
    }
}
