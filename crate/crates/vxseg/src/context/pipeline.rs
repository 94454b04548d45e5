//! Two-stage orchestration: stage-1 sliding-window inference, argmax,
//! distance maps, and stage-2 inference with (modalities + context) streams.

use crate::context::{argmax_segmentation, distance_maps, DistanceMapSet, ProbabilityVolume};
use crate::error::{VxError, VxResult};
use crate::infer::{stitch_inference, NetPredictor, SlidingWindowPlan};
use crate::net::{NetworkParams, NetworkSpec};
use crate::tensor::IntGrid;
use crate::volume::{LabeledVolume, Modality};

/// Names under which the per-tissue distance maps enter the volume; the
/// "context" stream picks up all "context_*" grids in this order.
pub const CONTEXT_MODALITIES: [&str; 3] = ["context_csf", "context_gm", "context_wm"];

/// Returns a copy of `volume` with the distance maps attached as context
/// modalities (any previous context grids replaced).
pub fn attach_context(volume: &LabeledVolume, maps: &DistanceMapSet) -> VxResult<LabeledVolume> {
    let extents = volume.extents()?;
    let mut out = volume.clone();
    out.modalities.retain(|m| !m.name.starts_with("context_"));
    for (name, map) in CONTEXT_MODALITIES.iter().zip(&maps.maps) {
        if map.dims3()? != extents {
            return Err(VxError::ShapeMismatch {
                context: "distance map vs volume extents".into(),
                lhs: map.shape().to_vec(),
                rhs: extents.to_vec(),
            });
        }
        out.modalities.push(Modality {
            name: (*name).to_string(),
            data: map.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineOpts {
    pub window: usize,
    pub stride: usize,
    pub d_max_mm: f64,
}

impl Default for PipelineOpts {
    fn default() -> Self {
        PipelineOpts {
            window: 64,
            stride: 32,
            d_max_mm: crate::context::DEFAULT_DMAX_MM,
        }
    }
}

/// Single-network sliding-window inference over a whole volume.
pub fn run_single_stage(
    spec: &NetworkSpec,
    params: &NetworkParams<f32>,
    volume: &LabeledVolume,
    opts: &PipelineOpts,
) -> VxResult<ProbabilityVolume> {
    check_compatible(spec, params)?;
    let plan = SlidingWindowPlan::new(volume.extents()?, opts.window, opts.stride)?;
    let predictor = NetPredictor { spec, params };
    stitch_inference(&predictor, volume, &plan)
}

pub struct TwoStageOutput {
    pub stage1: ProbabilityVolume,
    pub initial_seg: IntGrid,
    pub maps: DistanceMapSet,
    pub stage2: ProbabilityVolume,
}

/// Checks that a parameter store actually carries the spec's layout before
/// any compute is spent.
pub fn check_compatible(spec: &NetworkSpec, params: &NetworkParams<f32>) -> VxResult<()> {
    for (name, shape, _) in spec.parameter_layout() {
        match params.get(&name) {
            Some(p) if p.value.shape() == shape.as_slice() => {}
            Some(p) => {
                return Err(VxError::Checkpoint(format!(
                    "parameter '{name}' has shape {:?}, spec requires {shape:?}",
                    p.value.shape()
                )))
            }
            None => {
                return Err(VxError::Checkpoint(format!(
                    "parameter '{name}' missing from checkpoint"
                )))
            }
        }
    }
    Ok(())
}

/// The full two-stage pipeline on one volume: stage-1 probabilities ->
/// initial segmentation -> per-tissue distance maps -> stage-2 with the
/// maps as a context stream.
pub fn run_two_stage(
    spec1: &NetworkSpec,
    params1: &NetworkParams<f32>,
    spec2: &NetworkSpec,
    params2: &NetworkParams<f32>,
    volume: &LabeledVolume,
    opts: &PipelineOpts,
) -> VxResult<TwoStageOutput> {
    check_compatible(spec1, params1)?;
    check_compatible(spec2, params2)?;
    let stage1 = run_single_stage(spec1, params1, volume, opts)?;
    let initial_seg = argmax_segmentation(&stage1);
    let maps = distance_maps(&initial_seg, volume.spacing_mm, opts.d_max_mm)?;
    let with_context = attach_context(volume, &maps)?;
    let stage2 = run_single_stage(spec2, params2, &with_context, opts)?;
    Ok(TwoStageOutput {
        stage1,
        initial_seg,
        maps,
        stage2,
    })
}
