//! infer: one- or two-stage sliding-window inference plus morphology.

use std::path::Path;

use vxseg::context::{
    argmax_segmentation, run_single_stage, run_two_stage, PipelineOpts, ProbabilityVolume,
    CONTEXT_MODALITIES,
};
use vxseg::error::{VxError, VxResult};
use vxseg::infer::{morph_cleanup, SlidingWindowPlan};
use vxseg::volume::{read_volume, write_volume, LabeledVolume, Modality};

use super::load_network;
use crate::config::RunConfig;

pub struct InferArgs<'a> {
    pub ckpt1: &'a Path,
    pub ckpt2: Option<&'a Path>,
    pub input: &'a Path,
    pub out: &'a Path,
    pub save_probs: bool,
    pub save_maps: bool,
}

fn probs_to_volume(pv: &ProbabilityVolume) -> LabeledVolume {
    let names = ["prob_bg", "prob_csf", "prob_gm", "prob_wm"];
    let [d, h, w] = pv.extents();
    let vox = d * h * w;
    let modalities = names
        .iter()
        .enumerate()
        .map(|(c, name)| Modality {
            name: (*name).to_string(),
            data: vxseg::Tensor::new(
                vec![d, h, w],
                pv.probs.data()[c * vox..(c + 1) * vox].to_vec(),
            )
            .expect("extent product matches"),
        })
        .collect();
    LabeledVolume {
        modalities,
        labels: None,
        spacing_mm: pv.spacing_mm,
    }
}

pub fn run(cfg: &RunConfig, args: &InferArgs) -> VxResult<()> {
    let volume = read_volume(args.input)?;
    let stem = args
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("volume")
        .to_string();
    std::fs::create_dir_all(args.out)
        .map_err(|e| VxError::io(args.out.display().to_string(), e))?;

    let opts = PipelineOpts {
        window: cfg.patch_size,
        stride: cfg.stride,
        d_max_mm: cfg.d_max_mm,
    };
    let plan = SlidingWindowPlan::new(volume.extents()?, opts.window, opts.stride)?;
    log::info!(
        "inference over {} windows of {}^3, stride {}",
        plan.window_count(),
        opts.window,
        opts.stride
    );

    let (spec1, params1) = load_network(args.ckpt1, cfg, 1)?;
    let (final_probs, maps) = match args.ckpt2 {
        Some(ckpt2) => {
            let (spec2, params2) = load_network(ckpt2, cfg, 2)?;
            let out = run_two_stage(&spec1, &params1, &spec2, &params2, &volume, &opts)?;
            (out.stage2, Some(out.maps))
        }
        None => (run_single_stage(&spec1, &params1, &volume, &opts)?, None),
    };

    let seg = morph_cleanup(&argmax_segmentation(&final_probs), cfg.morph_min_voxels);
    let seg_volume = LabeledVolume {
        modalities: Vec::new(),
        labels: Some(seg),
        spacing_mm: volume.spacing_mm,
    };
    let seg_path = args.out.join(format!("{stem}_seg.json"));
    write_volume(&seg_volume, &seg_path)?;
    log::info!("wrote {}", seg_path.display());

    if args.save_probs {
        let path = args.out.join(format!("{stem}_probs.json"));
        write_volume(&probs_to_volume(&final_probs), &path)?;
        log::info!("wrote {}", path.display());
    }
    if args.save_maps {
        match maps {
            Some(maps) => {
                let modalities = CONTEXT_MODALITIES
                    .iter()
                    .zip(&maps.maps)
                    .map(|(name, m)| Modality {
                        name: (*name).to_string(),
                        data: m.clone(),
                    })
                    .collect();
                let path = args.out.join(format!("{stem}_maps.json"));
                write_volume(
                    &LabeledVolume {
                        modalities,
                        labels: None,
                        spacing_mm: volume.spacing_mm,
                    },
                    &path,
                )?;
                log::info!("wrote {}", path.display());
            }
            None => log::warn!("--save-maps ignored: single-stage run computes no distance maps"),
        }
    }
    Ok(())
}
