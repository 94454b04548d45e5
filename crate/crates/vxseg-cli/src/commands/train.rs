//! train: stage-1 or stage-2 training over a directory of native volumes.

use std::path::Path;

use vxseg::context::{argmax_segmentation, attach_context, distance_maps, PipelineOpts};
use vxseg::error::{VxError, VxResult};
use vxseg::net::build_network;
use vxseg::train::{
    load_checkpoint_partial, load_optimizer_state, train, OptimizerState,
};
use vxseg::volume::LabeledVolume;

use super::{load_dataset, load_network, spec_sidecar};
use crate::config::RunConfig;

pub struct TrainArgs<'a> {
    pub stage: u8,
    pub data: &'a Path,
    pub out: &'a Path,
    pub resume: Option<&'a Path>,
    pub init_from: Option<&'a Path>,
    pub init_filter: &'a str,
    pub stage1_ckpt: Option<&'a Path>,
}

pub fn run(cfg: &RunConfig, args: &TrainArgs) -> VxResult<()> {
    if !(args.stage == 1 || args.stage == 2) {
        return Err(VxError::InvalidArgument("stage must be 1 or 2".into()));
    }
    let spec = cfg.network_spec(args.stage)?;
    let mut dataset: Vec<LabeledVolume> = load_dataset(args.data)?
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    log::info!("loaded {} training volumes from {}", dataset.len(), args.data.display());

    // stage 2 derives its context stream from stage-1 predictions
    if args.stage == 2 {
        let stage1_path = match (args.stage1_ckpt, &cfg.stage1_checkpoint) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(s)) => s.into(),
            (None, None) => {
                return Err(VxError::Config(
                    "stage 2 needs a stage-1 checkpoint (--stage1-ckpt or config key \
                     stage1_checkpoint); train stage 1 first"
                        .into(),
                ))
            }
        };
        let (spec1, params1) = load_network(&stage1_path, cfg, 1)?;
        let opts = PipelineOpts {
            window: cfg.patch_size,
            stride: cfg.stride,
            d_max_mm: cfg.d_max_mm,
        };
        log::info!(
            "preparing context maps with stage-1 checkpoint {}",
            stage1_path.display()
        );
        dataset = dataset
            .iter()
            .map(|vol| {
                let probs = vxseg::context::run_single_stage(&spec1, &params1, vol, &opts)?;
                let seg = argmax_segmentation(&probs);
                let maps = distance_maps(&seg, vol.spacing_mm, cfg.d_max_mm)?;
                attach_context(vol, &maps)
            })
            .collect::<VxResult<Vec<_>>>()?;
    }

    let mut params = build_network::<f32>(&spec, cfg.seed)?;
    let mut optimizer = match args.resume {
        Some(ckpt) => {
            let report = load_checkpoint_partial(ckpt, &mut params, "*")?;
            if report.loaded_count() != params.len() {
                return Err(VxError::Checkpoint(format!(
                    "resume checkpoint {} matches only {}/{} tensors of the configured network",
                    ckpt.display(),
                    report.loaded_count(),
                    params.len()
                )));
            }
            let state = load_optimizer_state(ckpt, &params, cfg.optim())?;
            log::info!(
                "resumed from {} at iteration {}",
                ckpt.display(),
                state.iteration
            );
            state
        }
        None => OptimizerState::new(&params, cfg.optim())?,
    };

    if let Some(init) = args.init_from {
        if args.resume.is_some() {
            return Err(VxError::InvalidArgument(
                "--resume and --init-from are mutually exclusive".into(),
            ));
        }
        let report = load_checkpoint_partial(init, &mut params, args.init_filter)?;
        log::info!(
            "partial initialization from {} with filter '{}': {} tensors loaded",
            init.display(),
            args.init_filter,
            report.loaded_count()
        );
        for name in &report.loaded {
            log::info!("  loaded {name}");
        }
        for (name, reason) in &report.skipped {
            log::info!("  skipped {name}: {reason}");
        }
    }

    let settings = cfg.train_settings(args.stage, Some(args.out.to_path_buf()))?;
    let rows = train(&spec, &mut params, &mut optimizer, &dataset, &settings)?;
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        log::info!(
            "trained {} iterations: L_total {:.4} -> {:.4}",
            rows.len(),
            first.l_total,
            last.l_total
        );
    }

    // spec sidecars so later commands can rebuild the topology
    for entry in std::fs::read_dir(args.out)
        .map_err(|e| VxError::io(args.out.display().to_string(), e))?
        .filter_map(|e| e.ok())
    {
        let path = entry.path();
        if path.extension().is_some_and(|x| x == "ckpt") {
            spec.save(&spec_sidecar(&path))?;
        }
    }
    Ok(())
}
