//! The training loop: sample -> augment -> normalize -> forward -> loss ->
//! backward -> SGD step, with periodic checkpoints and a loss-curve record.
//! Fully deterministic for a fixed seed.

use std::path::PathBuf;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::net::{forward, ForwardOpts, NetworkParams, NetworkSpec};
use crate::tensor::{IntGrid, Tensor};
use crate::train::checkpoint::save_checkpoint;
use crate::train::loss::{multiscale_loss_nodes, LossConfig};
use crate::train::optim::{OptimConfig, OptimizerState};
use crate::volume::{normalize_grid, sample_patch, Augment, CroppedPatch, LabeledVolume};

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub iterations: u64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub checkpoint_every: u64,
    pub seed: u64,
    /// When set, checkpoints and the loss CSV are written here.
    pub out_dir: Option<PathBuf>,
    /// Tag used in output file names (1 or 2).
    pub stage: u8,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            iterations: 2000,
            batch_size: 1,
            patch_size: 64,
            loss: LossConfig::default(),
            optim: OptimConfig::default(),
            checkpoint_every: 500,
            seed: 0,
            out_dir: None,
            stage: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub iteration: u64,
    pub lr: f64,
    pub l_cls: f64,
    pub reg: f64,
    pub l_total: f64,
}

/// Loss curve CSV: one row per iteration.
pub fn loss_rows_to_csv(rows: &[LossRow]) -> String {
    let mut out = String::from("iteration,lr,l_cls,reg,l_total\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.lr, r.l_cls, r.reg, r.l_total
        ));
    }
    out
}

/// Grids feeding one network stream: an exact name match for single-channel
/// streams, otherwise the "{stream}_*" prefixed modalities in volume order.
pub fn stream_grids<'a>(
    patch: &'a CroppedPatch,
    stream_name: &str,
    channels: usize,
) -> VxResult<Vec<&'a Tensor<f32>>> {
    if channels == 1 {
        if let Some(m) = patch.modalities.iter().find(|m| m.name == stream_name) {
            return Ok(vec![&m.data]);
        }
    }
    let prefix = format!("{stream_name}_");
    let grids: Vec<&Tensor<f32>> = patch
        .modalities
        .iter()
        .filter(|m| m.name.starts_with(&prefix))
        .map(|m| &m.data)
        .collect();
    if grids.len() != channels {
        return Err(VxError::InvalidArgument(format!(
            "stream '{stream_name}' needs {channels} modality grid(s); found {}",
            grids.len()
        )));
    }
    Ok(grids)
}

/// Stacks a batch of patches into one tensor per stream, z-normalizing
/// every grid except those of context streams (distance maps already live
/// on a normalized [0, 1] scale).
pub fn assemble_streams<T: Scalar>(
    spec: &NetworkSpec,
    patches: &[CroppedPatch],
) -> VxResult<Vec<Tensor<T>>> {
    let n = patches.len();
    let mut out = Vec::with_capacity(spec.streams.len());
    for stream in &spec.streams {
        let normalize = !stream.name.starts_with("context");
        let mut data: Vec<T> = Vec::new();
        let mut extents = None;
        for patch in patches {
            let grids = stream_grids(patch, &stream.name, stream.in_channels)?;
            for grid in grids {
                let e = grid.dims3()?;
                if *extents.get_or_insert(e) != e {
                    return Err(VxError::InvalidArgument(
                        "patches in one batch must share extents".into(),
                    ));
                }
                if normalize {
                    let ng = normalize_grid(grid);
                    data.extend(ng.data().iter().map(|&v| T::cast_from(v as f64)));
                } else {
                    data.extend(grid.data().iter().map(|&v| T::cast_from(v as f64)));
                }
            }
        }
        let [d, h, w] = extents.ok_or_else(|| {
            VxError::InvalidArgument("assemble_streams needs at least one patch".into())
        })?;
        out.push(Tensor::new(vec![n, stream.in_channels, d, h, w], data)?);
    }
    Ok(out)
}

fn batch_labels(patches: &[CroppedPatch]) -> VxResult<IntGrid> {
    let first = patches[0]
        .labels
        .as_ref()
        .ok_or_else(|| VxError::Train("training volumes need labels".into()))?;
    let [d, h, w] = first.dims3()?;
    let mut data = Vec::with_capacity(patches.len() * d * h * w);
    for p in patches {
        let l = p
            .labels
            .as_ref()
            .ok_or_else(|| VxError::Train("training volumes need labels".into()))?;
        data.extend_from_slice(l.data());
    }
    IntGrid::new(vec![patches.len(), d, h, w], data)
}

/// Trains `params` in place; returns the loss curve. Resuming continues the
/// iteration counter from `optimizer`.
pub fn train(
    spec: &NetworkSpec,
    params: &mut NetworkParams<f32>,
    optimizer: &mut OptimizerState<f32>,
    dataset: &[LabeledVolume],
    settings: &TrainSettings,
) -> VxResult<Vec<LossRow>> {
    if dataset.is_empty() {
        return Err(VxError::Train("dataset is empty".into()));
    }
    settings.loss.validate()?;
    if settings.loss.alphas.len() < spec.num_branches {
        return Err(VxError::Config(format!(
            "{} branches but only {} loss alphas",
            spec.num_branches,
            settings.loss.alphas.len()
        )));
    }
    if settings.patch_size % spec.spatial_divisor() != 0 {
        return Err(VxError::Config(format!(
            "patch size {} not divisible by 2^levels = {}",
            settings.patch_size,
            spec.spatial_divisor()
        )));
    }
    for vol in dataset {
        vol.validate()?;
    }
    if let Some(dir) = &settings.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| VxError::io(dir.display().to_string(), e))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut rows = Vec::with_capacity(settings.iterations as usize);
    let start = optimizer.iteration;

    for step in 0..settings.iterations {
        let iteration = start + step;
        // draw (volume, augmentation, corner) per batch item, in order
        let mut patches = Vec::with_capacity(settings.batch_size);
        for _ in 0..settings.batch_size {
            let vol = &dataset[rng.random_range(0..dataset.len())];
            let aug = Augment::from_index(rng.random_range(0..8usize));
            let patch = sample_patch(vol, settings.patch_size, &mut rng)?;
            patches.push(aug.apply(&patch)?);
        }
        let inputs = assemble_streams::<f32>(spec, &patches)?;
        let labels = batch_labels(&patches)?;

        let mut pass = forward(spec, params, &inputs, &ForwardOpts::train())?;
        let reg_nodes: Vec<_> = pass
            .param_nodes
            .iter()
            .filter(|&&(idx, _)| params.by_index(idx).regularized)
            .map(|&(_, node)| node)
            .collect();
        let nodes = multiscale_loss_nodes(
            &mut pass.graph,
            &pass.branch_logits,
            &labels,
            &settings.loss,
            &reg_nodes,
        )?;
        let l_total = pass.graph.value(nodes.total).item()?.cast_f64();
        let l_cls = pass.graph.value(nodes.cls).item()?.cast_f64();
        let reg = pass.graph.value(nodes.reg).item()?.cast_f64();
        let lr = optimizer.lr();
        if !l_total.is_finite() {
            return Err(VxError::Train(format!(
                "non-finite loss at iteration {iteration}: lr {lr}, l_cls {l_cls}, reg {reg}, l_total {l_total}"
            )));
        }

        pass.graph.backward(nodes.total)?;
        params.set_grads(pass.graph.param_grads());
        pass.apply_bn_updates(params);
        optimizer.step(params);

        rows.push(LossRow {
            iteration,
            lr,
            l_cls,
            reg,
            l_total,
        });

        if let Some(dir) = &settings.out_dir {
            let done = step + 1 == settings.iterations;
            if (iteration + 1) % settings.checkpoint_every == 0 || done {
                let name = if done {
                    format!("stage{}_final.ckpt", settings.stage)
                } else {
                    format!("stage{}_{:06}.ckpt", settings.stage, iteration + 1)
                };
                save_checkpoint(params, Some(optimizer), &dir.join(name))?;
            }
        }
    }

    if let Some(dir) = &settings.out_dir {
        let path = dir.join(format!("loss_stage{}.csv", settings.stage));
        std::fs::write(&path, loss_rows_to_csv(&rows))
            .map_err(|e| VxError::io(path.display().to_string(), e))?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::build_network;
    use crate::volume::{generate_phantom, Contrast};

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            levels: 2,
            base_channels: 2,
            num_branches: 2,
            ..NetworkSpec::fcn1()
        }
    }

    fn tiny_settings(iters: u64) -> TrainSettings {
        TrainSettings {
            iterations: iters,
            patch_size: 16,
            loss: LossConfig {
                alphas: vec![1.0, 0.67],
                lambda: 0.005,
            },
            seed: 5,
            ..TrainSettings::default()
        }
    }

    #[test]
    fn fixed_seed_reproduces_loss_values() {
        let spec = tiny_spec();
        let dataset = vec![generate_phantom(1, 32, 0.05, Contrast::Normal).unwrap()];
        let run = || {
            let mut params = build_network::<f32>(&spec, 7).unwrap();
            let mut opt = OptimizerState::new(&params, OptimConfig::default()).unwrap();
            train(&spec, &mut params, &mut opt, &dataset, &tiny_settings(2)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn strong_regularization_shrinks_weights() {
        let spec = tiny_spec();
        let dataset = vec![generate_phantom(2, 32, 0.05, Contrast::Normal).unwrap()];
        let run = |lambda: f64| {
            let mut params = build_network::<f32>(&spec, 7).unwrap();
            let mut opt = OptimizerState::new(
                &params,
                OptimConfig {
                    weight_decay: 0.0,
                    ..OptimConfig::default()
                },
            )
            .unwrap();
            let mut settings = tiny_settings(40);
            settings.loss.lambda = lambda;
            train(&spec, &mut params, &mut opt, &dataset, &settings).unwrap();
            params.regularized_sq_norm()
        };
        let big = run(10.0);
        let none = run(0.0);
        assert!(big < none, "lambda 10 => {big}, lambda 0 => {none}");
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let spec = tiny_spec();
        let mut params = build_network::<f32>(&spec, 7).unwrap();
        let mut opt = OptimizerState::new(&params, OptimConfig::default()).unwrap();
        assert!(train(&spec, &mut params, &mut opt, &[], &tiny_settings(1)).is_err());
    }

    /// With alpha_m = 0 for m > 0 the classification term must equal the
    /// single-branch loss of the same forward pass.
    #[test]
    fn zero_alphas_reduce_to_single_scale() {
        let spec = tiny_spec();
        let dataset = vec![generate_phantom(3, 32, 0.05, Contrast::Normal).unwrap()];
        let run = |alphas: Vec<f64>, branches: usize| {
            let mut spec = spec.clone();
            spec.num_branches = branches;
            let mut params = build_network::<f32>(&spec, 7).unwrap();
            let mut opt = OptimizerState::new(&params, OptimConfig::default()).unwrap();
            let mut settings = tiny_settings(3);
            settings.loss.alphas = alphas;
            train(&spec, &mut params, &mut opt, &dataset, &settings).unwrap()
        };
        let multi = run(vec![1.0, 0.0], 2);
        let single = run(vec![1.0], 1);
        for (a, b) in multi.iter().zip(&single) {
            assert!((a.l_cls - b.l_cls).abs() < 1e-6, "{} vs {}", a.l_cls, b.l_cls);
        }
    }
}
