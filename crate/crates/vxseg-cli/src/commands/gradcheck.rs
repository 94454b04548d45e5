//! gradcheck: finite-difference verification of the full network gradient
//! in f64 on a phantom patch.

use vxseg::error::{VxError, VxResult};
use vxseg::net::build_network;
use vxseg::tensor::{IntGrid, Tensor};
use vxseg::train::{gradcheck_network, GradCheckConfig};
use vxseg::volume::{crop, generate_phantom, normalize_grid};

use crate::config::RunConfig;

pub struct GradCheckArgs {
    pub extent: usize,
    pub step: f64,
    pub tolerance: f64,
    pub max_coords: Option<usize>,
}

pub fn run(cfg: &RunConfig, args: &GradCheckArgs) -> VxResult<bool> {
    let spec = cfg.network_spec(1)?;
    if args.extent % spec.spatial_divisor() != 0 {
        return Err(VxError::InvalidArgument(format!(
            "extent {} not divisible by 2^levels = {}",
            args.extent,
            spec.spatial_divisor()
        )));
    }
    let params = build_network::<f64>(&spec, cfg.seed)?;

    // a phantom crop as the test patch, normalized like training data
    let vol = generate_phantom(cfg.seed, args.extent.max(32), cfg.noise, cfg.contrast)?;
    let patch = crop(&vol, [0; 3], args.extent)?;
    let inputs: Vec<Tensor<f64>> = spec
        .streams
        .iter()
        .map(|s| {
            let grid = patch
                .modalities
                .iter()
                .find(|m| m.name == s.name)
                .expect("phantom carries t1/t2");
            let norm = normalize_grid(&grid.data);
            Tensor::new(
                vec![1, 1, args.extent, args.extent, args.extent],
                norm.data().iter().map(|&v| v as f64).collect(),
            )
        })
        .collect::<VxResult<Vec<_>>>()?;
    let labels = patch.labels.expect("phantom carries labels");
    let labels = IntGrid::new(
        vec![1, args.extent, args.extent, args.extent],
        labels.into_data(),
    )?;

    let check = GradCheckConfig {
        step: args.step,
        tolerance: args.tolerance,
        max_coords_per_tensor: args.max_coords,
    };
    let started = std::time::Instant::now();
    let report = gradcheck_network(
        &spec,
        &params,
        &inputs,
        &labels,
        &cfg.loss(spec.num_branches)?,
        &check,
    )?;
    println!("{report}");
    println!("elapsed: {:.1} s", started.elapsed().as_secs_f64());
    Ok(report.pass())
}
