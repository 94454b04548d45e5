//! Rough throughput numbers for picking desk-scale experiment settings.
//! Run: cargo run --release -p vxseg --example bench

use std::time::Instant;

use vxseg::net::{build_network, NetworkSpec};
use vxseg::train::{train, LossConfig, OptimConfig, OptimizerState, TrainSettings};
use vxseg::volume::{generate_phantom, Contrast};

fn time_config(levels: usize, base: usize, patch: usize, iters: u64) {
    let spec = NetworkSpec {
        levels,
        base_channels: base,
        num_branches: levels.min(3),
        ..NetworkSpec::fcn1()
    };
    let dataset = vec![generate_phantom(1, 64, 0.04, Contrast::Isointense).unwrap()];
    let mut params = build_network::<f32>(&spec, 1).unwrap();
    let optim_cfg = OptimConfig::default();
    let mut optim = OptimizerState::new(&params, optim_cfg).unwrap();
    let alphas = vec![1.0, 0.67, 0.33];
    let settings = TrainSettings {
        iterations: iters,
        patch_size: patch,
        loss: LossConfig {
            alphas: alphas[..spec.num_branches].to_vec(),
            lambda: 0.005,
        },
        optim: optim_cfg,
        seed: 1,
        ..TrainSettings::default()
    };
    let t0 = Instant::now();
    train(&spec, &mut params, &mut optim, &dataset, &settings).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "levels={levels} base={base} patch={patch}: {:.3} s/iter ({} params)",
        dt / iters as f64,
        spec.trainable_parameter_count()
    );
}

fn main() {
    vxseg::threads::init_thread_pool_from_env();
    time_config(2, 8, 24, 10);
    time_config(2, 8, 32, 10);
    time_config(3, 8, 32, 10);
    time_config(2, 12, 24, 10);
    time_config(3, 16, 32, 5);
}
