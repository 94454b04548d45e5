//! Desk-scale calibration: trains the stage-1 network on isointense
//! phantoms (8 train / 4 test, extent 64) and reports per-tissue Dice on
//! both splits at several iteration budgets, for a small grid of settings.
//! Run: cargo run --release -p vxseg --example calibrate

use std::time::Instant;

use vxseg::context::{argmax_segmentation, PipelineOpts};
use vxseg::infer::{evaluate, morph_cleanup, MhdMode};
use vxseg::net::{build_network, NetworkSpec};
use vxseg::train::{train, LossConfig, OptimConfig, OptimizerState, TrainSettings};
use vxseg::volume::{generate_phantom, Contrast, LabeledVolume};

const EXTENT: usize = 64;
const NOISE: f64 = 0.03;
const MORPH_MIN: usize = 64;

fn dataset(seed_base: u64, count: usize) -> Vec<LabeledVolume> {
    (0..count)
        .map(|i| generate_phantom(seed_base + i as u64, EXTENT, NOISE, Contrast::Isointense).unwrap())
        .collect()
}

/// (doc_csf, doc_gm, doc_wm, asd_wm)
fn docs(
    spec: &NetworkSpec,
    params: &vxseg::net::NetworkParams<f32>,
    set: &[LabeledVolume],
    patch: usize,
) -> [f64; 4] {
    let opts = PipelineOpts {
        window: patch,
        stride: patch / 2,
        d_max_mm: 20.0,
    };
    let mut out = [0.0f64; 4];
    for vol in set {
        let probs = vxseg::context::run_single_stage(spec, params, vol, &opts).unwrap();
        let seg = morph_cleanup(&argmax_segmentation(&probs), MORPH_MIN);
        let report = evaluate(
            &seg,
            vol.labels.as_ref().unwrap(),
            vol.spacing_mm,
            MhdMode::default(),
        )
        .unwrap();
        for (i, row) in report.rows.iter().enumerate() {
            out[i] += row.doc.clone().unwrap();
        }
        out[3] += report.rows[2].asd_mm.clone().unwrap_or(f64::NAN);
    }
    out.map(|d| d / set.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    tag: &str,
    base: usize,
    patch: usize,
    batch: usize,
    halve: u64,
    checkpoints: &[u64],
    train_set: &[LabeledVolume],
    test_set: &[LabeledVolume],
) {
    let spec = NetworkSpec {
        levels: 2,
        base_channels: base,
        num_branches: 2,
        ..NetworkSpec::fcn1()
    };
    let optim_cfg = OptimConfig {
        base_lr: 3e-3,
        lr_halving_period: halve,
        ..OptimConfig::default()
    };
    let mut params = build_network::<f32>(&spec, 77).unwrap();
    let mut optim = OptimizerState::new(&params, optim_cfg).unwrap();
    let mut settings = TrainSettings {
        iterations: 0,
        patch_size: patch,
        batch_size: batch,
        loss: LossConfig {
            alphas: vec![1.0, 0.67],
            lambda: 0.005,
        },
        optim: optim_cfg,
        seed: 7,
        ..TrainSettings::default()
    };
    let t0 = Instant::now();
    let mut done = 0u64;
    for &target in checkpoints {
        settings.iterations = target - done;
        let rows = train(&spec, &mut params, &mut optim, train_set, &settings).unwrap();
        done = target;
        let tail: f64 = rows.iter().rev().take(20).map(|r| r.l_cls).sum::<f64>()
            / 20.0f64.min(rows.len() as f64);
        let te = docs(&spec, &params, test_set, patch);
        let tr = docs(&spec, &params, &train_set[..2], patch);
        println!(
            "[{tag}] iters={done} l_cls={tail:.4} test csf={:.4} gm={:.4} wm={:.4} asd_wm={:.3} | train gm={:.4} wm={:.4} ({:.0} s)",
            te[0], te[1], te[2], te[3], tr[1], tr[2],
            t0.elapsed().as_secs_f64()
        );
    }
}

fn main() {
    vxseg::threads::init_thread_pool_from_env();
    let train_set = dataset(100, 8);
    let test_set = dataset(200, 4);
    sweep("b8 p24 bs1 h600", 8, 24, 1, 600, &[800, 1400, 2000], &train_set, &test_set);
    sweep("b12 p24 bs1 h600", 12, 24, 1, 600, &[800, 1400, 2000], &train_set, &test_set);
    sweep("b8 p24 bs2 h400", 8, 24, 2, 400, &[600, 1000, 1400], &train_set, &test_set);
}
