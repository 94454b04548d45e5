//! Acceptance suite: one test per shipping criterion, each printing a
//! single PASS line with its measured numbers.
//!
//!   cargo test -p vxseg-cli --test acceptance -- --nocapture
//!
//! The desk-scale experiments (criteria 4 and 5) train real networks on
//! synthetic isointense phantoms; their settings were calibrated once and
//! are pinned here.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use vxseg::context::{
    argmax_segmentation, attach_context, distance_maps, run_single_stage, run_two_stage,
    PipelineOpts,
};
use vxseg::infer::{
    asd, dice, evaluate, mhd, morph_cleanup, stitch_inference, Mask, MhdMode, SlidingWindowPlan,
    WindowPredictor,
};
use vxseg::net::{build_network, NetworkParams, NetworkSpec};
use vxseg::oracles;
use vxseg::tensor::{IntGrid, Tensor};
use vxseg::train::{
    gradcheck_network, load_checkpoint_partial, lr_at, multiscale_loss_values, save_checkpoint,
    train, GradCheckConfig, LossConfig, OptimConfig, OptimizerState, TrainSettings,
};
use vxseg::volume::{crop, generate_phantom, normalize_grid, Contrast, LabeledVolume};

// ---------------------------------------------------------------- shared

const PHANTOM_EXTENT: usize = 64;
const PHANTOM_NOISE: f64 = 0.04;
const TRAIN_SEEDS: u64 = 100; // train volumes 100..108
const TEST_SEEDS: u64 = 200; // test volumes 200..204
const MORPH_MIN_VOXELS: usize = 64;

// desk-scale network + schedule, calibrated on this generator
const DESK_LEVELS: usize = 2;
const DESK_BASE: usize = 8;
const DESK_PATCH: usize = 32;
const DESK_LR: f64 = 3e-3;
const DESK_LR_HALVING: u64 = 400;
const C4_ITERS: u64 = 1600;
const C5_ITERS: u64 = 800;
const C5_STRIDE: usize = 16;

fn desk_spec(stage: u8) -> NetworkSpec {
    let mut spec = if stage == 2 {
        NetworkSpec::fcn2()
    } else {
        NetworkSpec::fcn1()
    };
    spec.levels = DESK_LEVELS;
    spec.base_channels = DESK_BASE;
    spec.num_branches = DESK_LEVELS.min(3);
    spec
}

fn desk_loss(spec: &NetworkSpec) -> LossConfig {
    let alphas = [1.0, 0.67, 0.33];
    LossConfig {
        alphas: alphas[..spec.num_branches].to_vec(),
        lambda: 0.005,
    }
}

fn desk_optim() -> OptimConfig {
    OptimConfig {
        base_lr: DESK_LR,
        lr_halving_period: DESK_LR_HALVING,
        ..OptimConfig::default()
    }
}

fn phantom_set(seed_base: u64, count: usize) -> Vec<LabeledVolume> {
    (0..count)
        .map(|i| {
            generate_phantom(
                seed_base + i as u64,
                PHANTOM_EXTENT,
                PHANTOM_NOISE,
                Contrast::Isointense,
            )
            .unwrap()
        })
        .collect()
}

fn train_stage(
    spec: &NetworkSpec,
    dataset: &[LabeledVolume],
    iters: u64,
    seed: u64,
) -> NetworkParams<f32> {
    let mut params = build_network::<f32>(spec, seed).unwrap();
    let mut optim = OptimizerState::new(&params, desk_optim()).unwrap();
    let settings = TrainSettings {
        iterations: iters,
        patch_size: DESK_PATCH,
        loss: desk_loss(spec),
        optim: desk_optim(),
        seed,
        ..TrainSettings::default()
    };
    train(spec, &mut params, &mut optim, dataset, &settings).unwrap();
    params
}

/// Mean per-tissue Dice of single-stage inference over a test set.
fn mean_docs_single(
    spec: &NetworkSpec,
    params: &NetworkParams<f32>,
    test: &[LabeledVolume],
    stride: usize,
) -> [f64; 3] {
    let opts = PipelineOpts {
        window: DESK_PATCH,
        stride,
        d_max_mm: 20.0,
    };
    let mut docs = [0.0f64; 3];
    for vol in test {
        let probs = run_single_stage(spec, params, vol, &opts).unwrap();
        let seg = morph_cleanup(&argmax_segmentation(&probs), MORPH_MIN_VOXELS);
        let report = evaluate(
            &seg,
            vol.labels.as_ref().unwrap(),
            vol.spacing_mm,
            MhdMode::default(),
        )
        .unwrap();
        for (i, row) in report.rows.iter().enumerate() {
            docs[i] += row.doc.clone().unwrap();
        }
    }
    docs.map(|d| d / test.len() as f64)
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

// ------------------------------------------------------------ criterion 1

/// Full stage-1 network (levels 2, base 4) + multi-scale loss on a 16^3
/// two-modality patch in f64: every trainable parameter's gradient matches
/// central finite differences (h = 1e-4) within relative 1e-4, in under
/// ten minutes.
#[test]
fn c1_gradient_correctness() {
    let started = Instant::now();
    let spec = NetworkSpec {
        levels: 2,
        base_channels: 4,
        num_branches: 2,
        ..NetworkSpec::fcn1()
    };
    let params = build_network::<f64>(&spec, 11).unwrap();
    let vol = generate_phantom(21, 32, PHANTOM_NOISE, Contrast::Isointense).unwrap();
    let patch = crop(&vol, [8, 8, 8], 16).unwrap();
    let inputs: Vec<Tensor<f64>> = patch
        .modalities
        .iter()
        .map(|m| {
            let norm = normalize_grid(&m.data);
            Tensor::new(
                vec![1, 1, 16, 16, 16],
                norm.data().iter().map(|&v| v as f64).collect(),
            )
            .unwrap()
        })
        .collect();
    let labels = IntGrid::new(vec![1, 16, 16, 16], patch.labels.unwrap().into_data()).unwrap();

    let report = gradcheck_network(
        &spec,
        &params,
        &inputs,
        &labels,
        &LossConfig {
            alphas: vec![1.0, 0.67],
            lambda: 0.005,
        },
        &GradCheckConfig {
            step: 1e-4,
            tolerance: 1e-4,
            max_coords_per_tensor: None,
        },
    )
    .unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let total = report.checked_coords() + report.skipped_coords();
    assert_eq!(
        total,
        spec.trainable_parameter_count(),
        "every trainable coordinate must be visited"
    );
    assert!(
        report.skipped_coords() < total / 10,
        "too many coordinates at non-differentiable points: {} of {total}",
        report.skipped_coords()
    );
    assert!(report.pass(), "{report}");
    assert!(elapsed < 600.0, "gradcheck took {elapsed:.0} s (budget 600)");
    println!(
        "ACCEPTANCE C1 gradient-correctness: PASS (max rel err {:.3e} over {} coords, {} skipped at kinks, {:.0} s)",
        report.max_rel_err(),
        report.checked_coords(),
        report.skipped_coords(),
        elapsed
    );
}

// ------------------------------------------------------------ criterion 2

/// Every kernel matches its brute-force oracle on >= 50 random small
/// instances at the module tolerances.
#[test]
fn c2_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cases = 50usize;

    // conv3d, f64 exact-ish and f32 at 1e-5
    for i in 0..cases {
        let (n, cin, cout) = (
            rng.random_range(1..3usize),
            rng.random_range(1..4usize),
            rng.random_range(1..4usize),
        );
        let dims = [
            rng.random_range(1..6usize),
            rng.random_range(1..6usize),
            rng.random_range(1..6usize),
        ];
        let x = rand_tensor(&[n, cin, dims[0], dims[1], dims[2]], &mut rng);
        let w = rand_tensor(&[cout, cin, 3, 3, 3], &mut rng);
        let b = rand_tensor(&[cout], &mut rng);
        let fast = vxseg::ops::conv3d_forward(&x, &w, &b).unwrap();
        let slow = oracles::conv3d_direct(&x, &w, &b);
        assert!(fast.max_abs_diff(&slow) < 1e-12, "conv3d f64 case {i}");
        let (xf, wf, bf) = (x.cast::<f32>(), w.cast::<f32>(), b.cast::<f32>());
        let fast32 = vxseg::ops::conv3d_forward(&xf, &wf, &bf).unwrap();
        let slow32 = oracles::conv3d_direct(&xf, &wf, &bf);
        assert!(fast32.max_abs_diff(&slow32) < 1e-5, "conv3d f32 case {i}");
    }

    // maxpool: exact equality against blockwise max
    for _ in 0..cases {
        let shape = [
            rng.random_range(1..3usize),
            rng.random_range(1..4usize),
            rng.random_range(1..4usize) * 2,
            rng.random_range(1..4usize) * 2,
            rng.random_range(1..4usize) * 2,
        ];
        let x = rand_tensor(&shape, &mut rng);
        let (fast, _) = vxseg::ops::maxpool3d_forward(&x).unwrap();
        assert_eq!(fast.data(), oracles::maxpool3d_blockmax(&x).data());
    }

    // upconv
    for i in 0..cases {
        let (n, cin, cout) = (
            rng.random_range(1..3usize),
            rng.random_range(1..3usize),
            rng.random_range(1..3usize),
        );
        let dims = [
            rng.random_range(1..4usize),
            rng.random_range(1..4usize),
            rng.random_range(1..4usize),
        ];
        let x = rand_tensor(&[n, cin, dims[0], dims[1], dims[2]], &mut rng);
        let w = rand_tensor(&[cin, cout, 2, 2, 2], &mut rng);
        let fast = vxseg::ops::upconv3d_forward(&x, &w).unwrap();
        let slow = oracles::upconv3d_scatter(&x, &w);
        assert!(fast.max_abs_diff(&slow) < 1e-12, "upconv case {i}");
    }

    // batchnorm (train) against the two-pass reference
    for i in 0..cases {
        let (n, c) = (rng.random_range(1..3usize), rng.random_range(1..4usize));
        let dims = [
            rng.random_range(1..5usize) * 2,
            rng.random_range(1..5usize),
            rng.random_range(1..5usize),
        ];
        let x = rand_tensor(&[n, c, dims[0], dims[1], dims[2]], &mut rng);
        let gamma = Tensor::from_fn(&[c], |_| rng.random_range(0.5..1.5));
        let beta = Tensor::from_fn(&[c], |_| rng.random_range(-0.5..0.5));
        let (fast, _, _, _) = vxseg::ops::batchnorm3d_train(&x, &gamma, &beta, 1e-5).unwrap();
        let slow = oracles::batchnorm3d_twopass(&x, &gamma, &beta, 1e-5);
        assert!(fast.max_abs_diff(&slow) < 1e-12, "batchnorm case {i}");
    }

    // cross-entropy against the scalar loop
    for i in 0..cases {
        let dims = [
            rng.random_range(1..3usize),
            rng.random_range(1..3usize),
            rng.random_range(1..3usize),
        ];
        let logits = rand_tensor(&[1, 4, dims[0], dims[1], dims[2]], &mut rng);
        let probs = vxseg::ops::softmax_channels_forward(&logits).unwrap();
        let vox = dims.iter().product::<usize>();
        let labels = IntGrid::new(
            vec![1, dims[0], dims[1], dims[2]],
            (0..vox).map(|_| rng.random_range(0..4u8)).collect(),
        )
        .unwrap();
        let fast = vxseg::ops::cross_entropy_mean_forward(&probs, &labels).unwrap();
        let slow = oracles::cross_entropy_scalar_loop(&probs, &labels);
        assert!((fast - slow).abs() < 1e-12, "cross-entropy case {i}");
    }

    // multi-scale loss against the from-the-definitions oracle
    let spec = NetworkSpec {
        levels: 2,
        base_channels: 2,
        num_branches: 2,
        ..NetworkSpec::fcn1()
    };
    let params = build_network::<f64>(&spec, 5).unwrap();
    let reg_weights: Vec<&Tensor<f64>> = params
        .iter()
        .filter(|p| p.regularized)
        .map(|p| &p.value)
        .collect();
    for i in 0..cases {
        let side = rng.random_range(1..3usize) * 4;
        let labels = IntGrid::new(
            vec![side, side, side],
            (0..side * side * side)
                .map(|_| rng.random_range(0..4u8))
                .collect(),
        )
        .unwrap();
        let logits: Vec<Tensor<f64>> = (0..2)
            .map(|m| rand_tensor(&[1, 4, side >> m, side >> m, side >> m], &mut rng))
            .collect();
        let cfg = LossConfig {
            alphas: vec![1.0, 0.67],
            lambda: 0.005,
        };
        let (total, cls, reg) = multiscale_loss_values(&logits, &labels, &cfg, &params).unwrap();
        let (o_total, o_cls, o_reg) =
            oracles::multiscale_loss_direct(&logits, &labels, &cfg.alphas, cfg.lambda, &reg_weights);
        assert!((cls - o_cls).abs() / o_cls.abs().max(1.0) < 1e-5, "loss case {i}");
        assert!((reg - o_reg).abs() / o_reg.abs().max(1e-9) < 1e-5, "reg case {i}");
        assert!((total - o_total).abs() / o_total.abs().max(1.0) < 1e-5);
    }

    // exact distance transform against all-pairs, through the map pipeline
    for i in 0..cases {
        let extents = [
            rng.random_range(1..8usize),
            rng.random_range(1..8usize),
            rng.random_range(1..8usize),
        ];
        let n = extents.iter().product::<usize>();
        let seg = IntGrid::new(
            extents.to_vec(),
            (0..n).map(|_| rng.random_range(0..4u8)).collect(),
        )
        .unwrap();
        let maps = distance_maps(&seg, [1.0; 3], 20.0).unwrap();
        for (label, map) in (1u8..=3).zip(&maps.maps) {
            let mask: Vec<bool> = seg.data().iter().map(|&v| v == label).collect();
            if !mask.iter().any(|&m| m) {
                assert!(map.data().iter().all(|&v| v == 1.0));
                continue;
            }
            let brute = oracles::edt_all_pairs(&mask, extents, [1.0; 3]);
            for (&fast, &slow) in map.data().iter().zip(&brute) {
                let expected = (slow.min(20.0) / 20.0) as f32;
                assert_eq!(fast, expected, "edt case {i} label {label}");
            }
        }
    }

    // dice / asd / mhd against all-pairs on random 6^3 masks
    for i in 0..cases {
        let extents = [6usize, 6, 6];
        let n = 216;
        let mut a: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let mut b: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        a[0] = true;
        b[n - 1] = true;
        let ma = Mask {
            extents,
            data: a.clone(),
        };
        let mb = Mask {
            extents,
            data: b.clone(),
        };
        assert_eq!(
            dice(&ma, &mb).unwrap(),
            oracles::dice_counts(&a, &b),
            "dice case {i}"
        );
        let fast_asd = asd(&ma, &mb, [1.0; 3]).unwrap();
        let slow_asd = oracles::asd_brute(&a, &b, extents, [1.0; 3]);
        assert!((fast_asd - slow_asd).abs() < 1e-9, "asd case {i}");
        let fast_mhd = mhd(&ma, &mb, [1.0; 3], MhdMode::Percentile(95.0)).unwrap();
        let slow_mhd = oracles::mhd_brute(&a, &b, extents, [1.0; 3], 95.0);
        assert_eq!(fast_mhd, slow_mhd, "mhd case {i}");
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "oracle suite took {elapsed:.0} s (budget 300)");
    println!(
        "ACCEPTANCE C2 oracle-equivalence: PASS ({cases} cases per op across 9 op families, {elapsed:.0} s)"
    );
}

// ------------------------------------------------------------ criterion 3

/// Closed-form anchors: uniform logits give L_cls = 2 ln 4 under the
/// published branch weights, and the step schedule hits its published
/// values exactly.
#[test]
fn c3_loss_arithmetic_anchors() {
    let labels = IntGrid::new(vec![8, 8, 8], vec![2; 512]).unwrap();
    let logits: Vec<Tensor<f64>> = (0..3)
        .map(|m| Tensor::full(&[1, 4, 8 >> m, 8 >> m, 8 >> m], 0.0))
        .collect();
    let cfg = LossConfig {
        alphas: vec![1.0, 0.67, 0.33],
        lambda: 0.0,
    };
    let (_, cls, _) =
        multiscale_loss_values(&logits, &labels, &cfg, &NetworkParams::<f64>::new()).unwrap();
    let expected = 2.0 * 4.0f64.ln();
    assert!(
        (cls - expected).abs() < 1e-6,
        "L_cls {cls} vs 2 ln 4 = {expected}"
    );

    assert_eq!(lr_at(0, 1e-3, 3000), 1e-3);
    assert_eq!(lr_at(3000, 1e-3, 3000), 5e-4);
    assert_eq!(lr_at(9000, 1e-3, 3000), 1.25e-4);

    println!(
        "ACCEPTANCE C3 loss-arithmetic-anchors: PASS (L_cls = {cls:.10} vs 2 ln 4 = {expected:.10}; lr(0), lr(3000), lr(9000) exact)"
    );
}

// ------------------------------------------------------------ criterion 4

/// Desk-scale learning: stage-1 network on isointense extent-64 phantoms
/// (8 train / 4 test, <= 2000 iterations) reaches mean test Dice >= 0.90
/// for each tissue after morphology, within the runtime budget.
#[test]
fn c4_desk_scale_learning() {
    let started = Instant::now();
    assert!(C4_ITERS <= 2000);
    let train_set = phantom_set(TRAIN_SEEDS, 8);
    let test_set = phantom_set(TEST_SEEDS, 4);
    let spec = desk_spec(1);
    let params = train_stage(&spec, &train_set, C4_ITERS, 7);
    let docs = mean_docs_single(&spec, &params, &test_set, DESK_PATCH / 2);
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 7200.0, "took {elapsed:.0} s (budget 7200)");
    for (name, doc) in ["csf", "gm", "wm"].iter().zip(docs) {
        assert!(doc >= 0.90, "{name} mean test DOC {doc:.4} < 0.90");
    }
    println!(
        "ACCEPTANCE C4 desk-scale-learning: PASS (mean test DOC csf {:.4} / gm {:.4} / wm {:.4} after {C4_ITERS} iters, {:.0} s)",
        docs[0], docs[1], docs[2], elapsed
    );
}

// ------------------------------------------------------------ criterion 5

/// Context ablation: across 3 training seeds on the same split, the
/// two-stage pipeline's mean Dice over the tissues is no worse than the
/// one-stage pipeline's minus 0.005.
#[test]
fn c5_context_ablation_direction() {
    let started = Instant::now();
    let train_set = phantom_set(TRAIN_SEEDS, 8);
    let test_set = phantom_set(TEST_SEEDS, 4);
    let spec1 = desk_spec(1);
    let spec2 = desk_spec(2);
    let opts = PipelineOpts {
        window: DESK_PATCH,
        stride: C5_STRIDE,
        d_max_mm: 20.0,
    };

    for seed in [7u64, 8, 9] {
        let params1 = train_stage(&spec1, &train_set, C5_ITERS, seed);

        // stage-2 training data: context maps from stage-1 predictions
        let train_ctx: Vec<LabeledVolume> = train_set
            .iter()
            .map(|vol| {
                let probs = run_single_stage(&spec1, &params1, vol, &opts).unwrap();
                let seg = argmax_segmentation(&probs);
                let maps = distance_maps(&seg, vol.spacing_mm, opts.d_max_mm).unwrap();
                attach_context(vol, &maps).unwrap()
            })
            .collect();
        let params2 = train_stage(&spec2, &train_ctx, C5_ITERS, seed + 50);

        let one_stage = mean_docs_single(&spec1, &params1, &test_set, C5_STRIDE);
        let mut two_stage = [0.0f64; 3];
        for vol in &test_set {
            let out =
                run_two_stage(&spec1, &params1, &spec2, &params2, vol, &opts).unwrap();
            let seg = morph_cleanup(&argmax_segmentation(&out.stage2), MORPH_MIN_VOXELS);
            let report = evaluate(
                &seg,
                vol.labels.as_ref().unwrap(),
                vol.spacing_mm,
                MhdMode::default(),
            )
            .unwrap();
            for (i, row) in report.rows.iter().enumerate() {
                two_stage[i] += row.doc.clone().unwrap();
            }
        }
        for d in &mut two_stage {
            *d /= test_set.len() as f64;
        }

        let mean1: f64 = one_stage.iter().sum::<f64>() / 3.0;
        let mean2: f64 = two_stage.iter().sum::<f64>() / 3.0;
        assert!(
            mean2 >= mean1 - 0.005,
            "seed {seed}: two-stage mean DOC {mean2:.4} degrades below one-stage {mean1:.4} - 0.005"
        );
        println!(
            "ACCEPTANCE C5 context-ablation (seed {seed}): two-stage {mean2:.4} vs one-stage {mean1:.4}"
        );
    }
    println!(
        "ACCEPTANCE C5 context-ablation-direction: PASS (3 seeds, {:.0} s)",
        started.elapsed().as_secs_f64()
    );
}

// ------------------------------------------------------------ criterion 6

/// Fixed-seed CLI runs are byte-reproducible: loss CSVs from train, label
/// volumes from infer.
#[test]
fn c6_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_vxseg");
    let run = |args: &[&str]| {
        let out = Command::new(bin)
            .args(args)
            .env("VXSG_THREADS", "2")
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{:?}\n{}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let data = dir.path().join("data");
    run(&[
        "phantom-gen", "--count", "2", "--extent", "32", "--seed", "3", "--out",
        data.to_str().unwrap(),
    ]);
    let cfg = dir.path().join("desk.cfg");
    std::fs::write(
        &cfg,
        "levels = 2\nbase_channels = 2\nnum_branches = 2\nalphas = 1.0,0.67\n\
         patch_size = 16\nstride = 8\ncheckpoint_every = 1000\nbase_lr = 0.003\n",
    )
    .unwrap();

    let mut csvs = Vec::new();
    let mut segs = Vec::new();
    for tag in ["x", "y"] {
        let out_dir = dir.path().join(format!("run_{tag}"));
        run(&[
            "train",
            "--stage",
            "1",
            "--config",
            cfg.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--iters",
            "10",
            "--seed",
            "1",
        ]);
        csvs.push(std::fs::read(out_dir.join("loss_stage1.csv")).unwrap());
        let seg_dir = dir.path().join(format!("seg_{tag}"));
        run(&[
            "infer",
            "--config",
            cfg.to_str().unwrap(),
            "--ckpt1",
            out_dir.join("stage1_final.ckpt").to_str().unwrap(),
            "--in",
            data.join("vol_000.json").to_str().unwrap(),
            "--out",
            seg_dir.to_str().unwrap(),
        ]);
        segs.push(std::fs::read(seg_dir.join("vol_000_seg.labels.raw")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "loss CSVs differ between identical runs");
    assert_eq!(segs[0], segs[1], "label volumes differ between identical runs");
    println!(
        "ACCEPTANCE C6 determinism: PASS (loss CSV {} bytes and label volume {} bytes byte-identical)",
        csvs[0].len(),
        segs[0].len()
    );
}

// ------------------------------------------------------------ criterion 7

/// Stitching invariance: with a voxel-pure stub network the stitched
/// output is independent of stride (64 vs 32 vs 16) to 1e-6 per voxel.
#[test]
fn c7_stitching_invariance() {
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
        ) -> vxseg::VxResult<Tensor<f32>> {
            let patch = crop(volume, corner, size)?;
            let t1 = &patch.modalities[0].data;
            let t2 = &patch.modalities[1].data;
            let vox = size * size * size;
            let mut data = vec![0.0f32; 4 * vox];
            for v in 0..vox {
                let (a, b) = (t1.data()[v], t2.data()[v]);
                let raw = [
                    (a - b).abs() + 0.05,
                    (a + b).abs() + 0.05,
                    a.abs() + 0.05,
                    b.abs() + 0.05,
                ];
                let s: f32 = raw.iter().sum();
                for c in 0..4 {
                    data[c * vox + v] = raw[c] / s;
                }
            }
            Tensor::new(vec![4, size, size, size], data)
        }
    }

    let volume = generate_phantom(5, 128, PHANTOM_NOISE, Contrast::Isointense).unwrap();
    let reference = {
        let plan = SlidingWindowPlan::new([128; 3], 64, 64).unwrap();
        stitch_inference(&VoxelStub, &volume, &plan).unwrap()
    };
    let mut max_diff = 0.0f64;
    for stride in [32usize, 16] {
        let plan = SlidingWindowPlan::new([128; 3], 64, stride).unwrap();
        let pv = stitch_inference(&VoxelStub, &volume, &plan).unwrap();
        max_diff = max_diff.max(pv.probs.max_abs_diff(&reference.probs));
    }
    assert!(max_diff <= 1e-6, "stride dependence: max diff {max_diff}");
    println!(
        "ACCEPTANCE C7 stitching-invariance: PASS (max per-voxel deviation {max_diff:.2e} across strides 64/32/16)"
    );
}

// ------------------------------------------------------------ criterion 8

/// Partial transfer: initializing the stage-2 T1 encoder from a stage-1
/// checkpoint loads exactly the spec-predicted tensor count, bit-exactly,
/// leaving everything else at its fresh initialization.
#[test]
fn c8_partial_transfer_mechanism() {
    let dir = tempfile::tempdir().unwrap();
    let spec1 = desk_spec(1);
    let spec2 = desk_spec(2);
    let params1 = build_network::<f32>(&spec1, 31).unwrap();
    let ckpt = dir.path().join("stage1.ckpt");
    save_checkpoint(&params1, None, &ckpt).unwrap();

    let fresh = build_network::<f32>(&spec2, 32).unwrap();
    let mut params2 = fresh.clone();
    let report = load_checkpoint_partial(&ckpt, &mut params2, "main/enc_t1/*").unwrap();

    let expected = spec2.encoder_tensor_count("t1");
    assert_eq!(
        report.loaded_count(),
        expected,
        "loaded {} tensors, spec predicts {expected}",
        report.loaded_count()
    );
    assert!(report.skipped.is_empty());
    for p in params2.iter() {
        if p.name.starts_with("main/enc_t1/") {
            let source = params1.get(&p.name).unwrap();
            assert_eq!(
                p.value.data(),
                source.value.data(),
                "{} not bit-exact",
                p.name
            );
        } else {
            let untouched = fresh.get(&p.name).unwrap();
            assert_eq!(
                p.value.data(),
                untouched.value.data(),
                "{} should be untouched",
                p.name
            );
        }
    }
    println!(
        "ACCEPTANCE C8 partial-transfer-mechanism: PASS ({expected} T1-encoder tensors loaded bit-exactly, remainder untouched)"
    );
}
