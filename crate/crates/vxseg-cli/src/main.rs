//! vxseg: context-guided multi-stream 3D FCN segmentation toolkit.
//!
//! Subcommands: phantom-gen, train, infer, eval, gradcheck. Logs go to
//! standard output; machine artifacts go to files only; every error is a
//! single stderr line with a stable code and a nonzero exit status.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{eval, gradcheck, infer, phantom, train};
use config::RunConfig;
use vxseg::error::{VxError, VxResult};
use vxseg::infer::MhdMode;

#[derive(Parser)]
#[command(
    name = "vxseg",
    version,
    about = "Volumetric tissue segmentation with context-guided multi-stream 3D FCNs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic labeled phantom volumes in the native format.
    PhantomGen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        extent: Option<usize>,
        /// "normal" or "isointense"
        #[arg(long)]
        contrast: Option<String>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the stage-1 or stage-2 network on a directory of volumes.
    Train {
        /// Pipeline stage: 1 (modalities) or 2 (modalities + context).
        #[arg(long)]
        stage: u8,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iters: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue a run from a checkpoint (parameters + optimizer state).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Initialize a parameter subset from another checkpoint.
        #[arg(long = "init-from")]
        init_from: Option<PathBuf>,
        /// Name filter for --init-from ('*' wildcards), default "*".
        #[arg(long = "init-filter", default_value = "*")]
        init_filter: String,
        /// Stage-1 checkpoint that provides context maps (stage 2 only).
        #[arg(long = "stage1-ckpt")]
        stage1_ckpt: Option<PathBuf>,
    },
    /// Segment a volume with one- or two-stage inference plus morphology.
    Infer {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt1: PathBuf,
        #[arg(long)]
        ckpt2: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stride: Option<usize>,
        /// Also write the final probability volume.
        #[arg(long = "save-probs")]
        save_probs: bool,
        /// Also write the stage-2 distance maps.
        #[arg(long = "save-maps")]
        save_maps: bool,
    },
    /// Evaluate predicted label volumes against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// Percentile of the symmetric Hausdorff distance.
        #[arg(long)]
        percentile: Option<f64>,
        /// Use the plain maximum instead of a percentile.
        #[arg(long = "mhd-max")]
        mhd_max: bool,
    },
    /// Finite-difference gradient check of the full network (f64).
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long, default_value_t = 4)]
        base: usize,
        #[arg(long, default_value_t = 16)]
        extent: usize,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Cap on checked coordinates per tensor (default: all).
        #[arg(long = "max-coords")]
        max_coords: Option<usize>,
    },
}

fn load_config(path: &Option<PathBuf>) -> VxResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn echo_config(cfg: &RunConfig) {
    println!("effective configuration:");
    for line in cfg.echo().lines() {
        println!("  {line}");
    }
}

fn dispatch(cli: Cli) -> VxResult<()> {
    match cli.command {
        Command::PhantomGen {
            config,
            count,
            extent,
            contrast,
            noise,
            seed,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(c) = count {
                cfg.count = c;
            }
            if let Some(e) = extent {
                cfg.extent = e;
            }
            if let Some(c) = &contrast {
                cfg.contrast = c.parse()?;
            }
            if let Some(n) = noise {
                cfg.noise = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            echo_config(&cfg);
            phantom::run(&cfg, &out)
        }
        Command::Train {
            stage,
            config,
            data,
            out,
            iters,
            seed,
            resume,
            init_from,
            init_filter,
            stage1_ckpt,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(i) = iters {
                cfg.iterations = i;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            echo_config(&cfg);
            train::run(
                &cfg,
                &train::TrainArgs {
                    stage,
                    data: &data,
                    out: &out,
                    resume: resume.as_deref(),
                    init_from: init_from.as_deref(),
                    init_filter: &init_filter,
                    stage1_ckpt: stage1_ckpt.as_deref(),
                },
            )
        }
        Command::Infer {
            config,
            ckpt1,
            ckpt2,
            input,
            out,
            stride,
            save_probs,
            save_maps,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = stride {
                cfg.stride = s;
            }
            echo_config(&cfg);
            infer::run(
                &cfg,
                &infer::InferArgs {
                    ckpt1: &ckpt1,
                    ckpt2: ckpt2.as_deref(),
                    input: &input,
                    out: &out,
                    save_probs,
                    save_maps,
                },
            )
        }
        Command::Eval {
            pred,
            truth,
            csv,
            percentile,
            mhd_max,
        } => {
            let mode = if mhd_max {
                MhdMode::Max
            } else {
                MhdMode::Percentile(percentile.unwrap_or(95.0))
            };
            eval::run(&pred, &truth, &csv, mode)
        }
        Command::Gradcheck {
            config,
            levels,
            base,
            extent,
            step,
            tolerance,
            seed,
            max_coords,
        } => {
            let mut cfg = load_config(&config)?;
            cfg.levels = levels;
            cfg.base_channels = base;
            cfg.num_branches = levels.min(cfg.num_branches);
            if let Some(s) = seed {
                cfg.seed = s;
            }
            echo_config(&cfg);
            let pass = gradcheck::run(
                &cfg,
                &gradcheck::GradCheckArgs {
                    extent,
                    step,
                    tolerance,
                    max_coords,
                },
            )?;
            if !pass {
                return Err(VxError::Train(
                    "gradient check failed; see the report above".into(),
                ));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stdout)
        .format_timestamp(None)
        .init();
    vxseg::threads::init_thread_pool_from_env();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
