//! Run configuration: defaults, an optional key = value file, then flag
//! overrides, in that order. The effective configuration is echoed
//! verbatim to the run log so every run is self-describing.

use std::path::Path;

use vxseg::error::{VxError, VxResult};
use vxseg::net::{NetworkSpec, StreamSpec};
use vxseg::train::{LossConfig, OptimConfig, TrainSettings};
use vxseg::volume::Contrast;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub levels: usize,
    pub base_channels: usize,
    pub num_classes: usize,
    pub num_branches: usize,
    pub alphas: Vec<f64>,
    pub lambda: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub base_lr: f64,
    pub lr_halving_period: u64,
    pub iterations: u64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub stride: usize,
    pub morph_min_voxels: usize,
    pub mhd_percentile: f64,
    pub d_max_mm: f64,
    pub noise: f64,
    pub contrast: Contrast,
    pub extent: usize,
    pub count: usize,
    pub stage1_checkpoint: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            levels: 3,
            base_channels: 16,
            num_classes: 4,
            num_branches: 3,
            alphas: vec![1.0, 0.67, 0.33],
            lambda: 0.005,
            momentum: 0.9,
            weight_decay: 0.005,
            base_lr: 1e-3,
            lr_halving_period: 3000,
            iterations: 2000,
            batch_size: 1,
            patch_size: 64,
            checkpoint_every: 500,
            seed: 0,
            stride: 32,
            morph_min_voxels: 64,
            mhd_percentile: 95.0,
            d_max_mm: 20.0,
            noise: 0.04,
            contrast: Contrast::Isointense,
            extent: 64,
            count: 12,
            stage1_checkpoint: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> VxResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| VxError::io(path.display().to_string(), e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> VxResult<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                VxError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| VxError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> VxResult<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> VxResult<T> {
            v.parse::<T>()
                .map_err(|_| VxError::Config(format!("bad value '{v}' for {key}")))
        }
        match key {
            "levels" => self.levels = num(key, value)?,
            "base_channels" => self.base_channels = num(key, value)?,
            "num_classes" => self.num_classes = num(key, value)?,
            "num_branches" => self.num_branches = num(key, value)?,
            "alphas" => {
                self.alphas = value
                    .split(',')
                    .map(|p| num::<f64>(key, p.trim()))
                    .collect::<VxResult<Vec<f64>>>()?;
            }
            "lambda" => self.lambda = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "base_lr" => self.base_lr = num(key, value)?,
            "lr_halving_period" => self.lr_halving_period = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "patch_size" => self.patch_size = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "stride" => self.stride = num(key, value)?,
            "morph_min_voxels" => self.morph_min_voxels = num(key, value)?,
            "mhd_percentile" => self.mhd_percentile = num(key, value)?,
            "d_max_mm" => self.d_max_mm = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "contrast" => self.contrast = value.parse()?,
            "extent" => self.extent = num(key, value)?,
            "count" => self.count = num(key, value)?,
            "stage1_checkpoint" => self.stage1_checkpoint = Some(value.to_string()),
            other => return Err(VxError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// The effective configuration, echoed verbatim into the run log.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("levels = {}\n", self.levels));
        s.push_str(&format!("base_channels = {}\n", self.base_channels));
        s.push_str(&format!("num_classes = {}\n", self.num_classes));
        s.push_str(&format!("num_branches = {}\n", self.num_branches));
        let alphas = self
            .alphas
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(",");
        s.push_str(&format!("alphas = {alphas}\n"));
        s.push_str(&format!("lambda = {}\n", self.lambda));
        s.push_str(&format!("momentum = {}\n", self.momentum));
        s.push_str(&format!("weight_decay = {}\n", self.weight_decay));
        s.push_str(&format!("base_lr = {}\n", self.base_lr));
        s.push_str(&format!("lr_halving_period = {}\n", self.lr_halving_period));
        s.push_str(&format!("iterations = {}\n", self.iterations));
        s.push_str(&format!("batch_size = {}\n", self.batch_size));
        s.push_str(&format!("patch_size = {}\n", self.patch_size));
        s.push_str(&format!("checkpoint_every = {}\n", self.checkpoint_every));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("stride = {}\n", self.stride));
        s.push_str(&format!("morph_min_voxels = {}\n", self.morph_min_voxels));
        s.push_str(&format!("mhd_percentile = {}\n", self.mhd_percentile));
        s.push_str(&format!("d_max_mm = {}\n", self.d_max_mm));
        s.push_str(&format!("noise = {}\n", self.noise));
        s.push_str(&format!("contrast = {}\n", self.contrast));
        s.push_str(&format!("extent = {}\n", self.extent));
        s.push_str(&format!("count = {}\n", self.count));
        if let Some(c) = &self.stage1_checkpoint {
            s.push_str(&format!("stage1_checkpoint = {c}\n"));
        }
        s
    }

    /// Network topology for the given pipeline stage.
    pub fn network_spec(&self, stage: u8) -> VxResult<NetworkSpec> {
        let mut streams = vec![
            StreamSpec {
                name: "t1".into(),
                in_channels: 1,
            },
            StreamSpec {
                name: "t2".into(),
                in_channels: 1,
            },
        ];
        if stage == 2 {
            streams.push(StreamSpec {
                name: "context".into(),
                in_channels: 3,
            });
        }
        let spec = NetworkSpec {
            streams,
            levels: self.levels,
            base_channels: self.base_channels,
            num_classes: self.num_classes,
            num_branches: self.num_branches,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            base_lr: self.base_lr,
            lr_halving_period: self.lr_halving_period,
        }
    }

    pub fn loss(&self, num_branches: usize) -> VxResult<LossConfig> {
        if self.alphas.len() < num_branches {
            return Err(VxError::Config(format!(
                "{num_branches} branches need {num_branches} alphas, config has {}",
                self.alphas.len()
            )));
        }
        Ok(LossConfig {
            alphas: self.alphas[..num_branches].to_vec(),
            lambda: self.lambda,
        })
    }

    pub fn train_settings(&self, stage: u8, out_dir: Option<std::path::PathBuf>) -> VxResult<TrainSettings> {
        Ok(TrainSettings {
            iterations: self.iterations,
            batch_size: self.batch_size,
            patch_size: self.patch_size,
            loss: self.loss(self.num_branches)?,
            optim: self.optim(),
            checkpoint_every: self.checkpoint_every,
            seed: self.seed,
            out_dir,
            stage,
        })
    }
}
