//! Network hyperparameters and their human-readable config format.

use std::path::Path;

use crate::error::{VxError, VxResult};
use crate::net::params::ParamKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSpec {
    pub name: String,
    pub in_channels: usize,
}

/// Topology of one network: encoder stream list, downsampling depth,
/// channel widths, class count and number of classifier branches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub streams: Vec<StreamSpec>,
    /// Number of encoder downsamplings.
    pub levels: usize,
    /// Channels at level 0; doubles per level.
    pub base_channels: usize,
    pub num_classes: usize,
    /// Classifier branches; branch m predicts at scale 1/2^m.
    pub num_branches: usize,
}

impl NetworkSpec {
    /// Stage-1 network: one encoder stream per MR modality.
    pub fn fcn1() -> Self {
        NetworkSpec {
            streams: vec![
                StreamSpec {
                    name: "t1".into(),
                    in_channels: 1,
                },
                StreamSpec {
                    name: "t2".into(),
                    in_channels: 1,
                },
            ],
            levels: 3,
            base_channels: 16,
            num_classes: 4,
            num_branches: 3,
        }
    }

    /// Stage-2 network: the modality streams plus a context stream carrying
    /// one distance map per tissue.
    pub fn fcn2() -> Self {
        let mut spec = Self::fcn1();
        spec.streams.push(StreamSpec {
            name: "context".into(),
            in_channels: 3,
        });
        spec
    }

    pub fn validate(&self) -> VxResult<()> {
        if self.streams.is_empty() {
            return Err(VxError::Config("network needs at least one stream".into()));
        }
        for s in &self.streams {
            if s.in_channels == 0 {
                return Err(VxError::Config(format!(
                    "stream '{}' must have at least one input channel",
                    s.name
                )));
            }
            if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(VxError::Config(format!(
                    "stream name '{}' must be non-empty alphanumeric/underscore",
                    s.name
                )));
            }
        }
        if self.levels == 0 {
            return Err(VxError::Config("levels must be >= 1".into()));
        }
        if self.base_channels == 0 {
            return Err(VxError::Config("base_channels must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(VxError::Config("num_classes must be >= 2".into()));
        }
        if self.num_branches == 0 || self.num_branches > self.levels {
            return Err(VxError::Config(format!(
                "num_branches must be in 1..=levels ({} vs {})",
                self.num_branches, self.levels
            )));
        }
        Ok(())
    }

    /// Channel width at encoder/decoder level `l` (bottleneck = `levels`).
    pub fn channels_at(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Spatial extents must be divisible by this for a forward pass.
    pub fn spatial_divisor(&self) -> usize {
        1 << self.levels
    }

    /// Every parameter of the network in creation order:
    /// (name, shape, kind). This is the single source of truth shared by
    /// the builder and the forward pass.
    pub fn parameter_layout(&self) -> Vec<(String, Vec<usize>, ParamKind)> {
        let mut out = Vec::new();
        // convs inside blocks carry no bias: batch normalization follows
        // immediately and cancels any per-channel shift exactly
        let conv_block = |out: &mut Vec<(String, Vec<usize>, ParamKind)>,
                          prefix: &str,
                          cin: usize,
                          ch: usize| {
            out.push((
                format!("{prefix}/conv0/weight"),
                vec![ch, cin, 3, 3, 3],
                ParamKind::ConvWeight { fan_in: cin * 27 },
            ));
            push_bn(out, &format!("{prefix}/bn0"), ch);
            out.push((
                format!("{prefix}/conv1/weight"),
                vec![ch, ch, 3, 3, 3],
                ParamKind::ConvWeight { fan_in: ch * 27 },
            ));
            push_bn(out, &format!("{prefix}/bn1"), ch);
        };
        fn push_bn(out: &mut Vec<(String, Vec<usize>, ParamKind)>, prefix: &str, ch: usize) {
            out.push((format!("{prefix}/gamma"), vec![ch], ParamKind::BnGamma));
            out.push((format!("{prefix}/beta"), vec![ch], ParamKind::BnBeta));
            out.push((
                format!("{prefix}/running_mean"),
                vec![ch],
                ParamKind::BnRunningMean,
            ));
            out.push((
                format!("{prefix}/running_var"),
                vec![ch],
                ParamKind::BnRunningVar,
            ));
        }

        for stream in &self.streams {
            let mut cin = stream.in_channels;
            for l in 0..self.levels {
                let ch = self.channels_at(l);
                conv_block(
                    &mut out,
                    &format!("main/enc_{}/level{l}", stream.name),
                    cin,
                    ch,
                );
                cin = ch;
            }
        }
        // bottleneck fuses the pooled top-level features of all streams
        let fused_in = self.streams.len() * self.channels_at(self.levels - 1);
        let bottleneck_ch = self.channels_at(self.levels);
        conv_block(&mut out, "main/bottleneck", fused_in, bottleneck_ch);

        for l in (0..self.levels).rev() {
            let ch = self.channels_at(l);
            let ch_in = self.channels_at(l + 1);
            out.push((
                format!("main/dec/level{l}/upconv/weight"),
                vec![ch_in, ch, 2, 2, 2],
                ParamKind::ConvWeight { fan_in: ch_in * 8 },
            ));
            push_bn(&mut out, &format!("main/dec/level{l}/bn_up"), ch);
            // decoder block sees the upsampled features plus one long skip
            // per stream at this resolution
            let cat_in = ch * (1 + self.streams.len());
            conv_block(&mut out, &format!("main/dec/level{l}"), cat_in, ch);
        }

        for m in 0..self.num_branches {
            let ch = self.channels_at(m);
            out.push((
                format!("branch{m}/classifier/weight"),
                vec![self.num_classes, ch],
                ParamKind::ConvWeight { fan_in: ch },
            ));
            out.push((
                format!("branch{m}/classifier/bias"),
                vec![self.num_classes],
                ParamKind::Bias,
            ));
        }
        out
    }

    /// Total trainable scalar count.
    pub fn trainable_parameter_count(&self) -> usize {
        self.parameter_layout()
            .iter()
            .filter(|(_, _, k)| k.trainable())
            .map(|(_, shape, _)| shape.iter().product::<usize>())
            .sum()
    }

    /// Number of parameter tensors (including running statistics) whose
    /// names fall under the given stream's encoder prefix. This is what a
    /// partial checkpoint load of that encoder is expected to match.
    pub fn encoder_tensor_count(&self, stream: &str) -> usize {
        self.parameter_layout()
            .iter()
            .filter(|(name, _, _)| name.starts_with(&format!("main/enc_{stream}/")))
            .count()
    }

    pub fn to_config_string(&self) -> String {
        let streams = self
            .streams
            .iter()
            .map(|s| format!("{}:{}", s.name, s.in_channels))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "streams = {streams}\nlevels = {}\nbase_channels = {}\nnum_classes = {}\nnum_branches = {}\n",
            self.levels, self.base_channels, self.num_classes, self.num_branches
        )
    }

    pub fn from_config_str(text: &str) -> VxResult<Self> {
        let mut spec = NetworkSpec {
            streams: Vec::new(),
            levels: 3,
            base_channels: 16,
            num_classes: 4,
            num_branches: 3,
        };
        let mut saw_streams = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                VxError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| VxError::Config(format!("line {}: bad number '{v}'", lineno + 1)))
            };
            match key {
                "streams" => {
                    saw_streams = true;
                    spec.streams.clear();
                    for part in value.split(',') {
                        let part = part.trim();
                        if part.is_empty() {
                            continue;
                        }
                        let (name, ch) = part.split_once(':').ok_or_else(|| {
                            VxError::Config(format!(
                                "line {}: stream must be name:channels, got '{part}'",
                                lineno + 1
                            ))
                        })?;
                        spec.streams.push(StreamSpec {
                            name: name.trim().to_string(),
                            in_channels: parse_usize(ch.trim())?,
                        });
                    }
                }
                "levels" => spec.levels = parse_usize(value)?,
                "base_channels" => spec.base_channels = parse_usize(value)?,
                "num_classes" => spec.num_classes = parse_usize(value)?,
                "num_branches" => spec.num_branches = parse_usize(value)?,
                other => {
                    return Err(VxError::Config(format!(
                        "line {}: unknown network key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        if !saw_streams {
            spec.streams = Self::fcn1().streams;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> VxResult<()> {
        std::fs::write(path, self.to_config_string())
            .map_err(|e| VxError::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> VxResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| VxError::io(path.display().to_string(), e))?;
        Self::from_config_str(&text)
    }
}
