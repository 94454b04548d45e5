//! Forward pass: builds the autodiff graph for one batch of stream inputs
//! and returns the per-branch logit nodes.

use std::collections::HashMap;

use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::graph::{Graph, NodeId};
use crate::net::params::NetworkParams;
use crate::net::spec::NetworkSpec;
use crate::net::{BN_EPS, BN_MOMENTUM};
use crate::tensor::Tensor;
use crate::Mode;

#[derive(Debug, Clone, Copy)]
pub struct ForwardOpts {
    pub mode: Mode,
    /// Debug switch: feed zeros instead of the encoder features into the
    /// decoder's long skip concatenations (shapes preserved).
    pub zero_long_skips: bool,
    /// Hash data-dependent branch decisions (see gradient checking).
    pub track_decisions: bool,
}

impl ForwardOpts {
    pub fn train() -> Self {
        ForwardOpts {
            mode: Mode::Train,
            zero_long_skips: false,
            track_decisions: false,
        }
    }

    pub fn eval() -> Self {
        ForwardOpts {
            mode: Mode::Eval,
            zero_long_skips: false,
            track_decisions: false,
        }
    }
}

/// A train-mode batchnorm application: which graph node carries the batch
/// statistics, and which parameter slots hold the running buffers.
#[derive(Debug, Clone, Copy)]
pub struct BnHook {
    pub node: NodeId,
    pub mean_param: usize,
    pub var_param: usize,
}

pub struct ForwardPass<T: Scalar> {
    pub graph: Graph<T>,
    /// Branch m emits logits of shape [N, K, D/2^m, H/2^m, W/2^m].
    pub branch_logits: Vec<NodeId>,
    /// Pending running-statistics updates (train mode only).
    pub bn_hooks: Vec<BnHook>,
    /// Parameter slots used by this pass and their leaf nodes, in slot order.
    pub param_nodes: Vec<(usize, NodeId)>,
}

impl<T: Scalar> ForwardPass<T> {
    /// Folds the recorded batch statistics into the running buffers:
    /// r <- (1 - momentum) * r + momentum * batch.
    pub fn apply_bn_updates(&self, params: &mut NetworkParams<T>) {
        let momentum = T::cast_from(BN_MOMENTUM);
        let keep = T::one() - momentum;
        for hook in &self.bn_hooks {
            let (mean, var) = self
                .graph
                .bn_batch_stats(hook.node)
                .expect("hook points at a train-mode batchnorm node");
            let (mean, var) = (mean.to_vec(), var.to_vec());
            for (r, m) in params
                .by_index_mut(hook.mean_param)
                .value
                .data_mut()
                .iter_mut()
                .zip(mean)
            {
                *r = keep * *r + momentum * m;
            }
            for (r, v) in params
                .by_index_mut(hook.var_param)
                .value
                .data_mut()
                .iter_mut()
                .zip(var)
            {
                *r = keep * *r + momentum * v;
            }
        }
    }
}

struct Builder<'a, T: Scalar> {
    graph: Graph<T>,
    params: &'a NetworkParams<T>,
    param_nodes: HashMap<usize, NodeId>,
    zero_bias: HashMap<usize, NodeId>,
    bn_hooks: Vec<BnHook>,
    mode: Mode,
}

impl<'a, T: Scalar> Builder<'a, T> {
    fn param(&mut self, name: &str) -> VxResult<NodeId> {
        let idx = self
            .params
            .index_of(name)
            .ok_or_else(|| VxError::InvalidArgument(format!("missing parameter '{name}'")))?;
        if let Some(&node) = self.param_nodes.get(&idx) {
            return Ok(node);
        }
        let node = self
            .graph
            .param_leaf(self.params.by_index(idx).value.clone(), idx);
        self.param_nodes.insert(idx, node);
        Ok(node)
    }

    fn batchnorm(&mut self, x: NodeId, prefix: &str) -> VxResult<NodeId> {
        let gamma = self.param(&format!("{prefix}/gamma"))?;
        let beta = self.param(&format!("{prefix}/beta"))?;
        match self.mode {
            Mode::Train => {
                let node = self.graph.batchnorm_train(x, gamma, beta, BN_EPS)?;
                self.bn_hooks.push(BnHook {
                    node,
                    mean_param: self
                        .params
                        .index_of(&format!("{prefix}/running_mean"))
                        .expect("running_mean exists"),
                    var_param: self
                        .params
                        .index_of(&format!("{prefix}/running_var"))
                        .expect("running_var exists"),
                });
                Ok(node)
            }
            Mode::Eval => {
                let rm = self.param(&format!("{prefix}/running_mean"))?;
                let rv = self.param(&format!("{prefix}/running_var"))?;
                self.graph.batchnorm_eval(x, gamma, beta, rm, rv, BN_EPS)
            }
        }
    }

    /// Constant zero bias for block convs (batchnorm right after makes a
    /// learned bias inert, so none is created).
    fn zero_bias(&mut self, channels: usize) -> NodeId {
        if let Some(&node) = self.zero_bias.get(&channels) {
            return node;
        }
        let node = self.graph.leaf(Tensor::zeros(&[channels]));
        self.zero_bias.insert(channels, node);
        node
    }

    /// Two conv+BN+ReLU stages with an additive shortcut from the first
    /// stage's output (the short skip).
    fn conv_block(&mut self, x: NodeId, prefix: &str) -> VxResult<NodeId> {
        let w0 = self.param(&format!("{prefix}/conv0/weight"))?;
        let ch0 = self.params.get(&format!("{prefix}/conv0/weight")).unwrap().value.shape()[0];
        let b0 = self.zero_bias(ch0);
        let c0 = self.graph.conv3d(x, w0, b0)?;
        let n0 = self.batchnorm(c0, &format!("{prefix}/bn0"))?;
        let y0 = self.graph.relu(n0);
        let w1 = self.param(&format!("{prefix}/conv1/weight"))?;
        let b1 = self.zero_bias(ch0);
        let c1 = self.graph.conv3d(y0, w1, b1)?;
        let n1 = self.batchnorm(c1, &format!("{prefix}/bn1"))?;
        let s = self.graph.add(n1, y0)?;
        Ok(self.graph.relu(s))
    }
}

/// Runs the network on one input tensor per stream (shapes
/// [N, stream channels, D, H, W], all sharing N and the spatial extents).
pub fn forward<T: Scalar>(
    spec: &NetworkSpec,
    params: &NetworkParams<T>,
    inputs: &[Tensor<T>],
    opts: &ForwardOpts,
) -> VxResult<ForwardPass<T>> {
    spec.validate()?;
    if inputs.len() != spec.streams.len() {
        return Err(VxError::InvalidArgument(format!(
            "expected {} stream inputs, got {}",
            spec.streams.len(),
            inputs.len()
        )));
    }
    let [n, _, d, h, w] = inputs[0].dims5()?;
    for (input, stream) in inputs.iter().zip(&spec.streams) {
        let [ni, c, di, hi, wi] = input.dims5()?;
        if c != stream.in_channels || ni != n || (di, hi, wi) != (d, h, w) {
            return Err(VxError::ShapeMismatch {
                context: format!("stream '{}' input", stream.name),
                lhs: input.shape().to_vec(),
                rhs: vec![n, stream.in_channels, d, h, w],
            });
        }
    }
    let div = spec.spatial_divisor();
    if d % div != 0 || h % div != 0 || w % div != 0 {
        return Err(VxError::InvalidArgument(format!(
            "spatial extents ({d}, {h}, {w}) must be divisible by 2^levels = {div}"
        )));
    }

    let graph = if opts.track_decisions {
        Graph::with_decision_tracking()
    } else {
        Graph::new()
    };
    let mut b = Builder {
        graph,
        params,
        param_nodes: HashMap::new(),
        zero_bias: HashMap::new(),
        bn_hooks: Vec::new(),
        mode: opts.mode,
    };

    // encoders: per stream, conv block then pool at each level
    let mut skips: Vec<Vec<NodeId>> = Vec::with_capacity(spec.streams.len());
    let mut bottoms: Vec<NodeId> = Vec::with_capacity(spec.streams.len());
    for (s, stream) in spec.streams.iter().enumerate() {
        let mut x = b.graph.leaf(inputs[s].clone());
        let mut stream_skips = Vec::with_capacity(spec.levels);
        for l in 0..spec.levels {
            let out = b.conv_block(x, &format!("main/enc_{}/level{l}", stream.name))?;
            stream_skips.push(out);
            x = b.graph.maxpool3d(out)?;
        }
        skips.push(stream_skips);
        bottoms.push(x);
    }

    // fuse high-level features of all streams at the bottleneck
    let fused = b.graph.concat_channels(&bottoms)?;
    let mut x = b.conv_block(fused, "main/bottleneck")?;

    // decoder with long skips from every stream at matching resolution
    let mut dec_outs: Vec<NodeId> = vec![0; spec.levels];
    for l in (0..spec.levels).rev() {
        let wu = b.param(&format!("main/dec/level{l}/upconv/weight"))?;
        let up = b.graph.upconv3d(x, wu)?;
        let bu = b.batchnorm(up, &format!("main/dec/level{l}/bn_up"))?;
        let ur = b.graph.relu(bu);
        let mut cat_inputs = vec![ur];
        for stream_skips in &skips {
            let skip = stream_skips[l];
            if opts.zero_long_skips {
                let zeros = Tensor::zeros(b.graph.value(skip).shape());
                cat_inputs.push(b.graph.leaf(zeros));
            } else {
                cat_inputs.push(skip);
            }
        }
        let cat = b.graph.concat_channels(&cat_inputs)?;
        x = b.conv_block(cat, &format!("main/dec/level{l}"))?;
        dec_outs[l] = x;
    }

    // classifier branches at scales 1, 1/2, ..., 1/2^(M-1)
    let mut branch_logits = Vec::with_capacity(spec.num_branches);
    for m in 0..spec.num_branches {
        let wc = b.param(&format!("branch{m}/classifier/weight"))?;
        let bc = b.param(&format!("branch{m}/classifier/bias"))?;
        branch_logits.push(b.graph.conv1x1(dec_outs[m], wc, bc)?);
    }

    let mut param_nodes: Vec<(usize, NodeId)> = b.param_nodes.into_iter().collect();
    param_nodes.sort_unstable_by_key(|&(idx, _)| idx);

    Ok(ForwardPass {
        graph: b.graph,
        branch_logits,
        bn_hooks: b.bn_hooks,
        param_nodes,
    })
}
