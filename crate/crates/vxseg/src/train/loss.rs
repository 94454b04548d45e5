//! Multi-scale deeply supervised loss: per-scale mean cross-entropy of the
//! branch outputs against nearest-neighbor downsampled labels, an
//! alpha-weighted sum, and an L2 penalty over the network weights.

use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::graph::{Graph, NodeId};
use crate::net::NetworkParams;
use crate::tensor::{IntGrid, Tensor};

#[derive(Debug, Clone)]
pub struct LossConfig {
    /// Branch weights alpha_0..alpha_{M-1}; alpha_0 is the main output.
    pub alphas: Vec<f64>,
    /// L2 regularization strength over conv/classifier weights.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alphas: vec![1.0, 0.67, 0.33],
            lambda: 0.005,
        }
    }
}

impl LossConfig {
    /// alpha_0 must be 1.0 (the main output anchors the scale); the others
    /// must be non-negative — zero switches a branch off, which the
    /// single-scale reduction property relies on.
    pub fn validate(&self) -> VxResult<()> {
        match self.alphas.first() {
            Some(&a0) if a0 == 1.0 => {}
            _ => {
                return Err(VxError::Config(
                    "loss alphas must start with alpha_0 = 1.0".into(),
                ))
            }
        }
        if self.alphas.iter().any(|&a| a < 0.0 || !a.is_finite()) {
            return Err(VxError::Config(
                "loss alphas must be finite and >= 0".into(),
            ));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(VxError::Config("lambda must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Nearest-neighbor downsampling by a factor of 2^m per spatial axis,
/// sampling voxel (2^m z, 2^m y, 2^m x). Accepts [D,H,W] or [N,D,H,W]
/// grids; a leading batch axis is preserved.
pub fn downsample_labels(labels: &IntGrid, m: u32) -> VxResult<IntGrid> {
    let (batch, [d, h, w]) = match labels.shape() {
        &[d, h, w] => (None, [d, h, w]),
        &[n, d, h, w] => (Some(n), [d, h, w]),
        other => {
            return Err(VxError::InvalidArgument(format!(
                "labels must be rank 3 or 4, shape is {other:?}"
            )))
        }
    };
    let s = 1usize << m;
    if d % s != 0 || h % s != 0 || w % s != 0 {
        return Err(VxError::InvalidArgument(format!(
            "label extents ({d}, {h}, {w}) not divisible by 2^{m}"
        )));
    }
    if s == 1 {
        return Ok(labels.clone());
    }
    let (od, oh, ow) = (d / s, h / s, w / s);
    let n = batch.unwrap_or(1);
    let mut out = Vec::with_capacity(n * od * oh * ow);
    for ni in 0..n {
        let base = ni * d * h * w;
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    out.push(labels.data()[base + ((z * s) * h + y * s) * w + x * s]);
                }
            }
        }
    }
    let shape = match batch {
        Some(n) => vec![n, od, oh, ow],
        None => vec![od, oh, ow],
    };
    IntGrid::new(shape, out)
}

#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: NodeId,
    pub cls: NodeId,
    pub reg: NodeId,
}

/// Builds the loss sub-graph on top of an existing forward pass.
///
/// `branch_logits[m]` must spatially match `downsample_labels(labels, m)`;
/// `reg_weight_nodes` are the leaf nodes of every regularized weight tensor
/// (the lambda term differentiates through them).
pub fn multiscale_loss_nodes<T: Scalar>(
    graph: &mut Graph<T>,
    branch_logits: &[NodeId],
    labels: &IntGrid,
    cfg: &LossConfig,
    reg_weight_nodes: &[NodeId],
) -> VxResult<LossNodes> {
    cfg.validate()?;
    if cfg.alphas.len() < branch_logits.len() {
        return Err(VxError::Config(format!(
            "{} branches but only {} alphas",
            branch_logits.len(),
            cfg.alphas.len()
        )));
    }
    let labels4 = match labels.shape() {
        &[d, h, w] => IntGrid::new(vec![1, d, h, w], labels.data().to_vec())?,
        &[_, _, _, _] => labels.clone(),
        other => {
            return Err(VxError::InvalidArgument(format!(
                "labels must be rank 3 or 4, shape is {other:?}"
            )))
        }
    };

    let mut cls: Option<NodeId> = None;
    for (m, &logits) in branch_logits.iter().enumerate() {
        let ds = downsample_labels(&labels4, m as u32)?;
        let [n, _, d, h, w] = graph.value(logits).dims5()?;
        if ds.shape() != [n, d, h, w] {
            return Err(VxError::ShapeMismatch {
                context: format!("branch {m} logits vs downsampled labels"),
                lhs: graph.value(logits).shape().to_vec(),
                rhs: ds.shape().to_vec(),
            });
        }
        let probs = graph.softmax_channels(logits)?;
        let ce = graph.cross_entropy_mean(probs, ds)?;
        let weighted = graph.scale(ce, T::cast_from(cfg.alphas[m]));
        cls = Some(match cls {
            Some(acc) => graph.add(acc, weighted)?,
            None => weighted,
        });
    }
    let cls = cls.ok_or_else(|| VxError::InvalidArgument("no branch logits".into()))?;

    let reg = if cfg.lambda > 0.0 && !reg_weight_nodes.is_empty() {
        let mut acc: Option<NodeId> = None;
        for &wnode in reg_weight_nodes {
            let sq = graph.sum_squares(wnode);
            acc = Some(match acc {
                Some(a) => graph.add(a, sq)?,
                None => sq,
            });
        }
        graph.scale(acc.unwrap(), T::cast_from(cfg.lambda))
    } else {
        graph.leaf(Tensor::scalar(T::zero()))
    };

    let total = graph.add(cls, reg)?;
    Ok(LossNodes { total, cls, reg })
}

/// Tensor-level evaluation of the loss (no gradients): runs the same graph
/// construction on leaf tensors. `params` supplies the regularized weights.
pub fn multiscale_loss_values<T: Scalar>(
    branch_logits: &[Tensor<T>],
    labels: &IntGrid,
    cfg: &LossConfig,
    params: &NetworkParams<T>,
) -> VxResult<(f64, f64, f64)> {
    let mut graph = Graph::new();
    let logit_nodes: Vec<NodeId> = branch_logits.iter().map(|t| graph.leaf(t.clone())).collect();
    let weight_nodes: Vec<NodeId> = params
        .iter()
        .filter(|p| p.regularized)
        .map(|p| graph.leaf(p.value.clone()))
        .collect();
    let nodes = multiscale_loss_nodes(&mut graph, &logit_nodes, labels, cfg, &weight_nodes)?;
    Ok((
        graph.value(nodes.total).item()?.cast_f64(),
        graph.value(nodes.cls).item()?.cast_f64(),
        graph.value(nodes.reg).item()?.cast_f64(),
    ))
}
