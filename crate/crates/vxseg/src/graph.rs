//! Reverse-mode automatic differentiation over an append-only node arena.
//!
//! Execution is eager: adding an op node computes its output immediately.
//! `backward` then sweeps the arena in reverse index order, which is a
//! valid reverse topological order because inputs always precede their
//! consumers. A graph is confined to one thread; tensors inside it are
//! written once.

use crate::dtype::Scalar;
use crate::error::{VxError, VxResult};
use crate::ops;
use crate::ops::BnSaved;
use crate::tensor::{IntGrid, Tensor};

pub type NodeId = usize;

enum Payload<T: Scalar> {
    /// External tensor; `param` links back to a parameter store slot.
    Leaf { param: Option<usize> },
    /// inputs: [x, weight, bias]
    Conv3d,
    /// inputs: [x, weight, bias]
    Conv1x1,
    /// inputs: [x]
    MaxPool3d { argmax: Vec<u32> },
    /// inputs: [x, weight]
    UpConv3d,
    /// inputs: [x, gamma, beta]
    BnTrain {
        saved: BnSaved<T>,
        batch_mean: Vec<T>,
        batch_var: Vec<T>,
    },
    /// inputs: [x, gamma, beta, running_mean, running_var]
    BnEval { eps: f64 },
    /// inputs: [x]
    Relu,
    /// inputs: [x]
    SoftmaxChannels,
    /// inputs: the concatenated tensors
    ConcatChannels { channels: Vec<usize> },
    /// inputs: [probs]
    CrossEntropyMean { labels: IntGrid },
    /// inputs: [a, b]
    Add,
    /// inputs: [x]
    Scale { factor: T },
    /// inputs: [x]
    SumSquares,
}

struct Node<T: Scalar> {
    payload: Payload<T>,
    inputs: Vec<NodeId>,
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    track_decisions: bool,
    decisions: u64,
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            track_decisions: false,
            decisions: FNV_OFFSET,
        }
    }

    /// Enables hashing of every data-dependent branch decision (ReLU signs,
    /// pool argmax, loss clamping). Two forward passes whose hashes differ
    /// crossed a non-differentiable point somewhere between them.
    pub fn with_decision_tracking() -> Self {
        Graph {
            nodes: Vec::new(),
            track_decisions: true,
            decisions: FNV_OFFSET,
        }
    }

    pub fn decision_hash(&self) -> u64 {
        self.decisions
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.nodes[id].grad.as_ref()
    }

    /// Batch statistics recorded by a train-mode batchnorm node, for the
    /// running-buffer update.
    pub fn bn_batch_stats(&self, id: NodeId) -> Option<(&[T], &[T])> {
        match &self.nodes[id].payload {
            Payload::BnTrain {
                batch_mean,
                batch_var,
                ..
            } => Some((batch_mean, batch_var)),
            _ => None,
        }
    }

    fn push(&mut self, payload: Payload<T>, inputs: Vec<NodeId>, value: Tensor<T>) -> NodeId {
        debug_assert!(inputs.iter().all(|&i| i < self.nodes.len()));
        self.nodes.push(Node {
            payload,
            inputs,
            value,
            grad: None,
        });
        self.nodes.len() - 1
    }

    fn hash_words(&mut self, words: impl Iterator<Item = u64>) {
        let mut h = self.decisions;
        for wrd in words {
            for b in wrd.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(FNV_PRIME);
            }
        }
        self.decisions = h;
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Payload::Leaf { param: None }, vec![], value)
    }

    pub fn param_leaf(&mut self, value: Tensor<T>, param: usize) -> NodeId {
        self.push(Payload::Leaf { param: Some(param) }, vec![], value)
    }

    pub fn conv3d(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> VxResult<NodeId> {
        let out = ops::conv3d_forward(
            &self.nodes[x].value,
            &self.nodes[weight].value,
            &self.nodes[bias].value,
        )?;
        Ok(self.push(Payload::Conv3d, vec![x, weight, bias], out))
    }

    pub fn conv1x1(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> VxResult<NodeId> {
        let out = ops::conv1x1_forward(
            &self.nodes[x].value,
            &self.nodes[weight].value,
            &self.nodes[bias].value,
        )?;
        Ok(self.push(Payload::Conv1x1, vec![x, weight, bias], out))
    }

    pub fn maxpool3d(&mut self, x: NodeId) -> VxResult<NodeId> {
        let (out, argmax) = ops::maxpool3d_forward(&self.nodes[x].value)?;
        if self.track_decisions {
            self.hash_words(argmax.iter().map(|&a| a as u64));
        }
        Ok(self.push(Payload::MaxPool3d { argmax }, vec![x], out))
    }

    pub fn upconv3d(&mut self, x: NodeId, weight: NodeId) -> VxResult<NodeId> {
        let out = ops::upconv3d_forward(&self.nodes[x].value, &self.nodes[weight].value)?;
        Ok(self.push(Payload::UpConv3d, vec![x, weight], out))
    }

    pub fn batchnorm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> VxResult<NodeId> {
        let (out, saved, batch_mean, batch_var) = ops::batchnorm3d_train(
            &self.nodes[x].value,
            &self.nodes[gamma].value,
            &self.nodes[beta].value,
            eps,
        )?;
        Ok(self.push(
            Payload::BnTrain {
                saved,
                batch_mean,
                batch_var,
            },
            vec![x, gamma, beta],
            out,
        ))
    }

    pub fn batchnorm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: NodeId,
        running_var: NodeId,
        eps: f64,
    ) -> VxResult<NodeId> {
        let out = ops::batchnorm3d_eval(
            &self.nodes[x].value,
            &self.nodes[gamma].value,
            &self.nodes[beta].value,
            &self.nodes[running_mean].value,
            &self.nodes[running_var].value,
            eps,
        )?;
        Ok(self.push(
            Payload::BnEval { eps },
            vec![x, gamma, beta, running_mean, running_var],
            out,
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = ops::relu_forward(&self.nodes[x].value);
        if self.track_decisions {
            // pack the activation sign pattern into words
            let mut word = 0u64;
            let mut bit = 0u32;
            let mut words = Vec::with_capacity(out.len() / 64 + 1);
            for &v in out.data() {
                if v > T::zero() {
                    word |= 1 << bit;
                }
                bit += 1;
                if bit == 64 {
                    words.push(word);
                    word = 0;
                    bit = 0;
                }
            }
            words.push(word);
            self.hash_words(words.into_iter());
        }
        self.push(Payload::Relu, vec![x], out)
    }

    pub fn softmax_channels(&mut self, x: NodeId) -> VxResult<NodeId> {
        let out = ops::softmax_channels_forward(&self.nodes[x].value)?;
        Ok(self.push(Payload::SoftmaxChannels, vec![x], out))
    }

    pub fn concat_channels(&mut self, xs: &[NodeId]) -> VxResult<NodeId> {
        let tensors: Vec<&Tensor<T>> = xs.iter().map(|&i| &self.nodes[i].value).collect();
        let channels: Vec<usize> = tensors.iter().map(|t| t.shape()[1]).collect();
        let out = ops::concat_channels_forward(&tensors)?;
        Ok(self.push(Payload::ConcatChannels { channels }, xs.to_vec(), out))
    }

    pub fn cross_entropy_mean(&mut self, probs: NodeId, labels: IntGrid) -> VxResult<NodeId> {
        let loss = ops::cross_entropy_mean_forward(&self.nodes[probs].value, &labels)?;
        if self.track_decisions {
            let lo = T::cast_from(ops::PROB_CLAMP_MIN);
            let clamped: Vec<u64> = self.nodes[probs]
                .value
                .data()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p < lo)
                .map(|(i, _)| i as u64)
                .collect();
            self.hash_words(clamped.into_iter());
        }
        Ok(self.push(
            Payload::CrossEntropyMean { labels },
            vec![probs],
            Tensor::scalar(loss),
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> VxResult<NodeId> {
        let out = ops::add_forward(&self.nodes[a].value, &self.nodes[b].value)?;
        Ok(self.push(Payload::Add, vec![a, b], out))
    }

    pub fn scale(&mut self, x: NodeId, factor: T) -> NodeId {
        let out = ops::scale_forward(&self.nodes[x].value, factor);
        self.push(Payload::Scale { factor }, vec![x], out)
    }

    pub fn sum_squares(&mut self, x: NodeId) -> NodeId {
        let out = ops::sum_squares_forward(&self.nodes[x].value);
        self.push(Payload::SumSquares, vec![x], out)
    }

    fn accumulate(&mut self, id: NodeId, grad: Tensor<T>) {
        match &mut self.nodes[id].grad {
            Some(existing) => {
                for (e, &g) in existing.data_mut().iter_mut().zip(grad.data().iter()) {
                    *e += g;
                }
            }
            slot @ None => *slot = Some(grad),
        }
    }

    /// Reverse sweep from a scalar loss node. Populates `grad` on every node
    /// on a path from a leaf to the loss.
    pub fn backward(&mut self, loss: NodeId) -> VxResult<()> {
        if self.nodes[loss].value.len() != 1 {
            return Err(VxError::InvalidArgument(format!(
                "backward requires a scalar loss node, shape is {:?}",
                self.nodes[loss].value.shape()
            )));
        }
        self.nodes[loss].grad = Some(Tensor::scalar(T::one()));
        for id in (0..=loss).rev() {
            if self.nodes[id].grad.is_none() {
                continue;
            }
            let contribs: Vec<(NodeId, Tensor<T>)> = {
                let node = &self.nodes[id];
                let g = node.grad.as_ref().unwrap();
                let input = |k: usize| &self.nodes[node.inputs[k]].value;
                match &node.payload {
                    Payload::Leaf { .. } => vec![],
                    Payload::Conv3d => {
                        let (gi, gw, gb) = ops::conv3d_backward(input(0), input(1), g)?;
                        vec![
                            (node.inputs[0], gi),
                            (node.inputs[1], gw),
                            (node.inputs[2], gb),
                        ]
                    }
                    Payload::Conv1x1 => {
                        let (gi, gw, gb) = ops::conv1x1_backward(input(0), input(1), g)?;
                        vec![
                            (node.inputs[0], gi),
                            (node.inputs[1], gw),
                            (node.inputs[2], gb),
                        ]
                    }
                    Payload::MaxPool3d { argmax } => {
                        let gi = ops::maxpool3d_backward(input(0).shape(), argmax, g)?;
                        vec![(node.inputs[0], gi)]
                    }
                    Payload::UpConv3d => {
                        let (gi, gw) = ops::upconv3d_backward(input(0), input(1), g)?;
                        vec![(node.inputs[0], gi), (node.inputs[1], gw)]
                    }
                    Payload::BnTrain { saved, .. } => {
                        let (gi, gg, gb) =
                            ops::batchnorm3d_train_backward(input(0), input(1), saved, g)?;
                        vec![
                            (node.inputs[0], gi),
                            (node.inputs[1], gg),
                            (node.inputs[2], gb),
                        ]
                    }
                    Payload::BnEval { eps } => {
                        let (gi, gg, gb) = ops::batchnorm3d_eval_backward(
                            input(0),
                            input(1),
                            input(3),
                            input(4),
                            *eps,
                            g,
                        )?;
                        vec![
                            (node.inputs[0], gi),
                            (node.inputs[1], gg),
                            (node.inputs[2], gb),
                        ]
                    }
                    Payload::Relu => {
                        let gi = ops::relu_backward(&node.value, g);
                        vec![(node.inputs[0], gi)]
                    }
                    Payload::SoftmaxChannels => {
                        let gi = ops::softmax_channels_backward(&node.value, g);
                        vec![(node.inputs[0], gi)]
                    }
                    Payload::ConcatChannels { channels } => {
                        let parts = ops::concat_channels_backward(g, channels);
                        node.inputs.iter().copied().zip(parts).collect()
                    }
                    Payload::CrossEntropyMean { labels } => {
                        let scale = g.item()?;
                        let gi = ops::cross_entropy_mean_backward(input(0), labels, scale);
                        vec![(node.inputs[0], gi)]
                    }
                    Payload::Add => vec![(node.inputs[0], g.clone()), (node.inputs[1], g.clone())],
                    Payload::Scale { factor } => {
                        let gi = ops::scale_forward(g, *factor);
                        vec![(node.inputs[0], gi)]
                    }
                    Payload::SumSquares => {
                        let scale = g.item()? * T::cast_from(2.0);
                        let gi = ops::scale_forward(input(0), scale);
                        vec![(node.inputs[0], gi)]
                    }
                }
            };
            for (nid, t) in contribs {
                debug_assert_eq!(self.nodes[nid].value.shape(), t.shape());
                self.accumulate(nid, t);
            }
        }
        Ok(())
    }

    /// Gradients of all parameter leaves, as (parameter slot, grad) pairs in
    /// leaf creation order. Parameters that did not participate in the loss
    /// report a zero gradient.
    pub fn param_grads(&self) -> Vec<(usize, Tensor<T>)> {
        self.nodes
            .iter()
            .filter_map(|n| match n.payload {
                Payload::Leaf { param: Some(p) } => {
                    let g = n
                        .grad
                        .clone()
                        .unwrap_or_else(|| Tensor::zeros(n.value.shape()));
                    Some((p, g))
                }
                _ => None,
            })
            .collect()
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}
